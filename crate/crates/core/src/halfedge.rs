//! Halfedge forms: two packed scalars per face holding the line integrals of a
//! face vector along the face's first two edges (stored edge directions).
//!
//! The unpacked third value follows from the per-face signed null-sum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky, SparseLu};
use crate::mesh::Mesh;
use crate::operators::{dec_d1, edge_face_average, Masses};
use crate::sparse::{SparseOperator, Space};

/// Packed `(γ1, γ2)` per face.
#[derive(Clone, Debug, PartialEq)]
pub struct HalfedgeForm {
    pub values: DVector<f64>,
}

/// Per-edge mean value `z1` and half-curl `eps`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanCurlForm {
    pub z1: DVector<f64>,
    pub eps: DVector<f64>,
}

impl MeanCurlForm {
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.z1.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.z1[i] } else { self.eps[i - n] })
    }

    pub fn from_stacked(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        MeanCurlForm { z1: x.rows(0, n).into(), eps: x.rows(n, n).into() }
    }
}

/// `P` (`2|F| x 3|F|`): rows are the first two stored edge vectors of each face.
pub fn project_p(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(6 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..2 {
            let e = mesh.edge_vector(mesh.face_edges[f][k]);
            for c in 0..3 {
                t.push((2 * f + k, 3 * f + c, e[c]));
            }
        }
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), 3 * mesh.n_faces(), Space::Gamma, Space::X, &t)
}

/// `P⁻¹` (`3|F| x 2|F|`): `s1 s2 / (2A) [−e2⊥, e1⊥]` with `e⊥ = n x e`.
pub fn project_p_inv(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(6 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let n = mesh.face_normal(f);
        let s = mesh.face_signs[f][0] * mesh.face_signs[f][1] / (2.0 * mesh.face_area(f));
        let e1 = mesh.edge_vector(mesh.face_edges[f][0]);
        let e2 = mesh.edge_vector(mesh.face_edges[f][1]);
        let c1 = -n.cross(&e2) * s;
        let c2 = n.cross(&e1) * s;
        for c in 0..3 {
            t.push((3 * f + c, 2 * f, c1[c]));
            t.push((3 * f + c, 2 * f + 1, c2[c]));
        }
    }
    SparseOperator::from_triplets(3 * mesh.n_faces(), 2 * mesh.n_faces(), Space::X, Space::Gamma, &t)
}

/// Unpacking `U` (`3|F| x 2|F|`); row `3f + k` is the halfedge value on local edge `k`.
pub fn unpack_u(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(4 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let [s1, s2, s3] = mesh.face_signs[f];
        t.push((3 * f, 2 * f, 1.0));
        t.push((3 * f + 1, 2 * f + 1, 1.0));
        t.push((3 * f + 2, 2 * f, -s3 * s1));
        t.push((3 * f + 2, 2 * f + 1, -s3 * s2));
    }
    SparseOperator::from_triplets(3 * mesh.n_faces(), 2 * mesh.n_faces(), Space::Other, Space::Gamma, &t)
}

/// Packing `U⁻¹` (`2|F| x 3|F|`).
pub fn pack_u_inv(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(2 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        t.push((2 * f, 3 * f, 1.0));
        t.push((2 * f + 1, 3 * f + 1, 1.0));
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), 3 * mesh.n_faces(), Space::Gamma, Space::Other, &t)
}

/// Signed per-face sum of the unpacked values, `d_{1,Γ}`.
pub fn null_sum(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(3 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..3 {
            t.push((f, 3 * f + k, mesh.face_signs[f][k]));
        }
    }
    let s = SparseOperator::from_triplets(mesh.n_faces(), 3 * mesh.n_faces(), Space::FStar, Space::Other, &t);
    (&s * &unpack_u(mesh)).with_spaces(Space::FStar, Space::Gamma)
}

/// Gradient into Γ (`2|F| x |V|`).
pub fn d0_gamma(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(4 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..2 {
            let [a, b] = mesh.edges[mesh.face_edges[f][k]];
            t.push((2 * f + k, a, -1.0));
            t.push((2 * f + k, b, 1.0));
        }
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), mesh.n_vertices(), Space::Gamma, Space::V, &t)
}

/// Curl on Γ (`|E| x 2|F|`): left minus right halfedge value; boundary rows are zero.
pub fn curl_gamma(mesh: &Mesh) -> SparseOperator {
    let u = unpack_u(mesh);
    let mut t = Vec::new();
    for e in 0..mesh.n_edges() {
        if mesh.boundary_edge[e] {
            continue;
        }
        let [l, r] = mesh.edge_faces[e];
        for (f, s) in [(l.unwrap(), 1.0), (r.unwrap(), -1.0)] {
            let row = 3 * f + mesh.local_edge(f, e);
            let ur = u.mat.row(row);
            for (&c, &v) in ur.col_indices().iter().zip(ur.values()) {
                t.push((e, c, s * v));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_edges(), 2 * mesh.n_faces(), Space::EStar, Space::Gamma, &t)
}

/// Halfedge mass `½ Uᵀ diag(cot) U` per face.
pub fn mass_gamma(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(4 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let oc = mesh.opposite_cotangents(f);
        let [s1, s2, s3] = mesh.face_signs[f];
        let u3 = [-s3 * s1, -s3 * s2];
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.5 * oc[2] * u3[i] * u3[j];
                if i == j {
                    v += 0.5 * oc[i];
                }
                t.push((2 * f + i, 2 * f + j, v));
            }
        }
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), 2 * mesh.n_faces(), Space::Gamma, Space::Gamma, &t)
}

/// Per-face inverse of the halfedge mass.
pub fn mass_gamma_inv(mesh: &Mesh) -> SparseOperator {
    let m = mass_gamma(mesh);
    let mut t = Vec::with_capacity(4 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let (a, b, c, d) = (m.get(2 * f, 2 * f), m.get(2 * f, 2 * f + 1), m.get(2 * f + 1, 2 * f), m.get(2 * f + 1, 2 * f + 1));
        let det = a * d - b * c;
        t.push((2 * f, 2 * f, d / det));
        t.push((2 * f, 2 * f + 1, -b / det));
        t.push((2 * f + 1, 2 * f, -c / det));
        t.push((2 * f + 1, 2 * f + 1, a / det));
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), 2 * mesh.n_faces(), Space::Gamma, Space::Gamma, &t)
}

/// Divergence `D_Γ = d0_Γᵀ M_Γ` (`|V| x 2|F|`).
pub fn div_gamma(mesh: &Mesh) -> SparseOperator {
    (&d0_gamma(mesh).transpose() * &mass_gamma(mesh)).with_spaces(Space::VStar, Space::Gamma)
}

/// Mean-curl conversion `W` (`2|E| x 2|F|`), output stacked `[z1; eps]`.
pub fn to_mean_curl_op(mesh: &Mesh) -> SparseOperator {
    let u = unpack_u(mesh);
    let ne = mesh.n_edges();
    let mut t = Vec::new();
    for e in 0..ne {
        let [l, r] = mesh.edge_faces[e];
        let mut push = |f: usize, wz: f64, we: f64| {
            let ur = u.mat.row(3 * f + mesh.local_edge(f, e));
            for (&c, &v) in ur.col_indices().iter().zip(ur.values()) {
                t.push((e, c, wz * v));
                if we != 0.0 {
                    t.push((ne + e, c, we * v));
                }
            }
        };
        match (l, r) {
            (Some(l), Some(r)) => {
                push(l, 0.5, 0.5);
                push(r, 0.5, -0.5);
            }
            (Some(f), None) | (None, Some(f)) => push(f, 1.0, 0.0),
            (None, None) => unreachable!(),
        }
    }
    SparseOperator::from_triplets(2 * ne, 2 * mesh.n_faces(), Space::MeanCurl, Space::Gamma, &t)
}

/// Inverse conversion `W⁻¹` (`2|F| x 2|E|`): packed value `z1 ± eps` with `+` in the left face.
pub fn from_mean_curl_op(mesh: &Mesh) -> SparseOperator {
    let ne = mesh.n_edges();
    let mut t = Vec::with_capacity(4 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..2 {
            let e = mesh.face_edges[f][k];
            t.push((2 * f + k, e, 1.0));
            if !mesh.boundary_edge[e] {
                t.push((2 * f + k, ne + e, mesh.face_signs[f][k]));
            }
        }
    }
    SparseOperator::from_triplets(2 * mesh.n_faces(), 2 * ne, Space::Gamma, Space::MeanCurl, &t)
}

/// Null-sum map of a mean-curl pair: `d1 z1 + A eps`.
pub fn mean_curl_null_sum(mesh: &Mesh) -> SparseOperator {
    let d1 = dec_d1(mesh);
    let a = edge_face_average(mesh);
    SparseOperator::blocks(&[vec![Some(&d1), Some(&a)]], &[mesh.n_faces()], &[mesh.n_edges(), mesh.n_edges()])
        .with_spaces(Space::FStar, Space::MeanCurl)
}

pub fn to_mean_curl(mesh: &Mesh, gamma: &HalfedgeForm) -> MeanCurlForm {
    MeanCurlForm::from_stacked(&to_mean_curl_op(mesh).apply(&gamma.values))
}

pub fn from_mean_curl(mesh: &Mesh, mc: &MeanCurlForm) -> Result<HalfedgeForm> {
    let x = mc.stacked();
    let r = mean_curl_null_sum(mesh).apply(&x).amax();
    let scale = x.amax().max(f64::MIN_POSITIVE);
    let boundary_eps = (0..mesh.n_edges()).filter(|&e| mesh.boundary_edge[e]).fold(0.0f64, |m, e| m.max(mc.eps[e].abs()));
    let worst = r.max(boundary_eps);
    if worst > 1e-10 * scale {
        return Err(Error::BrokenNullSum(worst / scale));
    }
    Ok(HalfedgeForm { values: from_mean_curl_op(mesh).apply(&x) })
}

/// Hodge decomposition of a halfedge form on a closed mesh.
#[derive(Clone, Debug)]
pub struct HodgeParts {
    /// Vertex potential of the exact part.
    pub f: DVector<f64>,
    /// Half-curl `½ C_Γ γ`.
    pub eps: DVector<f64>,
    pub exact: DVector<f64>,
    pub coexact: DVector<f64>,
    pub harmonic: DVector<f64>,
}

/// Generic orthogonal decomposition given a Γ mass, gradient and curl.
///
/// The exact part solves `(d0ᵀ M d0) f = d0ᵀ M γ` with the first vertex pinned;
/// the coexact part `M⁻¹ Cᵀ x` matches the curl of `γ` through the saddle
/// system `[M Cᵀ; C 0]` with the first curl row dropped.
pub fn hodge_decompose_with(
    mass: &SparseOperator,
    d0: &SparseOperator,
    curl: &SparseOperator,
    gamma: &DVector<f64>,
) -> Result<HodgeParts> {
    let nv = d0.ncols();
    let ng = mass.nrows();
    let lap = &(&d0.transpose() * mass) * d0;
    let keep: Vec<usize> = (1..nv).collect();
    let lap_r = lap.submatrix(&keep, &keep);
    let rhs = (&d0.transpose() * mass).apply(gamma);
    let sol = Cholesky::new(&lap_r)?.solve(&DVector::from_fn(nv - 1, |i, _| rhs[i + 1]));
    let f = DVector::from_fn(nv, |i, _| if i == 0 { 0.0 } else { sol[i - 1] });
    let exact = d0.apply(&f);

    let ne = curl.nrows();
    let rows: Vec<usize> = (1..ne).collect();
    let c = curl.select_rows(&rows);
    let ct = c.transpose();
    let saddle = SparseOperator::blocks(&[vec![Some(mass), Some(&ct)], vec![Some(&c), None]], &[ng, ne - 1], &[ng, ne - 1]);
    let cg = c.apply(gamma);
    let b = DVector::from_fn(ng + ne - 1, |i, _| if i < ng { 0.0 } else { cg[i - ng] });
    let x = SparseLu::new(&saddle)?.solve(&b);
    let coexact: DVector<f64> = x.rows(0, ng).into();
    let harmonic = gamma - &exact - &coexact;
    let eps = curl.apply(gamma) * 0.5;
    Ok(HodgeParts { f, eps, exact, coexact, harmonic })
}

pub fn hodge_decompose_gamma(mesh: &Mesh, gamma: &HalfedgeForm) -> Result<HodgeParts> {
    if !mesh.is_closed() {
        return Err(Error::BoundaryMeshUnsupported);
    }
    hodge_decompose_with(&mass_gamma(mesh), &d0_gamma(mesh), &curl_gamma(mesh), &gamma.values)
}

/// Symmetric Hodge-Laplacian stiffness `M d0 Mv⁻¹ d0ᵀ M + Cᵀ Me* C` (dense).
pub fn hodge_stiffness_dense(
    mass: &DMatrix<f64>,
    d0: &DMatrix<f64>,
    mass_v: &DMatrix<f64>,
    curl: &DMatrix<f64>,
    mass_e_star: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let md0 = mass * d0;
    let mv = mass_v.clone().cholesky().ok_or_else(|| Error::SolverFailure("vertex mass not positive definite".into()))?;
    let t = mv.solve(&md0.transpose());
    Ok(&md0 * t + curl.transpose() * mass_e_star * curl)
}

/// Harmonic basis: generalized eigenvectors of the Hodge stiffness against `M`
/// with eigenvalue below `1e-8` times the spectral scale.
pub fn harmonic_basis_with(stiffness: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (vals, vecs) = linalg::generalized_sym_eigen(stiffness, mass)?;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() < 1e-8 * scale).collect();
    Ok(DMatrix::from_fn(vals.len(), cols.len(), |i, j| vecs[(i, cols[j])]))
}

pub fn harmonic_basis(mesh: &Mesh) -> Result<DMatrix<f64>> {
    let ms = Masses::new(mesh);
    let mg = mass_gamma(mesh).to_dense();
    let k = hodge_stiffness_dense(&mg, &d0_gamma(mesh).to_dense(), &ms.v.to_dense(), &curl_gamma(mesh).to_dense(), &ms.e_star.to_dense())?;
    harmonic_basis_with(&k, &mg)
}

/// Line-integral halfedge form of a per-face ambient field (`P v`).
pub fn from_vectors(mesh: &Mesh, v: &DVector<f64>) -> HalfedgeForm {
    HalfedgeForm { values: project_p(mesh).apply(v) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{cograd_nonconforming, curl_nc, dec_d0, div_conforming, grad_conforming, laplacians};
    use crate::shapes;
    use crate::sparse::relative_residual;

    fn tangent_field(mesh: &Mesh, seed: f64) -> DVector<f64> {
        let mut v = DVector::zeros(3 * mesh.n_faces());
        for f in 0..mesh.n_faces() {
            let n = mesh.face_normal(f);
            let c = mesh.face_centroid(f);
            let a = nalgebra::Vector3::new((seed + c.x * 3.0).sin(), (c.y * 2.0 - seed).cos(), (c.z + seed * c.x).sin());
            let t = a - n * n.dot(&a);
            for k in 0..3 {
                v[3 * f + k] = t[k];
            }
        }
        v
    }

    #[test]
    fn p_inverse_identities() {
        let m = shapes::bumpy_icosphere(1, 0.3);
        let p = project_p(&m);
        let pi = project_p_inv(&m);
        assert!(relative_residual(&(&p * &pi), &SparseOperator::identity(2 * m.n_faces(), Space::Gamma)) < 1e-13);
        let v = tangent_field(&m, 0.3);
        assert!((pi.apply(&p.apply(&v)) - &v).norm() <= 1e-12 * v.norm());
        let mut nrm = DVector::zeros(3 * m.n_faces());
        for f in 0..m.n_faces() {
            let n = m.face_normal(f);
            for k in 0..3 {
                nrm[3 * f + k] = n[k];
            }
        }
        assert!(p.apply(&nrm).amax() < 1e-14);
    }

    #[test]
    fn equilateral_packing() {
        let m = shapes::equilateral();
        let e1 = m.edge_vector(m.face_edges[0][0]);
        let v = DVector::from_vec(vec![e1.x, e1.y, e1.z]);
        let g = project_p(&m).apply(&v);
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);
        let mg = mass_gamma(&m).to_dense();
        let s = 1.0 / (2.0 * 3f64.sqrt());
        let expect = DMatrix::from_row_slice(2, 2, &[2.0 * s, s, s, 2.0 * s]);
        assert!((mg - expect).amax() < 1e-15);
    }

    #[test]
    fn unpack_null_sum() {
        let m = shapes::torus(5, 4, 1.0, 0.4);
        let u = unpack_u(&m);
        assert!(relative_residual(&(&pack_u_inv(&m) * &u), &SparseOperator::identity(2 * m.n_faces(), Space::Gamma)) < 1e-15);
        let g = DVector::from_fn(2 * m.n_faces(), |i, _| (i as f64 * 1.3).cos());
        assert!(null_sum(&m).apply(&g).amax() < 1e-14);
        let tri = shapes::triangle();
        let ut = unpack_u(&tri).apply(&DVector::from_vec(vec![1.0, 0.0]));
        // signs (+, +, −): third value −s3·s1·1 = 1
        assert_eq!(ut[2], 1.0);
    }

    #[test]
    fn gradient_consistency() {
        let m = shapes::bumpy_icosphere(1, 0.2);
        let g = &project_p_inv(&m) * &d0_gamma(&m);
        assert!(relative_residual(&g, &grad_conforming(&m)) < 1e-12);
        assert_eq!((&curl_gamma(&m) * &d0_gamma(&m)).max_abs(), 0.0);
        let l = laplacians(&m);
        let lg = &(&d0_gamma(&m).transpose() * &mass_gamma(&m)) * &d0_gamma(&m);
        assert!(relative_residual(&lg, &l.v) < 1e-10);
    }

    #[test]
    fn mass_matches_ambient() {
        let m = shapes::bumpy_icosphere(1, 0.3);
        let pi = project_p_inv(&m);
        let ms = Masses::new(&m);
        let amb = &(&pi.transpose() * &ms.x) * &pi;
        let mg = mass_gamma(&m);
        for f in 0..m.n_faces() {
            for i in 0..2 {
                for j in 0..2 {
                    let (r, c) = (2 * f + i, 2 * f + j);
                    assert!((amb.get(r, c) - mg.get(r, c)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn curl_and_divergence_equivalence() {
        let m = shapes::bumpy_icosphere(1, 0.2);
        let v = tangent_field(&m, 1.1);
        let g = project_p(&m).apply(&v);
        let c1 = curl_gamma(&m).apply(&g);
        let c2 = curl_nc(&m).apply(&v);
        assert!((c1 - c2).amax() < 1e-12);
        let d1 = div_gamma(&m).apply(&g);
        let d2 = div_conforming(&m).apply(&v);
        assert!((d1 - d2).amax() < 1e-12);
    }

    #[test]
    fn coexact_is_divergence_free() {
        let m = shapes::torus(7, 5, 1.0, 0.35);
        let x = DVector::from_fn(m.n_edges(), |i, _| (i as f64 * 0.37).sin());
        let co = mass_gamma_inv(&m).apply(&curl_gamma(&m).transpose().apply(&x));
        assert!(div_gamma(&m).apply(&co).amax() < 1e-12 * co.amax().max(1.0));
    }

    #[test]
    fn nonconforming_laplacian_via_curl() {
        let m = shapes::bumpy_icosphere(1, 0.2);
        let c = curl_gamma(&m);
        let le = &(&c * &mass_gamma_inv(&m)) * &c.transpose();
        let ge = cograd_nonconforming(&m);
        let ms = Masses::new(&m);
        let l = &(&ge.transpose() * &ms.x) * &ge;
        assert!(relative_residual(&le, &l) < 1e-10);
    }

    #[test]
    fn mean_curl_round_trip() {
        let m = shapes::disk(2);
        let g = HalfedgeForm { values: DVector::from_fn(2 * m.n_faces(), |i, _| (i as f64 * 0.61).sin()) };
        let mc = to_mean_curl(&m, &g);
        assert!(mean_curl_null_sum(&m).apply(&mc.stacked()).amax() < 1e-14);
        let back = from_mean_curl(&m, &mc).unwrap();
        assert!((back.values - &g.values).amax() < 1e-14);
        let mut bad = mc.clone();
        bad.z1[0] += 1.0;
        assert!(matches!(from_mean_curl(&m, &bad), Err(Error::BrokenNullSum(_))));
    }

    #[test]
    fn flap_half_curl() {
        let m = shapes::flap();
        let e = m.edge(1, 2).unwrap();
        let ev = m.edge_vector(e);
        let mut v = DVector::zeros(6);
        let (l, r) = (m.left(e).unwrap(), m.right(e).unwrap());
        for c in 0..3 {
            v[3 * l + c] = ev[c];
            v[3 * r + c] = -ev[c];
        }
        let g = from_vectors(&m, &v);
        let mc = to_mean_curl(&m, &g);
        assert!((mc.eps[e] - ev.norm_squared()).abs() < 1e-14);
        assert!((curl_gamma(&m).apply(&g.values)[e] - 2.0 * ev.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn curl_free_mean_curl_is_closed() {
        let m = shapes::icosphere(1);
        let f = DVector::from_fn(m.n_vertices(), |i, _| (i as f64).sqrt());
        let g = HalfedgeForm { values: d0_gamma(&m).apply(&f) };
        let mc = to_mean_curl(&m, &g);
        assert!(mc.eps.amax() < 1e-14);
        assert!(dec_d1(&m).apply(&mc.z1).amax() < 1e-14);
        // DEC divergence agrees for curl-free forms
        let ms = Masses::new(&m);
        let dec = (&dec_d0(&m).transpose() * &ms.one).apply(&mc.z1);
        assert!((dec - div_gamma(&m).apply(&g.values)).amax() < 1e-12);
    }

    #[test]
    fn mean_divergence_identity() {
        // d0ᵀ M1 z1 = D_Γ γ − d0ᵀ diag((cot_L − cot_R)/2) eps
        let m = shapes::bumpy_icosphere(1, 0.25);
        let g = DVector::from_fn(2 * m.n_faces(), |i, _| (i as f64 * 0.91).cos());
        let mc = to_mean_curl(&m, &HalfedgeForm { values: g.clone() });
        let ms = Masses::new(&m);
        let mut skew = vec![0.0; m.n_edges()];
        for e in 0..m.n_edges() {
            for (side, s) in [(0, 1.0), (1, -1.0)] {
                if let Some(f) = m.edge_faces[e][side] {
                    skew[e] += 0.5 * s * m.opposite_cotangents(f)[m.local_edge(f, e)];
                }
            }
        }
        let lhs = (&dec_d0(&m).transpose() * &ms.one).apply(&mc.z1);
        let corr = dec_d0(&m).transpose().apply(&DVector::from_fn(m.n_edges(), |e, _| skew[e] * mc.eps[e]));
        let rhs = div_gamma(&m).apply(&g) - corr;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn hodge_torus_and_sphere() {
        let t = shapes::torus(8, 5, 1.0, 0.4);
        assert_eq!(harmonic_basis(&t).unwrap().ncols(), 2);
        let s = shapes::icosphere(1);
        assert_eq!(harmonic_basis(&s).unwrap().ncols(), 0);

        let h = harmonic_basis(&t).unwrap();
        let f = DVector::from_fn(t.n_vertices(), |i, _| (i as f64 * 0.3).sin());
        let x = DVector::from_fn(t.n_edges(), |i, _| (i as f64 * 0.7).cos());
        let co = mass_gamma_inv(&t).apply(&curl_gamma(&t).transpose().apply(&x));
        let hv: DVector<f64> = h.column(0).into();
        let g = d0_gamma(&t).apply(&f) + &co + &hv;
        let parts = hodge_decompose_gamma(&t, &HalfedgeForm { values: g.clone() }).unwrap();
        let mg = mass_gamma(&t);
        let nrm = |a: &DVector<f64>| mg.apply(a).dot(a).sqrt();
        assert!((&parts.exact + &parts.coexact + &parts.harmonic - &g).norm() <= 1e-8 * g.norm());
        assert!(nrm(&(&parts.harmonic - &hv)) <= 1e-8 * nrm(&hv));
        let ip = |a: &DVector<f64>, b: &DVector<f64>| mg.apply(a).dot(b) / (nrm(a) * nrm(b));
        assert!(ip(&parts.exact, &parts.coexact).abs() < 1e-8);
        assert!(ip(&parts.exact, &parts.harmonic).abs() < 1e-8);
        assert!(ip(&parts.coexact, &parts.harmonic).abs() < 1e-8);
    }

    #[test]
    fn coexact_factor_two() {
        // coexact part equals 2 M⁻¹ Cᵀ L_E⁻¹ eps with L_E = C M⁻¹ Cᵀ; factor 1 does not
        let m = shapes::icosphere(1);
        let g = DVector::from_fn(2 * m.n_faces(), |i, _| (i as f64 * 0.43).sin());
        let parts = hodge_decompose_gamma(&m, &HalfedgeForm { values: g }).unwrap();
        let c = curl_gamma(&m);
        let mi = mass_gamma_inv(&m);
        let le = (&(&c * &mi) * &c.transpose()).to_dense();
        let le_pinned = le.view((1, 1), (m.n_edges() - 1, m.n_edges() - 1)).clone_owned();
        let rhs = DVector::from_fn(m.n_edges() - 1, |i, _| parts.eps[i + 1]);
        let y = le_pinned.lu().solve(&rhs).unwrap();
        let y = DVector::from_fn(m.n_edges(), |i, _| if i == 0 { 0.0 } else { y[i - 1] });
        let base = mi.apply(&c.transpose().apply(&y));
        for (factor, expect_ok) in [(2.0, true), (1.0, false)] {
            let err = (&base * factor - &parts.coexact).norm() / parts.coexact.norm();
            assert_eq!(err < 1e-8, expect_ok, "factor {factor}: {err}");
        }
    }

    #[test]
    fn boundary_mesh_rejected() {
        let m = shapes::disk(1);
        let g = HalfedgeForm { values: DVector::zeros(2 * m.n_faces()) };
        assert!(matches!(hodge_decompose_gamma(&m, &g), Err(Error::BoundaryMeshUnsupported)));
    }
}

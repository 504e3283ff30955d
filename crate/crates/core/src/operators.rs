//! FEM and DEC operators and mass matrices on triangle meshes.
//!
//! Ambient face vectors (space `X`) are stored as three consecutive entries per face.

use crate::mesh::Mesh;
use crate::sparse::{SparseOperator, Space};

/// Conforming gradient `G_V` (`3|F| x |V|`).
pub fn grad_conforming(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(9 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let face = mesh.faces[f];
        let n = mesh.face_normal(f);
        let a2 = 2.0 * mesh.face_area(f);
        for k in 0..3 {
            let e = mesh.positions[face[(k + 2) % 3]] - mesh.positions[face[(k + 1) % 3]];
            let g = n.cross(&e) / a2;
            for c in 0..3 {
                t.push((3 * f + c, face[k], g[c]));
            }
        }
    }
    SparseOperator::from_triplets(3 * mesh.n_faces(), mesh.n_vertices(), Space::X, Space::V, &t)
}

/// Non-conforming gradient `G_E` (`3|F| x |E|`) acting on mid-edge values.
pub fn cograd_nonconforming(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(9 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let face = mesh.faces[f];
        let n = mesh.face_normal(f);
        let area = mesh.face_area(f);
        for k in 0..3 {
            // edge opposite corner k, traversed CCW
            let e = mesh.positions[face[(k + 2) % 3]] - mesh.positions[face[(k + 1) % 3]];
            let g = -n.cross(&e) / area;
            let edge = mesh.face_edges[f][(k + 1) % 3];
            for c in 0..3 {
                t.push((3 * f + c, edge, g[c]));
            }
        }
    }
    SparseOperator::from_triplets(3 * mesh.n_faces(), mesh.n_edges(), Space::X, Space::E, &t)
}

/// Per-face rotation `J = [n x]`.
pub fn rotation_j(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(6 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let n = mesh.face_normal(f);
        let m = n.cross_matrix();
        for r in 0..3 {
            for c in 0..3 {
                if m[(r, c)] != 0.0 {
                    t.push((3 * f + r, 3 * f + c, m[(r, c)]));
                }
            }
        }
    }
    SparseOperator::from_triplets(3 * mesh.n_faces(), 3 * mesh.n_faces(), Space::X, Space::X, &t)
}

/// Unsigned FEM curl `C` (`|E| x 3|F|`): `<v_left, e> − <v_right, e>`; boundary
/// rows hold `<v_f, e>` of the single face.
pub fn curl_nc(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(6 * mesh.n_edges());
    for e in 0..mesh.n_edges() {
        let ev = mesh.edge_vector(e);
        let [l, r] = mesh.edge_faces[e];
        let boundary = mesh.boundary_edge[e];
        if let Some(l) = l {
            for c in 0..3 {
                t.push((e, 3 * l + c, ev[c]));
            }
        }
        if let Some(r) = r {
            let s = if boundary { 1.0 } else { -1.0 };
            for c in 0..3 {
                t.push((e, 3 * r + c, s * ev[c]));
            }
        }
    }
    SparseOperator::from_triplets(mesh.n_edges(), 3 * mesh.n_faces(), Space::EStar, Space::X, &t)
}

/// Conforming divergence `D = G_Vᵀ M_X` (`|V| x 3|F|`).
pub fn div_conforming(mesh: &Mesh) -> SparseOperator {
    let m = Masses::new(mesh);
    (&grad_conforming(mesh).transpose() * &m.x).with_spaces(Space::VStar, Space::X)
}

/// Diagonal mass matrices.
#[derive(Clone, Debug)]
pub struct Masses {
    pub v: SparseOperator,
    pub e: SparseOperator,
    pub e_star: SparseOperator,
    pub f: SparseOperator,
    pub x: SparseOperator,
    pub one: SparseOperator,
}

impl Masses {
    pub fn new(mesh: &Mesh) -> Self {
        let fa: Vec<f64> = (0..mesh.n_faces()).map(|f| mesh.face_area(f)).collect();
        let va = vertex_areas(mesh);
        let ea: Vec<f64> = (0..mesh.n_edges())
            .map(|e| mesh.edge_faces[e].iter().flatten().map(|&f| fa[f]).sum::<f64>() / 3.0)
            .collect();
        let xa: Vec<f64> = fa.iter().flat_map(|&a| [a, a, a]).collect();
        Masses {
            v: SparseOperator::diagonal(&va, Space::V),
            e: SparseOperator::diagonal(&ea, Space::E),
            e_star: SparseOperator::diagonal(&ea.iter().map(|a| 1.0 / a).collect::<Vec<_>>(), Space::EStar),
            f: SparseOperator::diagonal(&fa, Space::F),
            x: SparseOperator::diagonal(&xa, Space::X),
            one: SparseOperator::diagonal(&cotan_weights(mesh), Space::Z1),
        }
    }
}

/// Mixed Voronoi vertex areas.
pub fn vertex_areas(mesh: &Mesh) -> Vec<f64> {
    let mut a = vec![0.0; mesh.n_vertices()];
    for f in 0..mesh.n_faces() {
        let face = mesh.faces[f];
        let area = mesh.face_area(f);
        let cot = mesh.corner_cotangents(f);
        let obtuse = (0..3).find(|&k| cot[k] < 0.0);
        match obtuse {
            Some(k) => {
                for (j, &v) in face.iter().enumerate() {
                    a[v] += if j == k { area / 2.0 } else { area / 4.0 };
                }
            }
            None => {
                for k in 0..3 {
                    let p = mesh.positions[face[k]];
                    let q = mesh.positions[face[(k + 1) % 3]];
                    let r = mesh.positions[face[(k + 2) % 3]];
                    a[face[k]] += ((q - p).norm_squared() * cot[(k + 2) % 3] + (r - p).norm_squared() * cot[(k + 1) % 3]) / 8.0;
                }
            }
        }
    }
    a
}

/// Cotangent weights `(cot α + cot β) / 2` per edge; boundary edges keep one term.
pub fn cotan_weights(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.n_edges()];
    for f in 0..mesh.n_faces() {
        let oc = mesh.opposite_cotangents(f);
        for k in 0..3 {
            w[mesh.face_edges[f][k]] += 0.5 * oc[k];
        }
    }
    w
}

/// Signed incidence `d0` (`|E| x |V|`).
pub fn dec_d0(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(2 * mesh.n_edges());
    for (e, &[a, b]) in mesh.edges.iter().enumerate() {
        t.push((e, a, -1.0));
        t.push((e, b, 1.0));
    }
    SparseOperator::from_triplets(mesh.n_edges(), mesh.n_vertices(), Space::Z1, Space::V, &t)
}

/// Signed incidence `d1` (`|F| x |E|`).
pub fn dec_d1(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(3 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..3 {
            t.push((f, mesh.face_edges[f][k], mesh.face_signs[f][k]));
        }
    }
    SparseOperator::from_triplets(mesh.n_faces(), mesh.n_edges(), Space::FStar, Space::Z1, &t)
}

/// Unsigned edge-to-face incidence `A_{E* -> F*}`.
pub fn edge_face_average(mesh: &Mesh) -> SparseOperator {
    let mut t = Vec::with_capacity(3 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        for k in 0..3 {
            t.push((f, mesh.face_edges[f][k], 1.0));
        }
    }
    SparseOperator::from_triplets(mesh.n_faces(), mesh.n_edges(), Space::FStar, Space::EStar, &t)
}

/// Cotangent Laplacian `L_V = d0ᵀ M1 d0` and non-conforming `L_E = G_Eᵀ M_X G_E`.
pub struct Laplacians {
    pub v: SparseOperator,
    pub e: SparseOperator,
}

pub fn laplacians(mesh: &Mesh) -> Laplacians {
    let m = Masses::new(mesh);
    let d0 = dec_d0(mesh);
    let v = (&(&d0.transpose() * &m.one) * &d0).with_spaces(Space::VStar, Space::V);
    let ge = cograd_nonconforming(mesh);
    let e = (&(&ge.transpose() * &m.x) * &ge).with_spaces(Space::EStar, Space::E);
    Laplacians { v, e }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Point;
    use crate::shapes;
    use crate::sparse::relative_residual;
    use nalgebra::DVector;

    #[test]
    fn gradient_of_constant_vanishes() {
        let m = shapes::icosphere(1);
        let g = grad_conforming(&m).apply(&DVector::from_element(m.n_vertices(), 1.0));
        assert!(g.amax() < 1e-12);
        let c = cograd_nonconforming(&m).apply(&DVector::from_element(m.n_edges(), 2.0));
        assert!(c.amax() < 1e-12);
    }

    #[test]
    fn right_triangle_gradients() {
        let m = shapes::triangle();
        let g = grad_conforming(&m).apply(&DVector::from_vec(vec![0.0, 1.0, 0.0]));
        assert!((g - DVector::from_vec(vec![1.0, 0.0, 0.0])).norm() < 1e-14);
        // g = 1 on edge (0,1), zero elsewhere
        let mut x = DVector::zeros(3);
        x[m.edge(0, 1).unwrap()] = 1.0;
        let gc = cograd_nonconforming(&m).apply(&x);
        let expect = -Point::z().cross(&Point::x()) / 0.5;
        for c in 0..3 {
            assert!((gc[c] - expect[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_reproduction() {
        let m = shapes::disk(2);
        let f = DVector::from_iterator(m.n_vertices(), m.positions.iter().map(|p| p.x));
        let g = grad_conforming(&m).apply(&f);
        for face in 0..m.n_faces() {
            assert!((g[3 * face] - 1.0).abs() < 1e-12 && g[3 * face + 1].abs() < 1e-12);
        }
    }

    #[test]
    fn conforming_in_nonconforming() {
        let m = shapes::bumpy_icosphere(1, 0.2);
        let f = DVector::from_fn(m.n_vertices(), |i, _| (i as f64 * 0.7).sin());
        let fe = DVector::from_fn(m.n_edges(), |e, _| 0.5 * (f[m.edges[e][0]] + f[m.edges[e][1]]));
        let a = grad_conforming(&m).apply(&f);
        let b = cograd_nonconforming(&m).apply(&fe);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn rotation_properties() {
        let m = shapes::disk(1);
        let j = rotation_j(&m);
        let mut v = DVector::zeros(3 * m.n_faces());
        v[0] = 1.0;
        let jv = j.apply(&v);
        assert!((jv[1] - 1.0).abs() < 1e-14 && jv[0].abs() < 1e-14);
        let mut n = DVector::zeros(3 * m.n_faces());
        n[2] = 1.0;
        assert!(j.apply(&n).norm() < 1e-14);
        let jtj = &j.transpose() * &j;
        let t = DVector::from_fn(3 * m.n_faces(), |i, _| if i % 3 == 2 { 0.0 } else { (i as f64).cos() });
        assert!((jtj.apply(&t) - &t).norm() < 1e-13);
    }

    #[test]
    fn exact_sequences() {
        for m in [shapes::icosphere(1), shapes::torus(7, 5, 1.0, 0.3), shapes::disk(2)] {
            let cg = &curl_nc(&m) * &grad_conforming(&m);
            for e in 0..m.n_edges() {
                if !m.boundary_edge[e] {
                    let row = cg.mat.row(e);
                    assert!(row.values().iter().all(|v| v.abs() < 1e-12));
                }
            }
            let djg = &(&div_conforming(&m) * &rotation_j(&m)) * &cograd_nonconforming(&m);
            if m.is_closed() {
                assert!(djg.max_abs() < 1e-12);
            } else {
                for v in 0..m.n_vertices() {
                    if !m.boundary_vertex[v] {
                        assert!(djg.mat.row(v).values().iter().all(|x| x.abs() < 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn flap_curl() {
        let m = shapes::flap();
        let e = m.edge(1, 2).unwrap();
        let ev = m.edge_vector(e);
        let (l, r) = (m.left(e).unwrap(), m.right(e).unwrap());
        let mut v = DVector::zeros(6);
        for c in 0..3 {
            v[3 * l + c] = ev[c];
            v[3 * r + c] = -ev[c];
        }
        let c = curl_nc(&m).apply(&v);
        assert!((c[e] - 2.0 * ev.norm_squared()).abs() < 1e-14);
    }

    #[test]
    fn laplacian_assemblies_agree() {
        let m = shapes::bumpy_icosphere(1, 0.2);
        let l = laplacians(&m);
        let via_div = &div_conforming(&m) * &grad_conforming(&m);
        assert!(relative_residual(&l.v, &via_div) < 1e-12);
        let ones = DVector::from_element(m.n_vertices(), 1.0);
        assert!(l.v.apply(&ones).amax() < 1e-12);
    }

    #[test]
    fn equilateral_values() {
        let m = shapes::equilateral();
        let masses = Masses::new(&m);
        assert!((masses.f.diag()[0] - 3f64.sqrt() / 4.0).abs() < 1e-15);
        for w in masses.one.diag() {
            assert!((w - 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
        }
        let l = laplacians(&m);
        assert!((l.v.get(0, 1) + 1.0 / (2.0 * 3f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn area_partitions() {
        for m in [shapes::bumpy_icosphere(1, 0.3), shapes::torus(6, 5, 1.0, 0.5)] {
            let ms = Masses::new(&m);
            let total = m.total_area();
            assert!((ms.v.diag().iter().sum::<f64>() - total).abs() < 1e-12 * total);
            assert!((ms.e.diag().iter().sum::<f64>() - total).abs() < 1e-12 * total);
            let id = &ms.e_star * &ms.e;
            assert!(relative_residual(&id, &SparseOperator::identity(m.n_edges(), Space::E)) < 1e-14);
        }
    }

    #[test]
    fn d1_d0_vanishes_and_rank() {
        let m = shapes::tetrahedron();
        assert_eq!((&dec_d1(&m) * &dec_d0(&m)).max_abs(), 0.0);
        let d0 = dec_d0(&m).to_dense();
        assert_eq!(d0.rank(1e-10), m.n_vertices() - 1);
        let row = dec_d0(&m);
        let [a, b] = m.edges[0];
        assert_eq!((row.get(0, a), row.get(0, b)), (-1.0, 1.0));
    }
}

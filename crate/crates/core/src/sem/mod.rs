//! Restricted (subdivision element) operators: coarse operators built from
//! fine-level mass matrices pulled back through the subdivision matrices.

pub mod design;
pub mod experiments;
pub mod spectrum;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use design::{design_field, pack_face_vector, Design};
pub use experiments::{operator_error_experiment, projection_error_experiment, sample_field, smooth_test_field, ErrorRow, Method, OperatorErrorReport, ProjectionReport};
pub use spectrum::{fine_hodge_eigenvalues, hodge_spectrum, sem_hodge_spectrum, spectrum_experiment, HodgeSpectrum, SpectrumReport};

use crate::error::{Error, Result};
use crate::halfedge::{curl_gamma, d0_gamma, harmonic_basis_with, hodge_decompose_with, hodge_stiffness_dense, mass_gamma, HalfedgeForm, HodgeParts};
use crate::linalg::{Cholesky, SparseLu};
use crate::mesh::Mesh;
use crate::operators::Masses;
use crate::sparse::{Space, SparseOperator};
use crate::subdivision::{Hierarchy, SubdivisionSet};

/// Vertex, halfedge and dual-edge masses of one level (plain or restricted).
#[derive(Clone, Debug)]
pub struct MassSet {
    pub v: SparseOperator,
    pub gamma: SparseOperator,
    pub e_star: SparseOperator,
}

impl MassSet {
    pub fn plain(mesh: &Mesh) -> Self {
        let m = Masses::new(mesh);
        MassSet { v: m.v, gamma: mass_gamma(mesh), e_star: m.e_star }
    }

    /// `Sᵀ M S` per space.
    pub fn pull_back(&self, s: &SubdivisionSet) -> Result<Self> {
        let r = |m: &SparseOperator, s: &SparseOperator| -> Result<SparseOperator> {
            let t = s.transpose().try_compose(&m.try_compose(s)?)?;
            Ok(symmetrize(&t).with_spaces(m.row_space, m.col_space))
        };
        Ok(MassSet { v: r(&self.v, &s.v)?, gamma: r(&self.gamma, &s.gamma)?, e_star: r(&self.e_star, &s.e_star)? })
    }

    pub fn get(&self, space: Space) -> Result<&SparseOperator> {
        match space {
            Space::V => Ok(&self.v),
            Space::Gamma => Ok(&self.gamma),
            Space::EStar => Ok(&self.e_star),
            s => Err(Error::DimensionMismatch(format!("no restricted mass for space {s}"))),
        }
    }
}

fn symmetrize(a: &SparseOperator) -> SparseOperator {
    (&(a + &a.transpose())).scale(0.5)
}

/// Masses of level `k` restricted from level `top` of a hierarchy.
pub fn restricted_masses(h: &Hierarchy, k: usize, top: usize) -> Result<MassSet> {
    if k > top || top > h.levels() {
        return Err(Error::DimensionMismatch(format!("cannot restrict level {top} to level {k}")));
    }
    let mut m = MassSet::plain(&h.meshes[top]);
    for j in (k..top).rev() {
        m = m.pull_back(&h.sets[j])?;
    }
    Ok(m)
}

/// Masses of every level `0..=top` restricted from `top`.
pub fn restricted_chain(h: &Hierarchy, top: usize) -> Result<Vec<MassSet>> {
    let mut out = vec![MassSet::plain(&h.meshes[top])];
    for j in (0..top).rev() {
        let next = out.last().unwrap().pull_back(&h.sets[j])?;
        out.push(next);
    }
    out.reverse();
    Ok(out)
}

/// Hodge Laplacian `M d0 Mv⁻¹ d0ᵀ M + Cᵀ Me* C` on one mesh with a given mass set.
///
/// Inverse masses are applied through factorizations; solves go through the
/// saddle system `[Cᵀ Me* C, M d0; d0ᵀ M, −Mv]`.
pub struct HodgeSystem {
    pub d0: SparseOperator,
    pub curl: SparseOperator,
    pub masses: MassSet,
    mass_chol: Cholesky,
    mass_v_chol: Cholesky,
    saddle: SparseOperator,
    saddle_lu: Option<SparseLu>,
}

impl HodgeSystem {
    pub fn new(mesh: &Mesh, masses: MassSet) -> Result<Self> {
        let d0 = d0_gamma(mesh);
        let curl = curl_gamma(mesh);
        if masses.gamma.nrows() != d0.nrows() || masses.v.nrows() != d0.ncols() || masses.e_star.nrows() != curl.nrows() {
            return Err(Error::DimensionMismatch("mass set does not match mesh".into()));
        }
        let mass_chol = Cholesky::new(&masses.gamma)?;
        let mass_v_chol = Cholesky::new(&masses.v)?;
        let curl_term = &(&curl.transpose() * &masses.e_star) * &curl;
        let md0 = &masses.gamma * &d0;
        let d0tm = md0.transpose();
        let neg_v = masses.v.scale(-1.0);
        let (ng, nv) = (d0.nrows(), d0.ncols());
        let saddle = SparseOperator::blocks(&[vec![Some(&curl_term), Some(&md0)], vec![Some(&d0tm), Some(&neg_v)]], &[ng, nv], &[ng, nv]);
        Ok(HodgeSystem { d0, curl, masses, mass_chol, mass_v_chol, saddle, saddle_lu: None })
    }

    pub fn plain(mesh: &Mesh) -> Result<Self> {
        Self::new(mesh, MassSet::plain(mesh))
    }

    pub fn n(&self) -> usize {
        self.d0.nrows()
    }

    /// Divergence `d0ᵀ M`.
    pub fn divergence(&self) -> SparseOperator {
        (&self.d0.transpose() * &self.masses.gamma).with_spaces(Space::VStar, Space::Gamma)
    }

    /// Vertex Laplacian `d0ᵀ M d0`.
    pub fn vertex_laplacian(&self) -> SparseOperator {
        (&(&self.d0.transpose() * &self.masses.gamma) * &self.d0).with_spaces(Space::VStar, Space::V)
    }

    pub fn mass_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mass_chol.solve(x)
    }

    pub fn mass_v_solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.mass_v_chol.solve(x)
    }

    /// Dual-edge Laplacian `C M⁻¹ Cᵀ x`.
    pub fn edge_laplacian_apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.curl.apply(&self.mass_solve(&self.curl.transpose().apply(x)))
    }

    /// Stiffness applied to a field.
    pub fn stiffness_apply(&self, g: &DVector<f64>) -> DVector<f64> {
        let div = self.divergence().apply(g);
        let p = self.mass_v_solve(&div);
        self.masses.gamma.apply(&self.d0.apply(&p)) + self.curl.transpose().apply(&self.masses.e_star.apply(&self.curl.apply(g)))
    }

    pub fn energy(&self, g: &DVector<f64>) -> f64 {
        g.dot(&self.stiffness_apply(g))
    }

    /// Dense stiffness (small meshes only).
    pub fn stiffness_dense(&self) -> Result<DMatrix<f64>> {
        hodge_stiffness_dense(&self.masses.gamma.to_dense(), &self.d0.to_dense(), &self.masses.v.to_dense(), &self.curl.to_dense(), &self.masses.e_star.to_dense())
    }

    fn lu(&mut self) -> Result<&SparseLu> {
        if self.saddle_lu.is_none() {
            self.saddle_lu = Some(SparseLu::new(&self.saddle)?);
        }
        Ok(self.saddle_lu.as_ref().unwrap())
    }

    /// Solves `stiffness · γ = rhs`; the stiffness must be nonsingular (genus 0).
    pub fn solve(&mut self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let (ng, nv) = (self.d0.nrows(), self.d0.ncols());
        let b = DVector::from_fn(ng + nv, |i, _| if i < ng { rhs[i] } else { 0.0 });
        let x = self.lu()?.solve(&b);
        check_finite(&x)?;
        Ok(x.rows(0, ng).into())
    }

    /// Minimizes the energy with the listed field entries held fixed.
    pub fn solve_fixed(&self, fixed: &[(usize, f64)]) -> Result<DVector<f64>> {
        let (ng, nv) = (self.d0.nrows(), self.d0.ncols());
        let mut is_fixed = vec![false; ng];
        let mut x0 = DVector::zeros(ng + nv);
        for &(i, v) in fixed {
            is_fixed[i] = true;
            x0[i] = v;
        }
        let keep: Vec<usize> = (0..ng + nv).filter(|&i| i >= ng || !is_fixed[i]).collect();
        let sub = self.saddle.submatrix(&keep, &keep);
        let r = self.saddle.apply(&x0);
        let b = DVector::from_fn(keep.len(), |i, _| -r[keep[i]]);
        let y = SparseLu::new(&sub)?.solve(&b);
        check_finite(&y)?;
        let mut g = DVector::zeros(ng);
        for &(i, v) in fixed {
            g[i] = v;
        }
        for (j, &i) in keep.iter().enumerate() {
            if i < ng {
                g[i] = y[j];
            }
        }
        Ok(g)
    }

    /// Orthogonal decomposition in this system's inner product.
    pub fn decompose(&self, gamma: &DVector<f64>) -> Result<HodgeParts> {
        hodge_decompose_with(&self.masses.gamma, &self.d0, &self.curl, gamma)
    }

    /// Harmonic dimension from the dense spectrum (small meshes only).
    pub fn harmonic_dimension(&self) -> Result<usize> {
        Ok(harmonic_basis_with(&self.stiffness_dense()?, &self.masses.gamma.to_dense())?.ncols())
    }
}

fn check_finite(x: &DVector<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::SolverFailure("non-finite solution".into()))
    }
}

/// A hierarchy with aggregated subdivision matrices and restricted masses.
pub struct SemContext {
    pub hierarchy: Hierarchy,
    /// Aggregated matrices from level 0 to the finest level.
    pub aggregate: SubdivisionSet,
    pub fine: MassSet,
    pub restricted: MassSet,
    pub system: HodgeSystem,
}

impl SemContext {
    pub fn build(coarse: &Mesh, levels: usize) -> Result<Self> {
        Self::from_hierarchy(Hierarchy::build(coarse, levels)?)
    }

    pub fn from_hierarchy(hierarchy: Hierarchy) -> Result<Self> {
        let aggregate = hierarchy.aggregate_from(0)?;
        let fine = MassSet::plain(hierarchy.finest());
        let restricted = restricted_masses(&hierarchy, 0, hierarchy.levels())?;
        let system = HodgeSystem::new(&hierarchy.meshes[0], restricted.clone())?;
        Ok(SemContext { hierarchy, aggregate, fine, restricted, system })
    }

    pub fn coarse(&self) -> &Mesh {
        &self.hierarchy.meshes[0]
    }

    pub fn levels(&self) -> usize {
        self.hierarchy.levels()
    }

    /// Subdivides a coarse halfedge form to the finest level.
    pub fn subdivide(&self, gamma: &DVector<f64>) -> DVector<f64> {
        self.aggregate.gamma.apply(gamma)
    }
}

/// Restricted mass matrix of a space (`V`, `Gamma` or `EStar`).
pub fn restrict_mass(ctx: &SemContext, space: Space) -> Result<SparseOperator> {
    ctx.restricted.get(space).cloned()
}

/// Restricted divergence, curl and Laplacians on the coarse level.
pub struct SemOperators<'a> {
    /// `d0ᵀ 𝕄_Γ`.
    pub div: SparseOperator,
    /// The coarse curl (commutation makes restriction unnecessary).
    pub curl: SparseOperator,
    /// `d0ᵀ 𝕄_Γ d0`.
    pub lap_v: SparseOperator,
    /// Hodge Laplacian and dual-edge Laplacian, applied through factorizations.
    pub hodge: &'a HodgeSystem,
}

pub fn sem_operators(ctx: &SemContext) -> SemOperators<'_> {
    SemOperators { div: ctx.system.divergence(), curl: ctx.system.curl.clone(), lap_v: ctx.system.vertex_laplacian(), hodge: &ctx.system }
}

/// Fine-level divergence statistics of one subdivided component.
#[derive(Clone, Debug, Serialize)]
pub struct ComponentDivergence {
    pub component: String,
    /// Mass-weighted L2 of the pointwise fine divergence.
    pub fine_l2: f64,
    pub fine_linf: f64,
    /// `‖S_Vᵀ div‖ / ‖div‖` of the integrated fine divergence.
    pub restricted: f64,
}

#[derive(Clone, Debug)]
pub struct SemHodge {
    pub parts: HodgeParts,
    pub divergence: Vec<ComponentDivergence>,
    /// `‖γ − exact − coexact − harmonic‖ / ‖γ‖`.
    pub reconstruction: f64,
    /// Largest normalized pairwise restricted inner product.
    pub orthogonality: f64,
    pub harmonic_dim: Option<usize>,
}

/// Restricted Hodge decomposition with the fine divergence of each part.
pub fn sem_hodge_decompose(ctx: &SemContext, gamma: &HalfedgeForm) -> Result<SemHodge> {
    if !ctx.coarse().is_closed() {
        return Err(Error::BoundaryMeshUnsupported);
    }
    let g = &gamma.values;
    let parts = ctx.system.decompose(g)?;
    let fine = ctx.hierarchy.finest();
    let fine_div = &d0_gamma(fine).transpose() * &ctx.fine.gamma;
    let area = ctx.fine.v.diag();
    let total: f64 = area.iter().sum();
    let st = ctx.aggregate.v.transpose();
    let divergence = [("exact", &parts.exact), ("coexact", &parts.coexact), ("harmonic", &parts.harmonic)]
        .into_iter()
        .map(|(name, p)| {
            let d = fine_div.apply(&ctx.subdivide(p));
            let pointwise: Vec<f64> = d.iter().zip(&area).map(|(x, a)| x / a).collect();
            let fine_l2 = (pointwise.iter().zip(&area).map(|(x, a)| x * x * a).sum::<f64>() / total).sqrt();
            let fine_linf = pointwise.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let restricted = st.apply(&d).norm() / d.norm().max(f64::MIN_POSITIVE);
            ComponentDivergence { component: name.into(), fine_l2, fine_linf, restricted }
        })
        .collect();
    let m = &ctx.restricted.gamma;
    let recon = g - &parts.exact - &parts.coexact - &parts.harmonic;
    let reconstruction = recon.norm() / g.norm().max(f64::MIN_POSITIVE);
    let ps = [&parts.exact, &parts.coexact, &parts.harmonic];
    let norm = |x: &DVector<f64>| x.dot(&m.apply(x)).max(0.0).sqrt();
    let gn = norm(g).max(f64::MIN_POSITIVE);
    let mut orthogonality = 0.0f64;
    for i in 0..3 {
        for j in i + 1..3 {
            orthogonality = orthogonality.max(ps[i].dot(&m.apply(ps[j])).abs() / (gn * gn));
        }
    }
    let harmonic_dim = if g.len() <= 3000 { Some(ctx.system.harmonic_dimension()?) } else { None };
    Ok(SemHodge { parts, divergence, reconstruction, orthogonality, harmonic_dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};

    fn random(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn level_zero_is_plain_mass() {
        let m = shapes::octahedron();
        let ctx = SemContext::build(&m, 0).unwrap();
        let plain = MassSet::plain(&m);
        for s in [Space::V, Space::Gamma, Space::EStar] {
            let r = restrict_mass(&ctx, s).unwrap();
            assert!((&r - plain.get(s).unwrap()).max_abs() < 1e-15);
        }
        assert!(matches!(restrict_mass(&ctx, Space::F), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn restricted_mass_matches_definition() {
        let ctx = SemContext::build(&shapes::icosahedron(), 2).unwrap();
        let pairs = [(Space::V, &ctx.aggregate.v), (Space::Gamma, &ctx.aggregate.gamma), (Space::EStar, &ctx.aggregate.e_star)];
        for (k, (space, s)) in pairs.into_iter().enumerate() {
            let r = restrict_mass(&ctx, space).unwrap();
            assert!((&r - &r.transpose()).max_abs() == 0.0);
            let x = random(s.ncols(), k as u64);
            let sx = s.apply(&x);
            let lhs = x.dot(&r.apply(&x));
            let rhs = sx.dot(&ctx.fine.get(space).unwrap().apply(&sx));
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs(), "{space}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn restricted_masses_are_psd() {
        let ctx = SemContext::build(&shapes::octahedron(), 2).unwrap();
        for s in [Space::V, Space::Gamma, Space::EStar] {
            let (vals, _) = crate::linalg::sym_eigen(&restrict_mass(&ctx, s).unwrap().to_dense()).unwrap();
            let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(vals[0] >= -1e-12 * max);
        }
    }

    #[test]
    fn divergence_two_paths() {
        let ctx = SemContext::build(&shapes::icosahedron(), 2).unwrap();
        let ops = sem_operators(&ctx);
        let fine_div = crate::halfedge::div_gamma(ctx.hierarchy.finest());
        for seed in 0..5 {
            let g = random(2 * ctx.coarse().n_faces(), seed);
            let a = ctx.aggregate.v.transpose().apply(&fine_div.apply(&ctx.subdivide(&g)));
            let b = ops.div.apply(&g);
            assert!((&a - &b).norm() <= 1e-10 * b.norm());
        }
        assert!((&(&ops.div * &ctx.system.d0) - &ops.lap_v).max_abs() < 1e-12 * ops.lap_v.max_abs());
    }

    #[test]
    fn sem_sequences() {
        let ctx = SemContext::build(&shapes::octahedron(), 2).unwrap();
        let ops = sem_operators(&ctx);
        assert!((&ops.curl * &ctx.system.d0).max_abs() < 1e-13);
        let x = random(ctx.coarse().n_edges(), 3);
        let co = ops.hodge.mass_solve(&ops.curl.transpose().apply(&x));
        let div = ops.div.apply(&co);
        assert!(div.norm() <= 1e-10 * co.norm());
        assert!(ops.hodge.edge_laplacian_apply(&x).dot(&x) > 0.0);
    }

    #[test]
    fn decomposition_of_gradient() {
        let ctx = SemContext::build(&shapes::icosahedron(), 1).unwrap();
        let f = random(ctx.coarse().n_vertices(), 7);
        let g = HalfedgeForm { values: ctx.system.d0.apply(&f) };
        let r = sem_hodge_decompose(&ctx, &g).unwrap();
        let n = g.values.norm();
        assert!(r.parts.coexact.norm() < 1e-8 * n && r.parts.harmonic.norm() < 1e-8 * n);
        assert_eq!(r.harmonic_dim, Some(0));
    }

    #[test]
    fn torus_harmonics_and_pollution() {
        let ctx = SemContext::build(&shapes::torus(6, 5, 2.0, 0.7), 1).unwrap();
        let g = HalfedgeForm { values: random(2 * ctx.coarse().n_faces(), 11) };
        let r = sem_hodge_decompose(&ctx, &g).unwrap();
        assert_eq!(r.harmonic_dim, Some(2));
        assert!(r.reconstruction < 1e-8 && r.orthogonality < 1e-8, "{} {}", r.reconstruction, r.orthogonality);
        let co = r.divergence.iter().find(|c| c.component == "coexact").unwrap();
        assert!(co.restricted < 1e-8, "{}", co.restricted);
        assert!(co.fine_linf > 1e-6);
    }

    #[test]
    fn boundary_rejected() {
        let ctx = SemContext::build(&shapes::disk(2), 1).unwrap();
        let g = HalfedgeForm { values: DVector::zeros(2 * ctx.coarse().n_faces()) };
        assert!(matches!(sem_hodge_decompose(&ctx, &g), Err(Error::BoundaryMeshUnsupported)));
    }
}

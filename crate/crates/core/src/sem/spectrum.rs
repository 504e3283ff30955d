//! Hodge-Laplacian spectra split into exact and coexact families.

use nalgebra::DVector;
use serde::Serialize;

use super::{HodgeSystem, MassSet, SemContext};
use crate::error::{Error, Result};
use crate::halfedge::{curl_gamma, d0_gamma, mass_gamma, mass_gamma_inv};
use crate::linalg::{generalized_sym_eigen, lanczos_smallest, sym_eigen, Cholesky};
use crate::mesh::Mesh;
use crate::operators::Masses;
use crate::sparse::SparseOperator;
use crate::subdivision::Hierarchy;

/// Eigenpairs of both families, each sorted ascending.
///
/// Exact family: `(d0ᵀ M d0) φ = λ Mv φ`, field `d0 φ`.
/// Coexact family: `Me* (C M⁻¹ Cᵀ) ψ = μ ψ`, field `M⁻¹ Cᵀ ψ`.
#[derive(Clone, Debug)]
pub struct HodgeSpectrum {
    pub exact: Vec<(f64, DVector<f64>)>,
    pub coexact: Vec<(f64, DVector<f64>)>,
}

impl HodgeSpectrum {
    /// First `count` nonzero eigenvalues of the merged families.
    pub fn nonzero(&self, count: usize) -> Vec<f64> {
        merge_nonzero(self.exact.iter().map(|e| e.0).chain(self.coexact.iter().map(|e| e.0)).collect(), count)
    }
}

fn merge_nonzero(mut all: Vec<f64>, count: usize) -> Vec<f64> {
    let scale = all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    all.retain(|v| v.abs() > 1e-8 * scale);
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    all.truncate(count);
    all
}

/// Dense spectrum of a Hodge system (coarse meshes only).
pub fn hodge_spectrum(sys: &HodgeSystem, count: usize) -> Result<HodgeSpectrum> {
    let lap = sys.vertex_laplacian().to_dense();
    let mv = sys.masses.v.to_dense();
    let (vals, vecs) = generalized_sym_eigen(&lap, &mv)?;
    let exact = (0..vals.len().min(count)).map(|i| (vals[i], vecs.column(i).into_owned())).collect();

    let ct = sys.curl.transpose().to_dense();
    let k = sys.curl.to_dense() * Cholesky::new(&sys.masses.gamma)?.solve_mat(&ct);
    let k = (&k + k.transpose()) * 0.5;
    let me = sys.masses.e_star.to_dense();
    let l = me.cholesky().ok_or_else(|| Error::EigensolverFailure("dual-edge mass not positive definite".into()))?.l();
    let t = l.transpose() * &k * &l;
    let (mu, w) = sym_eigen(&((&t + t.transpose()) * 0.5))?;
    let coexact = (0..mu.len().min(count)).map(|i| (mu[i], &l * w.column(i))).collect();
    Ok(HodgeSpectrum { exact, coexact })
}

/// Restricted spectrum on the coarse level of a context.
pub fn sem_hodge_spectrum(ctx: &SemContext, count: usize) -> Result<HodgeSpectrum> {
    hodge_spectrum(&ctx.system, count)
}

/// Relative eigen-residuals `‖K u − λ M u‖ / ‖λ M u‖` of both families.
///
/// Zero modes report `‖u‖ / ‖φ‖` instead (their fields must vanish).
pub fn eigen_residuals(sys: &HodgeSystem, spec: &HodgeSpectrum) -> (Vec<f64>, Vec<f64>) {
    let scale = spec.exact.iter().chain(&spec.coexact).fold(0.0f64, |m, e| m.max(e.0.abs()));
    let res = |lambda: f64, u: DVector<f64>, x: &DVector<f64>| {
        if lambda.abs() <= 1e-10 * scale {
            return u.norm() / x.norm();
        }
        let mu = sys.masses.gamma.apply(&u) * lambda;
        (sys.stiffness_apply(&u) - &mu).norm() / mu.norm()
    };
    let exact = spec.exact.iter().map(|(l, phi)| res(*l, sys.d0.apply(phi), phi)).collect();
    let coexact = spec.coexact.iter().map(|(m, psi)| res(*m, sys.mass_solve(&sys.curl.transpose().apply(psi)), psi)).collect();
    (exact, coexact)
}

/// First `count` nonzero Hodge eigenvalues of the plain operators on a large
/// mesh by shift-invert Lanczos on both families.
pub fn fine_hodge_eigenvalues(mesh: &Mesh, count: usize, sigma: f64) -> Result<Vec<f64>> {
    let extra = count + 4;
    let masses = Masses::new(mesh);
    let d0 = d0_gamma(mesh);
    let lap = &(&d0.transpose() * &mass_gamma(mesh)) * &d0;
    let exact = family(&lap, &masses.v.diag(), extra, sigma, 1)?;
    let c = curl_gamma(mesh);
    let k = &(&c * &mass_gamma_inv(mesh)) * &c.transpose();
    let b: Vec<f64> = masses.e_star.diag().iter().map(|x| 1.0 / x).collect();
    let coexact = family(&k, &b, extra, sigma, 2)?;
    Ok(merge_nonzero(exact.into_iter().chain(coexact).collect(), count))
}

fn family(a: &SparseOperator, b: &[f64], count: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let bop = SparseOperator::diagonal(b, a.col_space);
    let shifted = a - &bop.scale(sigma);
    let chol = Cholesky::new(&shifted)?;
    lanczos_smallest(a.nrows(), count, sigma, |x| chol.solve(x), |x| DVector::from_fn(x.len(), |i, _| b[i] * x[i]), seed)
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub reference: Vec<f64>,
    pub sem: Vec<f64>,
    pub fem: Vec<f64>,
    pub sem_relative: Vec<f64>,
    pub fem_relative: Vec<f64>,
    /// Fraction of indices where the restricted error is smaller.
    pub sem_better_fraction: f64,
}

/// Compares the first `count` nonzero coarse eigenvalues of the restricted and
/// plain operators with those of the plain operators on the finest level.
pub fn spectrum_experiment(h: &Hierarchy, count: usize) -> Result<SpectrumReport> {
    let coarse = &h.meshes[0];
    let sem = HodgeSystem::new(coarse, super::restricted_masses(h, 0, h.levels())?)?;
    let fem = HodgeSystem::new(coarse, MassSet::plain(coarse))?;
    let sem = hodge_spectrum(&sem, count + 4)?.nonzero(count);
    let fem = hodge_spectrum(&fem, count + 4)?.nonzero(count);
    let scale = sem.first().copied().unwrap_or(1.0);
    let reference = fine_hodge_eigenvalues(h.finest(), count, -1e-2 * scale)?;
    let n = count.min(sem.len()).min(fem.len()).min(reference.len());
    let rel = |v: &[f64]| (0..n).map(|i| (v[i] - reference[i]).abs() / reference[i]).collect::<Vec<_>>();
    let sem_relative = rel(&sem);
    let fem_relative = rel(&fem);
    let better = (0..n).filter(|&i| sem_relative[i] < fem_relative[i]).count();
    Ok(SpectrumReport { reference, sem, fem, sem_relative, fem_relative, sem_better_fraction: better as f64 / n.max(1) as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn exact_family_residuals() {
        let ctx = SemContext::build(&shapes::icosahedron(), 2).unwrap();
        let spec = sem_hodge_spectrum(&ctx, 12).unwrap();
        assert!(spec.exact[0].0.abs() < 1e-10);
        let (ex, co) = eigen_residuals(&ctx.system, &spec);
        assert!(ex[..10].iter().all(|&r| r <= 1e-8), "{ex:?}");
        assert!(co[..10].iter().all(|&r| r <= 1e-8), "{co:?}");
    }

    #[test]
    fn torus_has_two_harmonics() {
        let ctx = SemContext::build(&shapes::torus(6, 5, 2.0, 0.7), 1).unwrap();
        let k = ctx.system.stiffness_dense().unwrap();
        let (vals, _) = generalized_sym_eigen(&k, &ctx.system.masses.gamma.to_dense()).unwrap();
        let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(vals.iter().filter(|v| v.abs() < 1e-8 * scale).count(), 2);
    }

    #[test]
    fn lanczos_matches_dense() {
        let m = shapes::icosphere(1);
        let sys = HodgeSystem::plain(&m).unwrap();
        let dense = hodge_spectrum(&sys, 200).unwrap().nonzero(10);
        let lz = fine_hodge_eigenvalues(&m, 10, -0.01).unwrap();
        for (a, b) in dense.iter().zip(&lz) {
            assert!((a - b).abs() < 1e-8 * a, "{a} vs {b}");
        }
    }
}

//! Vector Poisson error experiments.

use nalgebra::DVector;
use serde::Serialize;

use super::{restricted_chain, restricted_masses, HodgeSystem, MassSet};
use crate::error::Result;
use crate::halfedge::{curl_gamma, project_p};
use crate::mesh::{Mesh, Point};
use crate::subdivision::Hierarchy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "SEM")]
    Sem,
    #[serde(rename = "FEM")]
    Fem,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub level: usize,
    pub method: Method,
    /// Mean edge length of the solve level.
    pub h: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "Linf")]
    pub linf: f64,
    #[serde(rename = "curlL2")]
    pub curl_l2: f64,
}

/// Smooth procedural field evaluated at face barycenters.
pub fn smooth_test_field(x: &Point) -> Point {
    use std::f64::consts::PI;
    let r2 = x.norm_squared().max(1e-12);
    Point::new((PI * x.x).sin() * x.y, (PI * x.x * x.y).sin() / r2, (PI * x.z).cos() + x.x * x.x + x.y * x.y)
}

/// `P v` of a field sampled at barycenters after removing the normal part.
pub fn sample_field(mesh: &Mesh, field: &dyn Fn(&Point) -> Point) -> DVector<f64> {
    let mut v = DVector::zeros(3 * mesh.n_faces());
    for f in 0..mesh.n_faces() {
        let n = mesh.face_normal(f);
        let mut x = field(&mesh.face_centroid(f));
        x -= n * n.dot(&x);
        v.fixed_rows_mut::<3>(3 * f).copy_from(&x);
    }
    project_p(mesh).apply(&v)
}

struct Metric {
    mass: crate::sparse::SparseOperator,
    mass_e: crate::sparse::SparseOperator,
    curl: crate::sparse::SparseOperator,
    total: f64,
    total_e: f64,
}

impl Metric {
    fn new(mesh: &Mesh) -> Self {
        let m = MassSet::plain(mesh);
        let total = m.gamma.triplets().iter().map(|t| t.2).sum();
        let total_e = m.e_star.triplets().iter().map(|t| t.2).sum();
        Metric { mass: m.gamma, mass_e: m.e_star, curl: curl_gamma(mesh), total, total_e }
    }

    fn errors(&self, d: &DVector<f64>) -> (f64, f64, f64) {
        let l2 = (d.dot(&self.mass.apply(d)).max(0.0) / self.total).sqrt();
        let linf = d.amax();
        let cd = self.curl.apply(d);
        let curl_l2 = (cd.dot(&self.mass_e.apply(&cd)).max(0.0) / self.total_e).sqrt();
        (l2, linf, curl_l2)
    }
}

fn lift(h: &Hierarchy, from: usize, x: &DVector<f64>) -> DVector<f64> {
    h.sets[from..].iter().fold(x.clone(), |acc, s| s.gamma.apply(&acc))
}

/// OLS slope of `ln err` against `ln h`.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.ln(), p.1.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    pub rows: Vec<ErrorRow>,
    /// L2 slopes fitted over levels `1..l-1`.
    pub sem_slope: Option<f64>,
    pub fem_slope: Option<f64>,
}

/// Solves the vector Poisson problem at every level `k < l` with restricted
/// and plain operators, subdivides to level `l` and compares with the plain
/// solve on level `l`.
pub fn projection_error_experiment(h: &Hierarchy, field: &dyn Fn(&Point) -> Point) -> Result<ProjectionReport> {
    let l = h.levels();
    let b0 = sample_field(&h.meshes[0], field);
    let mut b = vec![b0];
    for s in &h.sets {
        let next = s.gamma.apply(b.last().unwrap());
        b.push(next);
    }
    let chain = restricted_chain(h, l)?;
    let fine = h.finest();
    let mut truth_sys = HodgeSystem::new(fine, chain[l].clone())?;
    let truth = truth_sys.solve(&chain[l].gamma.apply(&b[l]))?;
    let metric = Metric::new(fine);
    let mut rows = Vec::new();
    for k in 0..=l {
        let mesh = &h.meshes[k];
        let hk = mesh.mean_edge_length();
        for (method, masses) in [(Method::Sem, chain[k].clone()), (Method::Fem, MassSet::plain(mesh))] {
            let (l2, linf, curl_l2) = if k == l {
                (0.0, 0.0, 0.0)
            } else {
                let rhs = masses.gamma.apply(&b[k]);
                let x = HodgeSystem::new(mesh, masses)?.solve(&rhs)?;
                metric.errors(&(&truth - lift(h, k, &x)))
            };
            rows.push(ErrorRow { level: k, method, h: hk, l2, linf, curl_l2 });
        }
    }
    let slope = |m: Method| {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.method == m && r.level >= 1 && r.level < l).map(|r| (r.h, r.l2)).collect();
        log_slope(&pts)
    };
    let sem_slope = slope(Method::Sem);
    let fem_slope = slope(Method::Fem);
    Ok(ProjectionReport { rows, sem_slope, fem_slope })
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorErrorRow {
    /// Level the coarse operators are restricted from.
    pub k: usize,
    /// Against the plain solve on the finest level.
    #[serde(rename = "L2")]
    pub l2: f64,
    #[serde(rename = "Linf")]
    pub linf: f64,
    /// Against the coarse solve restricted from the finest level.
    pub l2_vs_full: f64,
    pub linf_vs_full: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorErrorReport {
    pub rows: Vec<OperatorErrorRow>,
}

/// Solves the coarse vector Poisson problem with operators restricted from each
/// level `k ≤ l`; errors are measured on level `l` after subdivision.
pub fn operator_error_experiment(h: &Hierarchy, field: &dyn Fn(&Point) -> Point) -> Result<OperatorErrorReport> {
    let l = h.levels();
    let coarse = &h.meshes[0];
    let b0 = sample_field(coarse, field);
    let bl = lift(h, 0, &b0);
    let fine = h.finest();
    let fine_masses = MassSet::plain(fine);
    let rhs = fine_masses.gamma.apply(&bl);
    let truth = HodgeSystem::new(fine, fine_masses)?.solve(&rhs)?;
    let metric = Metric::new(fine);
    let mut sols = Vec::new();
    for k in 0..=l {
        let masses = restricted_masses(h, 0, k)?;
        let rhs = masses.gamma.apply(&b0);
        sols.push(lift(h, 0, &HodgeSystem::new(coarse, masses)?.solve(&rhs)?));
    }
    let rows = (0..=l)
        .map(|k| {
            let (l2, linf, _) = metric.errors(&(&truth - &sols[k]));
            let (l2f, linff, _) = metric.errors(&(&sols[l] - &sols[k]));
            OperatorErrorRow { k, l2, linf, l2_vs_full: l2f, linf_vs_full: linff }
        })
        .collect();
    Ok(OperatorErrorReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h: &f64| (h, 3.0 * h.powf(2.0))).collect();
        assert!((log_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(log_slope(&pts[..1]).is_none());
    }

    #[test]
    fn projection_small() {
        let h = Hierarchy::build(&shapes::icosahedron(), 2).unwrap();
        let r = projection_error_experiment(&h, &smooth_test_field).unwrap();
        assert_eq!(r.rows.len(), 6);
        for row in r.rows.iter().filter(|r| r.level == 2) {
            assert_eq!(row.l2, 0.0);
        }
        for k in 0..2 {
            let get = |m| r.rows.iter().find(|x| x.level == k && x.method == m).unwrap().l2;
            assert!(get(Method::Sem) <= get(Method::Fem), "level {k}");
        }
    }

    #[test]
    fn operator_error_full_depth_is_reference() {
        let h = Hierarchy::build(&shapes::icosahedron(), 2).unwrap();
        let r = operator_error_experiment(&h, &smooth_test_field).unwrap();
        assert_eq!(r.rows[2].l2_vs_full, 0.0);
        assert!(r.rows[0].l2 > r.rows[2].l2);
    }
}

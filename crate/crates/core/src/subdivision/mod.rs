//! Structure-preserving subdivision of vertex functions, 1-forms, dual edge
//! and dual face quantities, and halfedge forms.

pub mod derive;
pub mod spectral;
pub mod stencils;
pub mod taps;

use nalgebra::DVector;
use serde::Serialize;

pub use derive::{standard_stencils, stencils_for, DeriveStep, StencilSet};
pub use spectral::{spectral_check, LocalOp, LocalSpectrum};
pub use stencils::{EdgeOp, Key};

use crate::error::{Error, Result};
use crate::halfedge::{curl_gamma, d0_gamma, from_mean_curl_op, mean_curl_null_sum, to_mean_curl_op};
use crate::mesh::{Mesh, RefinementMaps};
use crate::operators::{dec_d0, dec_d1, edge_face_average};
use crate::sparse::{relative_residual, Space, SparseOperator};
use taps::{Coef, Mode, Row, Taps};

/// One level of subdivision matrices (fine rows, coarse columns).
#[derive(Clone, Debug)]
pub struct SubdivisionSet {
    pub v: SparseOperator,
    pub one: SparseOperator,
    pub e_star: SparseOperator,
    pub f_star: SparseOperator,
    pub gamma: SparseOperator,
}

fn assemble<I>(rows: I, nrows: usize, ncols: usize, row_space: Space, col_space: Space, set: &StencilSet) -> Result<SparseOperator>
where
    I: Iterator<Item = Option<Row>>,
{
    let mut t = Vec::new();
    for (r, row) in rows.enumerate() {
        let row = row.ok_or_else(|| Error::MissingStencil(format!("row {r}")))?;
        for (c, coef) in row {
            let v = match coef {
                Coef::Const(v) => v,
                Coef::Param(key, s) => s * set.get(&key).ok_or_else(|| Error::MissingStencil(format!("{key:?}")))?,
            };
            t.push((r, c, v));
        }
    }
    Ok(SparseOperator::from_triplets(nrows, ncols, row_space, col_space, &t))
}

/// Assembles all subdivision matrices for one quadrisection step.
pub fn build_subdivision_set(coarse: &Mesh, fine: &Mesh, maps: &RefinementMaps, set: &StencilSet) -> Result<SubdivisionSet> {
    let taps = Taps::new(coarse, fine, maps, Mode::Full);
    let (nv, ne, nf) = (coarse.n_vertices(), coarse.n_edges(), coarse.n_faces());
    let v = assemble((0..fine.n_vertices()).map(|i| taps.vertex_row(i)), fine.n_vertices(), nv, Space::V, Space::V, set)?;
    let one = assemble((0..fine.n_edges()).map(|e| taps.edge_row(e, EdgeOp::S1)), fine.n_edges(), ne, Space::E, Space::E, set)?;
    let e_star = assemble((0..fine.n_edges()).map(|e| taps.edge_row(e, EdgeOp::SE)), fine.n_edges(), ne, Space::EStar, Space::EStar, set)?;
    let f_star = assemble((0..fine.n_faces()).map(|f| taps.face_row(f)), fine.n_faces(), nf, Space::FStar, Space::FStar, set)?;
    let mid = SparseOperator::block_diag(&[&one, &e_star], Space::MeanCurl, Space::MeanCurl);
    let gamma = (&from_mean_curl_op(fine) * &(&mid * &to_mean_curl_op(coarse))).with_spaces(Space::Gamma, Space::Gamma);
    Ok(SubdivisionSet { v, one, e_star, f_star, gamma })
}

/// A mesh hierarchy `0..=l` with per-level subdivision matrices.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub meshes: Vec<Mesh>,
    pub maps: Vec<RefinementMaps>,
    pub sets: Vec<SubdivisionSet>,
}

impl Hierarchy {
    /// Quadrisects `levels` times; fine positions come from the vertex scheme.
    pub fn build(coarse: &Mesh, levels: usize) -> Result<Self> {
        Self::build_impl(coarse, levels, None)
    }

    /// As `build`, with an explicit stencil table.
    pub fn build_with(coarse: &Mesh, levels: usize, set: &StencilSet) -> Result<Self> {
        Self::build_impl(coarse, levels, Some(set))
    }

    fn build_impl(coarse: &Mesh, levels: usize, table: Option<&StencilSet>) -> Result<Self> {
        let mut h = Hierarchy { meshes: vec![coarse.clone()], maps: Vec::new(), sets: Vec::new() };
        for _ in 0..levels {
            let m = h.meshes.last().unwrap();
            let cached;
            let stencils = match table {
                Some(s) => s,
                None => {
                    cached = stencils_for(m)?;
                    &*cached
                }
            };
            let (topo, maps) = m.quadrisect()?;
            let set = build_subdivision_set(m, &topo, &maps, stencils)?;
            let pos = subdivide_positions(&set.v, m);
            let fine = topo.with_positions(pos)?;
            h.meshes.push(fine);
            h.maps.push(maps);
            h.sets.push(set);
        }
        Ok(h)
    }

    /// Quadrisects keeping midpoint positions (no smoothing).
    pub fn build_midpoint(coarse: &Mesh, levels: usize) -> Result<Self> {
        let mut h = Hierarchy { meshes: vec![coarse.clone()], maps: Vec::new(), sets: Vec::new() };
        for _ in 0..levels {
            let m = h.meshes.last().unwrap();
            let stencils = stencils_for(m)?;
            let (fine, maps) = m.quadrisect()?;
            let set = build_subdivision_set(m, &fine, &maps, &stencils)?;
            h.meshes.push(fine);
            h.maps.push(maps);
            h.sets.push(set);
        }
        Ok(h)
    }

    pub fn levels(&self) -> usize {
        self.sets.len()
    }

    pub fn finest(&self) -> &Mesh {
        self.meshes.last().unwrap()
    }

    /// Aggregates from level `from` to the finest level.
    pub fn aggregate_from(&self, from: usize) -> Result<SubdivisionSet> {
        aggregate(&self.meshes[from], &self.sets[from..])
    }
}

fn subdivide_positions(sv: &SparseOperator, m: &Mesh) -> Vec<crate::mesh::Point> {
    let mut out = Vec::with_capacity(sv.nrows());
    let coords: Vec<DVector<f64>> = (0..3).map(|k| DVector::from_iterator(m.n_vertices(), m.positions.iter().map(|p| p[k]))).collect();
    let sub: Vec<DVector<f64>> = coords.iter().map(|c| sv * c).collect();
    for i in 0..sv.nrows() {
        out.push(crate::mesh::Point::new(sub[0][i], sub[1][i], sub[2][i]));
    }
    out
}

/// Products of per-level matrices; an empty list gives identities on `coarse`.
pub fn aggregate(coarse: &Mesh, sets: &[SubdivisionSet]) -> Result<SubdivisionSet> {
    let mut acc = SubdivisionSet {
        v: SparseOperator::identity(coarse.n_vertices(), Space::V),
        one: SparseOperator::identity(coarse.n_edges(), Space::E),
        e_star: SparseOperator::identity(coarse.n_edges(), Space::EStar),
        f_star: SparseOperator::identity(coarse.n_faces(), Space::FStar),
        gamma: SparseOperator::identity(2 * coarse.n_faces(), Space::Gamma),
    };
    for s in sets {
        acc = SubdivisionSet {
            v: s.v.try_compose(&acc.v)?,
            one: s.one.try_compose(&acc.one)?,
            e_star: s.e_star.try_compose(&acc.e_star)?,
            f_star: s.f_star.try_compose(&acc.f_star)?,
            gamma: s.gamma.try_compose(&acc.gamma)?,
        };
    }
    Ok(acc)
}

/// Relative Frobenius residuals of the commutation relations.
#[derive(Clone, Debug, Serialize)]
pub struct CommutationReport {
    /// `S1 d0 = d0 SV`
    pub d0: f64,
    /// `SF d1 = d1 S1`
    pub d1: f64,
    /// `SF A = A SE`
    pub average: f64,
    /// `C SΓ = SE C`
    pub curl: f64,
    /// `SΓ d0Γ = d0Γ SV`
    pub gradient: f64,
    /// Mean-curl null-sum of the subdivided intermediate `(z1, eps)`.
    pub null_sum: f64,
}

impl CommutationReport {
    pub fn max(&self) -> f64 {
        [self.d0, self.d1, self.average, self.curl, self.gradient, self.null_sum].into_iter().fold(0.0, f64::max)
    }
}

/// Commutation residuals of (possibly aggregated) matrices between two meshes.
pub fn commutation_report(coarse: &Mesh, fine: &Mesh, s: &SubdivisionSet) -> CommutationReport {
    let d0 = relative_residual(&(&s.one * &dec_d0(coarse)), &(&dec_d0(fine) * &s.v));
    let d1 = relative_residual(&(&s.f_star * &dec_d1(coarse)), &(&dec_d1(fine) * &s.one));
    let average = relative_residual(&(&s.f_star * &edge_face_average(coarse)), &(&edge_face_average(fine) * &s.e_star));
    let curl = relative_residual(&(&curl_gamma(fine) * &s.gamma), &(&s.e_star * &curl_gamma(coarse)));
    let gradient = relative_residual(&(&s.gamma * &d0_gamma(coarse)), &(&d0_gamma(fine) * &s.v));
    let mid = SparseOperator::block_diag(&[&s.one, &s.e_star], Space::MeanCurl, Space::MeanCurl);
    let inter = &mid * &to_mean_curl_op(coarse);
    let ns = &mean_curl_null_sum(fine) * &inter;
    let null_sum = ns.frobenius() / inter.frobenius().max(f64::MIN_POSITIVE);
    CommutationReport { d0, d1, average, curl, gradient, null_sum }
}

/// Halfedge values on boundary edges (one per boundary edge, in edge order).
pub fn boundary_values(mesh: &Mesh) -> SparseOperator {
    let w = to_mean_curl_op(mesh);
    let rows: Vec<usize> = (0..mesh.n_edges()).filter(|&e| mesh.boundary_edge[e]).collect();
    w.select_rows(&rows).with_spaces(Space::Other, Space::Gamma)
}

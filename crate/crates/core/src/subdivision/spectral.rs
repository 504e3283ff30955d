//! Eigenvalues of local subdivision matrices around a single vertex.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{build_subdivision_set, StencilSet};
use crate::error::Result;
use crate::linalg::eigenvalues;
use crate::shapes;
use crate::sparse::SparseOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LocalOp {
    Vertex,
    OneForm,
    DualEdge,
    DualFace,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalSpectrum {
    pub op: LocalOp,
    /// Interior valence, or number of faces at a boundary vertex.
    pub valence: usize,
    pub boundary: bool,
    /// Real and imaginary parts, sorted by decreasing modulus.
    pub eigenvalues: Vec<(f64, f64)>,
    pub dominant: f64,
    pub subdominant: f64,
    /// Set when the subdominant modulus reaches 1.
    pub flagged: bool,
}

/// Local subdivision matrix of `op` around a vertex with `d` faces.
///
/// Vertex rows use the center and its neighbors; edge rows use spokes followed
/// by ring edges (spoke `i` runs center to neighbor `i`, ring `i` runs neighbor
/// `i` to `i + 1`); face rows use the faces of the ring.
pub fn local_matrix(set: &StencilSet, op: LocalOp, d: usize, boundary: bool) -> Result<DMatrix<f64>> {
    let coarse = shapes::wedge(d, 3, boundary);
    let (fine, maps) = coarse.quadrisect()?;
    let s = build_subdivision_set(&coarse, &fine, &maps, set)?;
    let v = 0;
    let ring = &coarse.rings[v];
    let w = &ring.neighbors;
    let nf = ring.faces.len();
    let nv = coarse.n_vertices();
    let m: Vec<usize> = w.iter().map(|&x| nv + coarse.edge(v, x).unwrap()).collect();
    let next = |i: usize| (i + 1) % w.len();

    let pick = |op: &SparseOperator, rows: &[(usize, f64)], cols: &[(usize, f64)]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i].1 * cols[j].1 * op.get(rows[i].0, cols[j].0))
    };
    let edges = |mesh: &crate::mesh::Mesh, ids: &[usize], signed: bool| {
        let sg = |a: usize, b: usize| if signed { mesh.edge_sign(a, b) } else { 1.0 };
        let mut out: Vec<(usize, f64)> = ids.iter().map(|&x| (mesh.edge(v, x).unwrap(), sg(v, x))).collect();
        for i in 0..nf {
            let (a, b) = (ids[i], ids[next(i)]);
            out.push((mesh.edge(a, b).unwrap(), sg(a, b)));
        }
        out
    };
    Ok(match op {
        LocalOp::Vertex => {
            let rows: Vec<_> = std::iter::once(v).chain(m.iter().copied()).map(|x| (x, 1.0)).collect();
            let cols: Vec<_> = std::iter::once(v).chain(w.iter().copied()).map(|x| (x, 1.0)).collect();
            pick(&s.v, &rows, &cols)
        }
        LocalOp::OneForm => pick(&s.one, &edges(&fine, &m, true), &edges(&coarse, w, true)),
        LocalOp::DualEdge => pick(&s.e_star, &edges(&fine, &m, false), &edges(&coarse, w, false)),
        LocalOp::DualFace => {
            let fr = &fine.rings[v];
            let rows: Vec<_> = (0..nf)
                .map(|i| {
                    let p = fr.neighbors.iter().position(|&x| x == m[i]).unwrap();
                    (fr.faces[p], 1.0)
                })
                .collect();
            let cols: Vec<_> = ring.faces.iter().map(|&f| (f, 1.0)).collect();
            pick(&s.f_star, &rows, &cols)
        }
    })
}

pub fn local_spectrum(set: &StencilSet, op: LocalOp, d: usize, boundary: bool) -> Result<LocalSpectrum> {
    let a = local_matrix(set, op, d, boundary)?;
    let mut ev: Vec<(f64, f64)> = eigenvalues(&a)?;
    let norm = |z: &(f64, f64)| z.0.hypot(z.1);
    ev.sort_by(|x, y| norm(y).partial_cmp(&norm(x)).unwrap().then(y.0.partial_cmp(&x.0).unwrap()));
    let dominant = ev.first().map_or(0.0, norm);
    let subdominant = ev.get(1).map_or(0.0, norm);
    Ok(LocalSpectrum {
        op,
        valence: d,
        boundary,
        eigenvalues: ev,
        dominant,
        subdominant,
        flagged: subdominant >= 1.0,
    })
}

/// Local spectra of all four schemes at one vertex configuration.
pub fn spectral_check(set: &StencilSet, d: usize, boundary: bool) -> Result<Vec<LocalSpectrum>> {
    [LocalOp::Vertex, LocalOp::OneForm, LocalOp::DualEdge, LocalOp::DualFace]
        .into_iter()
        .map(|op| local_spectrum(set, op, d, boundary))
        .collect()
}

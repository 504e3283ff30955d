//! Vector-field design by minimizing the restricted Hodge energy under hard
//! per-face constraints.

use nalgebra::DVector;

use super::SemContext;
use crate::error::{Error, Result};
use crate::halfedge::HalfedgeForm;
use crate::mesh::Point;

#[derive(Clone, Debug)]
pub struct Design {
    pub coarse: HalfedgeForm,
    pub fine: HalfedgeForm,
    /// Restricted Hodge energy of the coarse field.
    pub energy: f64,
    /// Largest `|v·n| / |v|` removed from a constraint before packing.
    pub projection_residual: f64,
}

/// Packed halfedge values of a face vector (normal part dropped).
pub fn pack_face_vector(mesh: &crate::mesh::Mesh, f: usize, v: &Point) -> [f64; 2] {
    let n = mesh.face_normal(f);
    let t = v - n * n.dot(v);
    let e = mesh.face_edges[f];
    [mesh.edge_vector(e[0]).dot(&t), mesh.edge_vector(e[1]).dot(&t)]
}

/// Interpolates face constraints by minimizing the restricted Hodge energy
/// with the constrained faces' packed values held fixed.
pub fn design_field(ctx: &SemContext, constraints: &[(usize, Point)]) -> Result<Design> {
    if constraints.is_empty() {
        return Err(Error::EmptyConstraints);
    }
    let mesh = ctx.coarse();
    let mut fixed = Vec::with_capacity(2 * constraints.len());
    let mut projection_residual = 0.0f64;
    for (f, v) in constraints {
        if *f >= mesh.n_faces() {
            return Err(Error::DimensionMismatch(format!("constraint on face {f} of {}", mesh.n_faces())));
        }
        let n = mesh.face_normal(*f);
        if v.norm() > 0.0 {
            projection_residual = projection_residual.max(n.dot(v).abs() / v.norm());
        }
        let [a, b] = pack_face_vector(mesh, *f, v);
        fixed.push((2 * f, a));
        fixed.push((2 * f + 1, b));
    }
    let g: DVector<f64> = if fixed.len() == ctx.system.n() {
        let mut g = DVector::zeros(ctx.system.n());
        for &(i, v) in &fixed {
            g[i] = v;
        }
        g
    } else {
        ctx.system.solve_fixed(&fixed)?
    };
    let energy = ctx.system.energy(&g);
    let fine = HalfedgeForm { values: ctx.subdivide(&g) };
    Ok(Design { coarse: HalfedgeForm { values: g }, fine, energy, projection_residual })
}

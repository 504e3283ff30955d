//! Halfedge-form calculus for piecewise-constant vector fields on triangle
//! meshes, with curl- and exactness-preserving subdivision, restricted (SEM)
//! operators and branched N-directional extensions.

pub mod branched;
pub mod error;
pub mod halfedge;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod sem;
pub mod shapes;
pub mod sparse;
pub mod subdivision;

pub use error::{Error, Result};
pub use mesh::{Mesh, Point, RefinementMaps};
pub use sparse::{SparseOperator, Space};

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("face {face} references vertex {vertex} but only {count} vertices exist")]
    IndexOutOfRange { face: usize, vertex: usize, count: usize },
    #[error("edge ({0}, {1}) has more than two incident faces")]
    NonManifold(usize, usize),
    #[error("vertex {0} has a non-disk link")]
    NonManifoldVertex(usize),
    #[error("vertex {0} is not referenced by any face")]
    IsolatedVertex(usize),
    #[error("edge ({0}, {1}) is traversed in the same direction by two faces")]
    InconsistentOrientation(usize, usize),
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("mean-curl form violates the per-face null-sum (residual {0:e})")]
    BrokenNullSum(f64),
    #[error("operation requires a closed mesh")]
    BoundaryMeshUnsupported,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("stencil constraints infeasible: residual {residual:e} in relation {relation}")]
    InfeasibleConstraints { residual: f64, relation: String },
    #[error("{count} stencil degrees of freedom unresolved for {context}")]
    UnresolvedDOF { count: usize, context: String },
    #[error("no stencil coefficient for {0}")]
    MissingStencil(String),
    #[error("vertex {0} is singular and cannot be combed")]
    SingularVertex(usize),
    #[error("vector on face {face} is not tangent (|v·n|/|v| = {residual:e})")]
    NotTangent { face: usize, residual: f64 },
    #[error("no constraints given")]
    EmptyConstraints,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

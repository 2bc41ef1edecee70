use thiserror::Error;

/// Errors produced by field construction, discrete operators, and file I/O.
///
/// File-format problems are split into distinct variants (`MalformedHeader`,
/// `PayloadMismatch`, `UnsupportedKind`) so callers can map them to stable
/// error codes.
#[derive(Debug, Error)]
pub enum VecpotError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite sample at index {index:?}: {value}")]
    NonFiniteSample { index: Vec<usize>, value: f64 },

    #[error("invalid norm spec: {0}")]
    InvalidNormSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field file header: {0}")]
    MalformedHeader(String),

    #[error("field file payload mismatch: {0}")]
    PayloadMismatch(String),

    #[error("unsupported field kind: {0}")]
    UnsupportedKind(String),

    #[error("normal vector is not unit length: |n| = {0}")]
    NonUnitNormal(f64),

    #[error("input is not a discrete gradient: relative curl {0} exceeds tolerance {1}")]
    NotAGradient(f64, f64),

    #[error("field does not vanish on the boundary: max boundary value {0} (relative)")]
    NonzeroTrace(f64),

    #[error("subgrid does not embed in the ambient grid: {0}")]
    EmbeddingError(String),

    #[error("degenerate frame: orthonormalization pivot {0}")]
    DegenerateFrame(f64),

    #[error("unsupported tensor order {0} (maximum 4)")]
    UnsupportedOrder(usize),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("polynomial degree cap exceeded: {0}")]
    DegreeCapExceeded(usize),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("insufficient stencil room near the boundary: {0}")]
    InsufficientStencil(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VecpotError>;

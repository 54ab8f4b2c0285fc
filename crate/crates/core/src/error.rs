//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A requested construction would exceed a configured resource cap.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// Array or matrix sizes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Mesh element with non-positive signed area.
    #[error("degenerate element {element}: {detail}")]
    DegenerateElement { element: usize, detail: String },

    /// Mesh violates a structural invariant (conformity, boundary loop, ...).
    #[error("mesh structure error: {0}")]
    MeshStructure(String),

    /// A point lookup fell outside the meshed polygon.
    #[error("point ({x}, {y}) not inside the mesh")]
    PointNotFound { x: f64, y: f64 },

    /// Argument outside the mathematical domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    /// DtN truncation order too high for the boundary resolution.
    #[error("DtN truncation order {n_trunc} exceeds the aliasing cap {cap} for {n_boundary} boundary nodes")]
    DtnAliasing {
        n_trunc: usize,
        cap: usize,
        n_boundary: usize,
    },

    /// Direct factorization hit a zero (or unusably small) pivot.
    #[error("linear solver failed: {0}")]
    Solver(String),

    /// Eigenvalue computation did not produce usable pairs.
    #[error("eigensolver failed: {0}")]
    Eigen(String),

    /// Level-set spec with non-increasing thresholds or bad values.
    #[error("invalid level-set spec: {0}")]
    InvalidSpec(String),

    /// Underlying file-system failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed data in one of the text file formats.
    #[error("parse error in {path} line {line}: {detail}")]
    FileFormat {
        path: String,
        line: usize,
        detail: String,
    },
}

impl Error {
    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Solver(_) | Error::Eigen(_))
    }
}

use thiserror::Error;

use crate::problem::Space;
use crate::qp::QpError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The requested output subspace is empty for this sample, e.g. the
    /// incompatible set of an instance without any annotation.
    #[error("degenerate sample: {space:?} subspace is empty ({reason})")]
    DegenerateSample { space: Space, reason: String },

    #[error("enumeration refused: {size} outputs exceed cap {cap}")]
    EnumerationCap { size: f64, cap: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset must contain at least one instance")]
    EmptyDataset,

    #[error(transparent)]
    Qp(#[from] QpError),
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on incompatible grids")]
    IncompatibleGrids,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("peak set required for this functional")]
    PeaksRequired,

    #[error("peaks unresolved: expected {expected} components, found {found}")]
    PeaksUnresolved { expected: usize, found: usize },

    #[error("mass {alpha} is not below the admissible ceiling {ceiling}")]
    MassCeiling { alpha: f64, ceiling: f64 },

    #[error("snapshot parse error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown system `{name}`; valid names: {valid}")]
    UnknownSystem { name: String, valid: String },

    #[error("invalid system definition: {0}")]
    InvalidSystem(String),

    #[error("point {point:?} lies outside the domain")]
    OutsideDomain { point: Vec<f64> },

    #[error("non-finite vector field value at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invariant part is not isolated in the given box set ({touching} boxes touch its boundary layer); try a larger region or a deeper grid")]
    NotIsolating { touching: usize },

    #[error("index pair construction failed: {reason}; offending boxes {boxes:?}")]
    Construction { reason: String, boxes: Vec<usize> },

    #[error("regions overlap at {point:?}: distance to both zero and one sets is 0")]
    RegionOverlap { point: Vec<f64> },

    #[error("filtration level {level} failed validation: {reason}; counterexample boxes {boxes:?}")]
    Filtration {
        level: usize,
        reason: String,
        boxes: Vec<usize>,
    },

    #[error("selection error: {0}")]
    Selection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to ingest {what}: {message}")]
    Ingest { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

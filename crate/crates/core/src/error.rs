use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty value set")]
    EmptyValues,
    #[error("degenerate constant map")]
    DegenerateMap,
    #[error("invalid partition grid: lower_bound={lower_bound}, interval={interval}")]
    InvalidPartitionGrid { lower_bound: f64, interval: f64 },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("gradients unsupported")]
    GradientsUnsupported,
    #[error("variance needs n >= 2 (got {0})")]
    VarianceNeedsTwo(usize),
    #[error("empty ground-truth mask")]
    EmptyGroundTruth,
    #[error("empty inputs")]
    EmptyInputs,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported method combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = core::result::Result<T, Error>;

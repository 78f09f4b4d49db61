//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors surfaced by model construction, inference, fault injection,
/// exploration, and artifact I/O.
#[derive(Debug, Error)]
pub enum DyveError {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("width multiplier must lie in (0, 1], got {0}")]
    InvalidMultiplier(f64),

    #[error("model architecture invalid: {0}")]
    InvalidArchitecture(String),

    #[error("fault target out of range: {0}")]
    FaultAddress(String),

    #[error("campaign must schedule at least one run")]
    EmptyCampaign,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("softmax temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("consistency fit needs at least two samples with distinct multipliers")]
    DegenerateFit,

    #[error(
        "fitted consistency curve has {param} = {value:.6}, outside the admissible \
         regime; widen the multiplier sweep toward smaller alpha and retrain the \
         candidate pool"
    )]
    NonConformingFit { param: &'static str, value: f64 },

    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("matrix dimensions do not match: {0}")]
    DimensionMismatch(String),

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("model file malformed: {0}")]
    ModelFormat(String),

    #[error("clustering needs at least 3 classes, got {0}")]
    NothingToCluster(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed artifact: {0}")]
    ArtifactFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DyveError>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bar_beta at index {index} is zero")]
    ZeroBarBeta { index: usize },

    #[error("coefficient {name} undefined at index {index}")]
    MissingCoefficient { name: &'static str, index: usize },

    #[error("singular transform at index {index}: parameters are corrupted")]
    SingularTransform { index: usize },

    #[error("divergent tail: {0}")]
    DivergentTail(String),

    #[error("strategy support {support} exceeds the pool's {pool} indices and has no tail rule")]
    SupportExceedsPool { support: usize, pool: usize },

    #[error("unsupported shock law: {0}")]
    UnsupportedShock(String),

    #[error("density weights have mean {mean}, expected 1")]
    UnnormalizedDensity { mean: f64 },

    #[error("utility evaluation overflowed on {flagged} of {samples} samples")]
    ObjectiveOverflow { flagged: usize, samples: usize },

    #[error("unbounded objective ({0})")]
    UnboundedObjective(String),

    #[error("constant-u: utility is constant on the searched window")]
    ConstantUtility,

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("stage {stage} failed: {reason}")]
    StageFailed { stage: usize, reason: String },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, ApmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> ApmError {
    ApmError::InvalidParameter(msg.into())
}

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("animal does not belong to this model instance")]
    ModelMismatch,

    #[error("disorder kind mismatch: model requires {required} disorder, got {got}")]
    DisorderKindMismatch { required: String, got: String },

    #[error("rate out of domain: {0}")]
    RateDomain(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("total birth rate over the region is not finite")]
    RateOverflow,

    #[error("box not contained in the configuration window")]
    BoxOutsideWindow,

    #[error("argument order: the second point must not be later than the first")]
    ArgumentOrder,

    #[error("region margin: {0}")]
    RegionMargin(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("state space overflow: more than {cap} reachable states")]
    StateSpaceOverflow { cap: usize },

    #[error("scale not simulatable: {0}")]
    ScaleNotSimulatable(String),

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

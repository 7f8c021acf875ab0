use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    #[error("invalid action for `{env}`: {reason}")]
    InvalidAction { env: String, reason: String },

    #[error("step called on a finished episode")]
    StepAfterDone,

    #[error("environment too large for exhaustive enumeration: {0}")]
    EnvTooLarge(String),

    #[error("`{0}` is a continuous environment")]
    ContinuousEnv(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("sequence `{id}`: {reason}")]
    Sequence { id: String, reason: String },

    #[error("{0}")]
    Mismatch(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

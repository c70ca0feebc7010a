use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("covariance matrix is singular: {0}")]
    SingularCovariance(String),

    #[error("slice sampler failed on axis {axis}: {reason}")]
    SliceSampler { axis: usize, reason: String },

    #[error("log target is -inf at the chain's current point {0:?}")]
    OutOfSupport(Vec<f64>),

    #[error("simulator failed: {0}")]
    Simulation(String),

    #[error("gave up after {retries} simulator failures in a row: {last}")]
    RetriesExhausted { retries: usize, last: String },

    #[error("SMC-ABC acceptance rate {rate:.2e} fell below the abort threshold in round {round}")]
    AcceptanceCollapse { round: usize, rate: f64 },

    #[error("unknown {kind} '{name}'; known: {known}")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("inference failed: {0}")]
    Inference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

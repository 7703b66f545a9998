use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the model, sampler and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("area index {index} out of range for {n_areas} areas")]
    AreaOutOfRange { index: usize, n_areas: usize },
    #[error("self-loop on area {0}")]
    SelfLoop(usize),
    #[error("need at least 2 areas, got {0}")]
    TooFewAreas(usize),
    #[error("interaction weight for edge ({i}, {j}) must be positive, got {value}")]
    NonPositiveInteraction { i: usize, j: usize, value: f64 },
    #[error("interaction weight given for ({i}, {j}), which is not an edge")]
    InteractionOnNonEdge { i: usize, j: usize },
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("period index {0} is conditioned on and has no modelled intensity")]
    ConditionedPeriod(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-positive intensity {mu} at area {area}, period {period}")]
    NonPositiveIntensity { area: usize, period: usize, mu: f64 },
    #[error("variant {variant} is missing {missing}")]
    VariantMismatch {
        variant: String,
        missing: &'static str,
    },
    #[error("unknown block: {0}")]
    UnknownBlock(String),
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

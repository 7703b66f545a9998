use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INGEST: i32 = 2;
    pub const SAMPLER: i32 = 3;
    pub const CONVERGENCE: i32 = 4;
}

/// A failure tagged with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn ingest(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::INGEST,
            error: error.into(),
        }
    }

    pub fn sampler(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: exit::SAMPLER,
            error: error.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches an exit code to fallible results.
pub trait Tag<T> {
    fn ingest(self) -> CliResult<T>;
    fn sampler(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn ingest(self) -> CliResult<T> {
        self.map_err(CliError::ingest)
    }

    fn sampler(self) -> CliResult<T> {
        self.map_err(CliError::sampler)
    }
}

use std::path::PathBuf;

/// Errors raised by the solvers, the evaluation helpers and the file formats.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (failed at pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("no informative basis: every candidate leaves the marginal likelihood unchanged or lower")]
    NoInformativeBasis,

    #[error("degenerate degrees of freedom for output {output}")]
    DegenerateDegreesOfFreedom { output: usize },

    #[error("degenerate residuals: output {output} has zero residual variance")]
    DegenerateResiduals { output: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: malformed header: {message}")]
    Header { path: PathBuf, message: String },

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

impl Error {
    /// True for failures that originate in the numerics rather than in the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NoInformativeBasis
                | Error::DegenerateDegreesOfFreedom { .. }
                | Error::DegenerateResiduals { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

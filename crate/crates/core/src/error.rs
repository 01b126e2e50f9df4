use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid GEV parameters: {0}")]
    ParameterDomain(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("invalid MCMC configuration: {0}")]
    Config(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("cannot summarize draws: {0}")]
    Summary(String),

    #[error("report error: {0}")]
    Report(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from numerics (initialization, non-finite
    /// posterior) rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Initialization(_))
    }
}

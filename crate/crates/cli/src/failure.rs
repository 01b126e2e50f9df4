use std::fmt;
use std::path::Path;

/// A failed run: reason code, process exit status and a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: "E_USAGE",
            exit: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            code: "E_IO",
            exit: EXIT_DATA,
            message: format!("{}: {err}", path.display()),
        }
    }

    /// Prefix the message with the file being processed.
    pub fn in_file(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// The single line written to stderr.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        format!("blockmax: error code={} {}", self.code, flat.join(" "))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<blockmax::Error> for Failure {
    fn from(err: blockmax::Error) -> Self {
        use blockmax::Error as E;
        let (code, exit) = match &err {
            E::ParameterDomain(_) => ("E_PARAM", EXIT_DATA),
            E::Domain(_) => ("E_DOMAIN", EXIT_DATA),
            E::EmptyInput(_) => ("E_EMPTY", EXIT_DATA),
            E::Parse { .. } => ("E_PARSE", EXIT_DATA),
            E::InvalidSeries(_) => ("E_SERIES", EXIT_DATA),
            E::Model(_) => ("E_MODEL", EXIT_DATA),
            E::Report(_) => ("E_SCHEMA", EXIT_DATA),
            E::Io { .. } => ("E_IO", EXIT_DATA),
            E::Csv(_) => ("E_CSV", EXIT_DATA),
            E::Json(_) => ("E_JSON", EXIT_DATA),
            E::Config(_) => ("E_USAGE", EXIT_USAGE),
            E::Initialization(_) => ("E_INIT", EXIT_NUMERICAL),
            E::Summary(_) => ("E_NUMERIC", EXIT_NUMERICAL),
        };
        Failure {
            code,
            exit,
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        blockmax::Error::from(err).into()
    }
}

pub type CliResult<T> = Result<T, Failure>;

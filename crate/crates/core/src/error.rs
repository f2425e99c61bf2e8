use std::fmt;
use std::path::PathBuf;

/// One rejected input line: 1-based line number plus what was wrong with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn join_lines(lines: &[LineError]) -> String {
    lines
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{}: {} malformed line(s): {}", path.display(), lines.len(), join_lines(lines))]
    Parse { path: PathBuf, lines: Vec<LineError> },

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown architecture `{given}`; valid names: {}", valid.join(", "))]
    UnknownArchitecture {
        given: String,
        valid: Vec<&'static str>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (config, validation) rather
    /// than by I/O or numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Validation(_) | Error::UnknownArchitecture { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

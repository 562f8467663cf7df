use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Syntax or type error in an input file.
    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    /// Well-formed input that breaks a domain rule.
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
    #[error("{0}")]
    Solver(String),
}

impl Error {
    pub fn invalid(context: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid { context: context.into(), message: message.to_string() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<PathBuf>, e: &serde_json::Error) -> Self {
        Self::Parse { path: path.into(), line: e.line(), column: e.column(), message: e.to_string() }
    }

    /// Input problems, reported with exit code 2.
    pub fn is_validation(&self) -> bool {
        matches!(self, Self::Parse { .. } | Self::Invalid { .. })
    }

    /// Machine-readable diagnostic.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Io { path, source } => json!({
                "error": "io",
                "path": path.display().to_string(),
                "message": source.to_string(),
            }),
            Self::Parse { path, line, column, message } => json!({
                "error": "parse",
                "path": path.display().to_string(),
                "line": line,
                "column": column,
                "message": message,
            }),
            Self::Invalid { context, message } => json!({
                "error": "invalid",
                "context": context,
                "message": message,
            }),
            Self::Solver(message) => json!({ "error": "solver", "message": message }),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<sbrp_core::SimulationError> for Error {
    fn from(e: sbrp_core::SimulationError) -> Self {
        use sbrp_core::SimulationError as S;
        match e {
            S::Allocation(_) | S::Routing(_) => Self::Solver(e.to_string()),
            _ => Self::invalid("simulation", e),
        }
    }
}

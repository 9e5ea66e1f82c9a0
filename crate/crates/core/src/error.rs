use std::path::PathBuf;

/// Errors surfaced by the library. Solver infeasibility is not an error: it
/// is reported through [`crate::cone::Status`] and handled by the MPC layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite state after integration step ({0})")]
    NonFinite(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    InvalidScenario(Vec<String>),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("outer controller infeasible on two consecutive steps (t = {t:.3} s)")]
    DoubleInfeasible { t: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::io;
use std::path::{Path, PathBuf};

/// Errors raised by file formats, analysis and the command layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("file not found: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },

    #[error("{file}: expected {expected} bytes, found {actual}")]
    PayloadSize { file: String, expected: u64, actual: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible synthetic layout: {0}")]
    Infeasible(String),

    #[error("gradient check failed on {0}")]
    GradCheck(String),

    #[error(transparent)]
    Core(#[from] s2fin_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingFile { path: path.to_path_buf() }
        } else {
            Error::Io { path: path.to_path_buf(), source }
        }
    }

    pub(crate) fn format(what: &str, message: impl Into<String>) -> Self {
        Error::Format { what: what.into(), message: message.into() }
    }

    /// Short machine-readable name of the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Usage(_) => "usage",
            Error::MissingFile { .. } => "missing_file",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::PayloadSize { .. } | Error::Dimension(_) => "dimension_mismatch",
            Error::Infeasible(_) => "infeasible",
            Error::GradCheck(_) => "grad_check_failed",
            Error::Core(e) => match e {
                s2fin_core::Error::ShapeMismatch { .. } => "dimension_mismatch",
                s2fin_core::Error::InsufficientSamples { .. } => "insufficient_samples",
                s2fin_core::Error::NonFiniteGradient { .. } | s2fin_core::Error::NonFiniteLoss { .. } => "non_finite",
                s2fin_core::Error::InvalidArgument(_) | s2fin_core::Error::Config(_) => "invalid_argument",
            },
        }
    }

    /// Process exit code; distinct for each [`Error::kind`].
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "missing_file" => 3,
            "io" => 4,
            "format" => 5,
            "dimension_mismatch" => 6,
            "insufficient_samples" => 7,
            "non_finite" => 8,
            "invalid_argument" => 9,
            "infeasible" => 10,
            "grad_check_failed" => 11,
            _ => 1,
        }
    }

    /// `error kind=<kind> code=<n> message="<escaped>"`
    pub fn machine_line(&self) -> String {
        format!("error kind={} code={} message={:?}", self.kind(), self.exit_code(), self.to_string())
    }
}

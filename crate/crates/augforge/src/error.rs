use std::path::PathBuf;

use augforge_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    MalformedFile { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("internal: {0}")]
    Internal(String),
}

/// Broad failure class reported by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Io,
    Shape,
    Internal,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::Io => "io",
            Self::Shape => "shape",
            Self::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Io => 3,
            Self::Shape => 4,
            Self::Internal => 5,
        }
    }
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn malformed(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Self::MalformedFile { path: path.into(), line, message: message.to_string() }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Self::Config(_) => ErrorCategory::Config,
            Self::Io { .. } | Self::MalformedFile { .. } => ErrorCategory::Io,
            Self::Shape(_) => ErrorCategory::Shape,
            Self::Internal(_) => ErrorCategory::Internal,
            Self::Core(e) => match e {
                CoreError::InvalidPercent(_) | CoreError::InvalidTeacherParam(_) | CoreError::ExternalTeacher(_) => {
                    ErrorCategory::Config
                }
                CoreError::DimensionMismatch { .. }
                | CoreError::ShapeMismatch { .. }
                | CoreError::VocabMismatch { .. }
                | CoreError::DegenerateRow(_)
                | CoreError::MissingTableRow(_)
                | CoreError::MissingEmbedding(_)
                | CoreError::ZeroVector(_)
                | CoreError::NonFinite(_)
                | CoreError::DuplicateEmbeddingId(_) => ErrorCategory::Shape,
                CoreError::Inconsistent(_) => ErrorCategory::Internal,
                _ => ErrorCategory::Io,
            },
        }
    }
}

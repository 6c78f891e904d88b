use thiserror::Error;

/// Errors produced anywhere in the matting pipeline.
#[derive(Debug, Error)]
pub enum MatteError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("index ({x}, {y}, {z}) out of range for dims {dims:?}")]
    Range {
        x: i64,
        y: i64,
        z: i64,
        dims: [usize; 3],
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("unsupported method `{0}`; supported methods are CF, CF_PLUS, KNN, KNN_PLUS")]
    UnsupportedMethod(String),
}

impl MatteError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        MatteError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 1 for I/O, 3 for
    /// non-convergence, 2 for every validation-like failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            MatteError::Io { .. } => 1,
            MatteError::Convergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, MatteError>;

use std::path::PathBuf;

/// Errors produced by the evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?} (w, h), found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("region is empty: {0}")]
    EmptyRegion(&'static str),

    #[error("segmenter failure at click {click}: {source}")]
    AtClick {
        click: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("segmenter error: {0}")]
    Segmenter(String),

    #[error("segmenter does not support gradients")]
    GradientsUnsupported,

    #[error("non-finite gradient for click {click}")]
    NonFiniteGradient { click: usize },

    #[error("bridge error [{code}]: {message}")]
    Bridge { code: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_click(self, click: usize) -> Self {
        Error::AtClick {
            click,
            source: Box::new(self),
        }
    }

    /// Configuration, parsing and file-system errors, as opposed to
    /// failures while running a model.
    pub fn is_setup_error(&self) -> bool {
        match self {
            Error::AtClick { source, .. } => source.is_setup_error(),
            Error::Parse { .. }
            | Error::Config(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Image { .. } => true,
            _ => false,
        }
    }
}

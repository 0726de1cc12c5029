use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("expected {expected} range profiles per CPI, got {actual}")]
    ProfileCount { expected: usize, actual: usize },

    #[error("scenario {location}: {message}")]
    Scenario { location: String, message: String },

    #[error("detection scope is empty after excluding the zero-Doppler guard")]
    EmptyScope,

    #[error("region of interest is empty after clipping to the map")]
    EmptyRoi,

    #[error("{0} is not symmetric positive-definite")]
    NotPositiveDefinite(&'static str),

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error("pipeline stage stopped unexpectedly")]
    Disconnected,
}

impl Error {
    pub(crate) fn scenario(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user-supplied configuration or input files.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Scenario { .. } | Error::Json(_) | Error::Format(_)
        )
    }
}

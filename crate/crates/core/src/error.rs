use thiserror::Error;

/// Errors produced by the numerical core and the experiment runners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate geometry: {what} (horizontal distance {distance:e} m)")]
    DegenerateGeometry { what: String, distance: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("index {index} out of range for {len} paths")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("singular position FIM: det = {det:e}, threshold = {threshold:e}")]
    SingularFim { det: f64, threshold: f64 },

    #[error(
        "backtracking line search failed at iteration {iteration}: step fell below {min_step:e}"
    )]
    LineSearchFailed { iteration: usize, min_step: f64 },

    #[error("grid ML estimator supports at most {limit} paths, got {paths}")]
    GridTooLarge { paths: usize, limit: usize },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularFim { .. }
                | Error::LineSearchFailed { .. }
                | Error::DegenerateGeometry { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

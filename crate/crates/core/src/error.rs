use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GclError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GclError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("layer {layer}: input has {actual} columns but layer expects {expected}")]
    LayerInput {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("backward called before forward")]
    NoForwardCache,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("temporal-difference filter retained no records (d_th = {d_th}); try a larger threshold")]
    FilterEmpty { d_th: f64 },

    #[error("AUC undefined: {positives} positive and {negatives} negative frames")]
    AucUndefined { positives: usize, negatives: usize },

    #[error("ground truth missing for video {0}")]
    MissingGroundTruth(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GclError {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        GclError::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GclError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        GclError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

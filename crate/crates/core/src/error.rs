use std::path::PathBuf;

use thiserror::Error;

use crate::inject::FeatureKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mask for region `{region_id}` does not cover positive point ({row}, {col})")]
    MaskRejected {
        region_id: String,
        row: usize,
        col: usize,
    },

    #[error("edit failed during {stage}: {source}")]
    EditFailed {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite values in {0}")]
    Numeric(String),

    #[error("backend error at step {step}: {message}")]
    Backend { step: usize, message: String },

    #[error("no captured feature for step {step}, layer `{layer}`, kind {kind:?}")]
    MissingFeature {
        step: usize,
        layer: String,
        kind: FeatureKind,
    },

    #[error("injection plan mismatch: {0}")]
    Plan(String),

    #[error("{pathway}: {source}")]
    Pathway {
        pathway: String,
        #[source]
        source: Box<Error>,
    },

    #[error("captioner: {0}")]
    Caption(String),

    #[error("prompt assembly: {0}")]
    Prompt(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error("adapter `{0}` is not available in this build")]
    AdapterUnavailable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Codec(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn tagged(self, pathway: impl Into<String>) -> Self {
        Error::Pathway {
            pathway: pathway.into(),
            source: Box::new(self),
        }
    }
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(format!($($arg)*))
    };
}
pub(crate) use invalid;

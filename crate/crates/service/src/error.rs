use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Core(#[from] vidtint::Error),
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Core(e.into())
    }
}

impl ServiceError {
    /// Short machine-readable kind for error payloads.
    pub fn kind(&self) -> &'static str {
        use vidtint::Error as E;
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Internal(_) => "internal",
            ServiceError::Core(e) => match e {
                E::InvalidInput(_) | E::ShapeMismatch(_) | E::Json(_) => "invalid_input",
                E::MaskRejected { .. } => "mask_rejected",
                E::EditFailed { .. } => "edit_failed",
                E::Numeric(_) => "numeric",
                E::Backend { .. } => "backend",
                E::MissingFeature { .. } | E::Plan(_) => "plan",
                E::Pathway { .. } => "propagation",
                E::Caption(_) => "caption",
                E::Prompt(_) => "prompt",
                E::Metric(_) => "metric",
                E::AdapterUnavailable(_) => "adapter_unavailable",
                E::Io { .. } => "io",
                E::Codec(_) => "codec",
            },
        }
    }
}

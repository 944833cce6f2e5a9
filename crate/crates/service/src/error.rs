use alt4blind_core::{EmbedError, IndexError};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// An error response: status plus a machine-readable code and a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.code, "message": self.message})),
        )
            .into_response()
    }
}

impl From<EmbedError> for ApiError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::EncoderUnavailable(_)
            | EmbedError::DimensionMismatch(_)
            | EmbedError::NormOutOfRange(_)
            | EmbedError::NonFinite => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "encoder_unavailable",
                e.to_string(),
            ),
            EmbedError::InvalidImage(_) => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invalid_image",
                e.to_string(),
            ),
            EmbedError::EmptyText => Self::bad_request("empty_draft", e.to_string()),
            EmbedError::ProviderMismatch { .. } => Self::internal(e.to_string()),
        }
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::EmptyIndex => Self::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "index_unavailable",
                e.to_string(),
            ),
            IndexError::InvalidQuery(_) => Self::bad_request("invalid_request", e.to_string()),
            other => Self::internal(other.to_string()),
        }
    }
}

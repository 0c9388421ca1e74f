//! Store errors as HTTP responses.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rdos_core::Error;
use serde::{Deserialize, Serialize};

/// HTTP status for a machine-readable error code. Total over
/// [`Error::ALL_CODES`]; unknown codes are a server fault.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "INVALID_NAME" | "INVALID_PATH" | "INVALID_PARTITION" | "TOO_MANY_PARTITIONS" | "PARSE_ERROR"
        | "MALFORMED_DICTIONARY" | "SELF_LOOP" | "WEIGHT_OUT_OF_RANGE" | "CROSS_NAMESPACE" | "INVALID_CONFIG"
        | "SCENARIO_ERROR" | "BAD_REQUEST" => StatusCode::BAD_REQUEST,
        "UNAUTHENTICATED" => StatusCode::UNAUTHORIZED,
        "UNAUTHORIZED" => StatusCode::FORBIDDEN,
        "NOT_FOUND" | "PARTITION_NOT_FOUND" | "UNKNOWN_NAMESPACE" => StatusCode::NOT_FOUND,
        "VERSIONING_DISABLED" | "DUPLICATE_ID" => StatusCode::CONFLICT,
        "GONE" => StatusCode::GONE,
        "PAYLOAD_TOO_LARGE" => StatusCode::PAYLOAD_TOO_LARGE,
        "PIPELINE_STAGE_ERROR" | "EMPTY_GRAPH" => StatusCode::UNPROCESSABLE_ENTITY,
        "QUOTA_EXCEEDED" => StatusCode::INSUFFICIENT_STORAGE,
        "REMOTE_UNAVAILABLE" => StatusCode::BAD_GATEWAY,
        "INSUFFICIENT_REPLICAS" | "INSUFFICIENT_NODES" | "DIGEST_MISMATCH" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self { status: status_for(code), body: ErrorBody { code: code.to_string(), message: message.into() } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("BAD_REQUEST", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::warn!(code = %self.body.code, message = %self.body.message, "request failed");
        }
        (self.status, Json(serde_json::json!({ "error": self.body }))).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;

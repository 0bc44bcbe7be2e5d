use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// JSON error body: `{code, message, detail?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

/// Codes produced by the HTTP layer itself rather than the library.
pub const MALFORMED: &str = "malformed";
pub const UNSUPPORTED_MEDIA_TYPE: &str = "unsupported_media_type";
pub const CAPACITY: &str = "capacity";

/// The one HTTP status for each machine code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" => StatusCode::NOT_FOUND,
        "conflict" | "finished" | "precondition" | "terminal_state" => StatusCode::CONFLICT,
        "range" => StatusCode::BAD_REQUEST,
        "numeric" | "training_aborted" | "io" => StatusCode::INTERNAL_SERVER_ERROR,
        UNSUPPORTED_MEDIA_TYPE => StatusCode::UNSUPPORTED_MEDIA_TYPE,
        CAPACITY => StatusCode::SERVICE_UNAVAILABLE,
        // model_invalid, index, impossible_observation, incompatible, config,
        // shape, ingest, empty_input, validation, load, malformed
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status_for(code),
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: None,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = Some(detail);
        self
    }

    pub fn malformed(message: impl Into<String>) -> Self {
        Self::new(MALFORMED, message)
    }
}

impl From<pomdbg::Error> for ApiError {
    fn from(e: pomdbg::Error) -> Self {
        use pomdbg::Error as E;
        let detail = match &e {
            E::Ingest { line, .. } => Some(json!({ "line": line })),
            E::Index { what, index, len } => {
                Some(json!({ "what": what, "index": index, "len": len }))
            }
            E::ImpossibleObservation { unnormalized } => {
                Some(json!({ "unnormalized": unnormalized }))
            }
            E::TrainingAborted { iteration, .. } => Some(json!({ "iteration": iteration })),
            E::ModelInvalid(report) => serde_json::to_value(report).ok(),
            _ => None,
        };
        let err = ApiError::new(e.code(), e.to_string());
        match detail {
            Some(d) => err.with_detail(d),
            None => err,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;

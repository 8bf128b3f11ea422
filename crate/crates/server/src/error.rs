use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use crowdlocate_core::aggregation::AggregationError;
use crowdlocate_core::filters::SpecError;
use crowdlocate_core::orchestrator::{OrchestratorError, StoreError};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("missing or unknown session token")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Filter(#[from] SpecError),
    #[error("{0}")]
    Internal(String),
    #[error("cannot persist event: {0}")]
    Store(#[from] StoreError),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        use OrchestratorError as O;
        match self {
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::Invalid(_) | ApiError::Filter(_) | ApiError::Aggregation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Store(_) | ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ApiError::Orchestrator(e) => match e {
                O::UnknownWorker(_) => StatusCode::UNAUTHORIZED,
                O::NotQualified(_) | O::Capped(_) => StatusCode::FORBIDDEN,
                O::UnknownAssignment(_) | O::UnknownCode => StatusCode::NOT_FOUND,
                O::Expired(_) => StatusCode::GONE,
                O::Answer(_) => StatusCode::UNPROCESSABLE_ENTITY,
                O::DuplicateWorker(_)
                | O::AlreadyAttempted(_)
                | O::Sequence(_)
                | O::Incomplete(_)
                | O::InvalidState { .. }
                | O::AlreadyRated(_)
                | O::CodeAlreadyUsed => StatusCode::CONFLICT,
                O::Config(_) | O::Analysis(_) | O::Replay(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string(), "status": status.as_u16() }))).into_response()
    }
}

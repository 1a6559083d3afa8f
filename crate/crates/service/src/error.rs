use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use guiliner_core::model::ModelError;
use guiliner_core::runner::RunError;
use guiliner_core::xml::XmlError;

use crate::wire::ErrorBody;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                id: None,
                missing: Vec::new(),
            },
        }
    }

    pub fn unknown_run(run_id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownRun", format!("no run with id `{run_id}`"))
    }

    fn with_id(mut self, id: &str) -> Self {
        self.body.id = Some(id.to_string());
        self
    }

    fn with_missing(mut self, missing: &[String]) -> Self {
        self.body.missing = missing.to_vec();
        self
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        let message = e.to_string();
        match &e {
            ModelError::UnknownOption(id) => ApiError::new(StatusCode::NOT_FOUND, "UnknownOption", message).with_id(id),
            ModelError::Value { id, .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ValueError", message).with_id(id)
            }
            ModelError::MutationDuringRun(_) => ApiError::new(StatusCode::CONFLICT, "MutationDuringRun", message),
            ModelError::InvalidSpec(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "InvalidSpec", message),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            RunError::MissingRequired(ids) => {
                return ApiError::new(StatusCode::CONFLICT, "MissingRequired", message).with_missing(ids)
            }
            RunError::RunAlreadyActive(_) => (StatusCode::CONFLICT, "RunAlreadyActive"),
            RunError::AlreadyTerminated => (StatusCode::CONFLICT, "AlreadyTerminated"),
            RunError::StillRunning => (StatusCode::CONFLICT, "StillRunning"),
            RunError::ExecutableNotFound(_) => (StatusCode::UNPROCESSABLE_ENTITY, "ExecutableNotFound"),
            RunError::InputFileMissing { id, .. } => {
                return ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InputFileMissing", message).with_id(id)
            }
            RunError::OutputDirMissing { id, .. } => {
                return ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "OutputDirMissing", message).with_id(id)
            }
            RunError::WorkingDirMissing(_) => (StatusCode::UNPROCESSABLE_ENTITY, "WorkingDirMissing"),
            RunError::SpawnFailed(_) => (StatusCode::INTERNAL_SERVER_ERROR, "SpawnFailed"),
            RunError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "Io"),
        };
        ApiError::new(status, code, message)
    }
}

impl From<XmlError> for ApiError {
    fn from(e: XmlError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "SpecMismatch", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

//! The task service behind the HTTP API: sessions, lazy HIT assignment,
//! submission handling with consensus, and run metrics. Transport-agnostic;
//! every call takes the store it operates on.

mod metrics;
mod service;

pub use metrics::{metrics, MetricsReport};
pub use service::{ServiceConfig, Session, SubmitAccepted, TaskService};

use serde::{Deserialize, Serialize};

use crate::crowd::CrowdError;
use crate::pool::PoolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidRequest,
    InvalidSession,
    SessionExpired,
    WorkerBlocked,
    NoWork,
    MalformedSubmission,
    OnlineCheckFailed,
    QualityCheckFailed,
    NotFound,
    Conflict,
    GoldPoolExhausted,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::InvalidRequest | ErrorCode::MalformedSubmission => 400,
            ErrorCode::InvalidSession | ErrorCode::SessionExpired => 401,
            ErrorCode::WorkerBlocked => 403,
            ErrorCode::NotFound => 404,
            ErrorCode::Conflict => 409,
            ErrorCode::OnlineCheckFailed | ErrorCode::QualityCheckFailed => 422,
            ErrorCode::NoWork | ErrorCode::GoldPoolExhausted => 503,
            ErrorCode::Internal => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub retryable: bool,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        let retryable = matches!(code, ErrorCode::NoWork | ErrorCode::OnlineCheckFailed);
        Self {
            code,
            message: message.into(),
            retryable,
        }
    }
}

impl From<PoolError> for ApiError {
    fn from(err: PoolError) -> Self {
        match err {
            PoolError::UnknownCategory(c) => ApiError::new(ErrorCode::NotFound, format!("unknown category {c}")),
            PoolError::NotFound(id) => ApiError::new(ErrorCode::NotFound, format!("item {id} not found")),
            PoolError::Conflict(m) => ApiError::new(ErrorCode::Conflict, m),
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

impl From<CrowdError> for ApiError {
    fn from(err: CrowdError) -> Self {
        match err {
            CrowdError::Malformed(m) => ApiError::new(ErrorCode::MalformedSubmission, m),
            CrowdError::Conflict(m) => ApiError::new(ErrorCode::Conflict, m),
            e @ CrowdError::PoolExhausted { .. } => {
                ApiError::new(ErrorCode::GoldPoolExhausted, e.to_string())
            }
            other => ApiError::new(ErrorCode::Internal, other.to_string()),
        }
    }
}

//! HTTP surface of the task service.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use labelamp::cascade::CascadeEngine;
use labelamp::crowd::ClientPayload;
use labelamp::pool::PoolStore;
use labelamp::scorer::ReferenceFactory;
use labelamp::svc::{metrics, ApiError, ErrorCode, MetricsReport, Session, SubmitAccepted, TaskService};
use labelamp::{Answer, HitId, WorkerId};
use serde::{Deserialize, Serialize};

/// Advances the cascade whenever the open iteration is fully labeled.
#[derive(Debug)]
pub struct Driver {
    pub engine: CascadeEngine,
    pub factory: ReferenceFactory,
}

#[derive(Debug)]
pub struct AppState {
    pub pool: PoolStore,
    pub service: TaskService,
    pub driver: Option<Driver>,
}

pub type Shared = Arc<Mutex<AppState>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRequest {
    pub worker_id: WorkerId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NextHitRequest {
    pub token: String,
    pub category: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub token: String,
    pub answers: Vec<Answer>,
}

pub struct HttpError(pub ApiError);

impl From<ApiError> for HttpError {
    fn from(e: ApiError) -> Self {
        HttpError(e)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.code.http_status())
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

fn internal(msg: impl Into<String>) -> HttpError {
    HttpError(ApiError::new(ErrorCode::Internal, msg))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, HttpError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| HttpError(ApiError::new(ErrorCode::InvalidRequest, e.body_text())))
}

fn lock(state: &Shared) -> Result<MutexGuard<'_, AppState>, HttpError> {
    state.lock().map_err(|_| internal("state lock poisoned"))
}

fn flush(pool: &mut PoolStore) -> Result<(), HttpError> {
    pool.flush().map_err(|e| internal(format!("journal write failed: {e}")))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/hits/next", post(next_hit))
        .route("/api/hits/{id}/submit", post(submit))
        .route("/api/admin/metrics/{category}", get(get_metrics))
        .with_state(state)
}

async fn create_session(
    State(state): State<Shared>,
    payload: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<Json<Session>, HttpError> {
    let req = body(payload)?;
    let mut st = lock(&state)?;
    let AppState { pool, service, .. } = &mut *st;
    Ok(Json(service.create_session(pool, &req.worker_id)?))
}

async fn next_hit(
    State(state): State<Shared>,
    payload: Result<Json<NextHitRequest>, JsonRejection>,
) -> Result<Json<ClientPayload>, HttpError> {
    let req = body(payload)?;
    let mut st = lock(&state)?;
    let AppState { pool, service, .. } = &mut *st;
    let hit = service.next_hit(pool, &req.token, &req.category)?;
    flush(pool)?;
    Ok(Json(hit))
}

async fn submit(
    State(state): State<Shared>,
    Path(id): Path<String>,
    payload: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<Json<SubmitAccepted>, HttpError> {
    let req = body(payload)?;
    let mut st = lock(&state)?;
    let AppState {
        pool,
        service,
        driver,
    } = &mut *st;
    let result = service.submit(pool, &req.token, &HitId::new(id), req.answers);
    // hidden failures are journaled too
    flush(pool)?;
    let accepted = result?;
    if let Some(d) = driver {
        advance(pool, service, d);
        flush(pool)?;
    }
    Ok(Json(accepted))
}

async fn get_metrics(
    State(state): State<Shared>,
    Path(category): Path<String>,
) -> Result<Json<MetricsReport>, HttpError> {
    let st = lock(&state)?;
    Ok(Json(metrics(&st.pool, &category)?))
}

/// Finishes the open iteration once every target is settled, then opens the next.
pub fn advance(pool: &mut PoolStore, service: &mut TaskService, driver: &mut Driver) {
    let engine = &driver.engine;
    if engine.is_finished(pool) {
        return;
    }
    if engine.open_ticket(pool).is_some() {
        match service.is_drained(pool, &engine.category) {
            Ok(true) => {}
            Ok(false) => return,
            Err(e) => {
                log::error!("cannot check labeling progress: {}", e.message);
                return;
            }
        }
        match engine.finish_iteration(pool, &mut driver.factory) {
            Ok(outcome) => log::info!(
                "iteration {} finished: {} auto-positive, {} auto-negative, {} unlabeled",
                outcome.report.iteration,
                outcome.report.auto_positive,
                outcome.report.auto_negative,
                outcome.report.unlabeled_after
            ),
            Err(e) => {
                log::error!("finishing iteration failed: {e}");
                return;
            }
        }
    }
    if !engine.is_finished(pool) {
        match engine.begin_iteration(pool) {
            Ok(t) => log::info!("iteration {} opened with {} targets", t.iteration, t.target_count()),
            Err(e) => log::error!("opening iteration failed: {e}"),
        }
    }
}

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use trustloop::bandit::{ArmCatalog, Part, Role};
use trustloop::report::ExportFilter;

use crate::error::ServiceError;
use crate::service::{Submission, SurveyService, API_SCHEMA_VERSION};

/// JSON error body: `{schema_version, code, message}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub code: String,
    pub message: String,
}

pub struct ApiError(pub ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(ServiceError::Invalid(e.body_text()))
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError(ServiceError::Invalid(e.body_text()))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = ErrorBody { schema_version: API_SCHEMA_VERSION, code: self.0.code().into(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<SurveyService>;

#[derive(Deserialize)]
pub struct StartRequest {
    pub role: Role,
}

#[derive(Debug, Default, Deserialize)]
pub struct ReportQuery {
    pub role: Option<String>,
    pub part: Option<String>,
    pub format: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CatalogsBody {
    pub schema_version: u32,
    pub part1: ArmCatalog,
    pub part2: ArmCatalog,
}

fn filter_of(q: &ReportQuery) -> Result<ExportFilter, ServiceError> {
    let role = match q.role.as_deref().filter(|s| !s.is_empty()) {
        Some(r) => Some(r.parse::<Role>().map_err(|_| ServiceError::Invalid(format!("unknown role `{r}`")))?),
        None => None,
    };
    let part = match q.part.as_deref().filter(|s| !s.is_empty()) {
        Some(p) => Some(p.parse::<Part>().map_err(|_| ServiceError::Invalid(format!("unknown part `{p}`")))?),
        None => None,
    };
    Ok(ExportFilter { role, part })
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

async fn root(State(svc): State<Shared>) -> Response {
    Json(svc.metadata()).into_response()
}

async fn catalogs(State(svc): State<Shared>) -> Response {
    let (part1, part2) = svc.catalogs();
    Json(CatalogsBody { schema_version: API_SCHEMA_VERSION, part1, part2 }).into_response()
}

async fn start(State(svc): State<Shared>, body: Result<Json<StartRequest>, JsonRejection>) -> ApiResult<Response> {
    let Json(req) = body?;
    let started = svc.start_session(req.role)?;
    Ok((StatusCode::CREATED, Json(started)).into_response())
}

async fn next(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(svc.next_step(&id)?).into_response())
}

async fn rate(State(svc): State<Shared>, Path(id): Path<String>, body: Result<Json<Submission>, JsonRejection>) -> ApiResult<Response> {
    let Json(sub) = body?;
    Ok(Json(svc.submit(&id, &sub)?).into_response())
}

async fn report(State(svc): State<Shared>, q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    let report = svc.report(&filter_of(&q)?)?;
    Ok(match q.format.as_deref().unwrap_or("json") {
        "json" => Json(report).into_response(),
        "plot" => Json(report.plot_data()).into_response(),
        "csv" => csv_response(report.to_csv()),
        f => return Err(ServiceError::Invalid(format!("unknown format `{f}`; use json, plot or csv")).into()),
    })
}

async fn export(State(svc): State<Shared>, q: Result<Query<ReportQuery>, QueryRejection>) -> ApiResult<Response> {
    let Query(q) = q?;
    Ok(csv_response(svc.export_csv(&filter_of(&q)?)?))
}

async fn not_found() -> Response {
    let body = ErrorBody { schema_version: API_SCHEMA_VERSION, code: "not_found".into(), message: "no such route".into() };
    (StatusCode::NOT_FOUND, Json(body)).into_response()
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/", get(root))
        .route("/api/catalogs", get(catalogs))
        .route("/api/sessions", post(start))
        .route("/api/sessions/{id}/next", get(next))
        .route("/api/sessions/{id}/ratings", post(rate))
        .route("/api/report", get(report))
        .route("/api/export.csv", get(export))
        .fallback(not_found)
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(service)
}

/// Serves until `shutdown` resolves, sweeping idle sessions once a minute,
/// then flushes the logs.
pub async fn serve(service: Shared, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServiceError> {
    let sweeper = {
        let svc = service.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                if let Err(e) = svc.sweep_abandoned() {
                    tracing::warn!(error = %e, "abandonment sweep failed");
                }
            }
        })
    };
    let result = axum::serve(listener, router(service.clone())).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    service.flush()?;
    result.map_err(ServiceError::from)
}

/// A server on its own runtime thread, for tests and embedding.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<(), ServiceError>>>,
}

impl BackgroundServer {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(service: Shared, addr: SocketAddr) -> Result<Self, ServiceError> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
            rt.block_on(async move {
                let listener = TcpListener::from_std(std_listener)?;
                serve(service, listener, async {
                    let _ = rx.await;
                })
                .await
            })
        });
        Ok(BackgroundServer { addr, stop: Some(tx), thread: Some(thread) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Graceful stop; waits for in-flight requests and the final flush.
    pub fn stop(mut self) -> Result<(), ServiceError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| ServiceError::Storage("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

//! REST/JSON API over [`Service`].
//!
//! | method | path                              | body                | reply                 |
//! |--------|-----------------------------------|---------------------|-----------------------|
//! | GET    | `/health`                         | –                   | `{status}`            |
//! | GET    | `/scenarios`                      | –                   | `[Scenario]`          |
//! | POST   | `/scenarios`                      | `ScenarioSpec`      | 201 `Scenario`        |
//! | GET    | `/scenarios/{name}`               | –                   | `Scenario`            |
//! | GET    | `/faults`                         | –                   | `{faults: [entry]}`   |
//! | POST   | `/faults`                         | plan entry          | 201 entry with `id`   |
//! | DELETE | `/faults/{id}`                    | –                   | removed entry         |
//! | POST   | `/simulate`                       | `SimulateSpec`      | 201 `DatasetInfo`     |
//! | GET    | `/datasets`                       | –                   | `[DatasetInfo]`       |
//! | GET    | `/plugins`                        | –                   | `[PluginInstance]`    |
//! | POST   | `/plugins`                        | `DeploySpec`        | 201 `PluginInstance`  |
//! | GET    | `/plugins/{id}`                   | –                   | `PluginInstance`      |
//! | DELETE | `/plugins/{id}`                   | –                   | `PluginInstance`      |
//! | POST   | `/plugins/{id}/stop`              | –                   | `PluginInstance`      |
//! | POST   | `/plugins/{id}/restart`           | –                   | `PluginInstance`      |
//! | POST   | `/experiments`                    | `ExperimentSpec`    | 201 `ExperimentResult`|
//! | GET    | `/experiments/{id}`               | –                   | `ExperimentResult`    |
//! | GET    | `/leaderboards`                   | –                   | `[Leaderboard]`       |
//! | POST   | `/leaderboards`                   | `BoardSpec`         | 201 `Leaderboard`     |
//! | GET    | `/leaderboards/{id}`              | –                   | `Leaderboard`         |
//! | GET    | `/leaderboards/{id}/export`       | –                   | `BoardExport`         |
//! | POST   | `/leaderboards/{id}/algorithms`   | `AddAlgorithmSpec`  | `Leaderboard`         |
//!
//! Errors are `{code, message, detail}` with a 4xx/5xx status.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use servo_core::faults::{CalendarError, PlanEntry};
use servo_plugin::ControllerError;

use crate::error::BoardError;
use crate::service::{AddAlgorithmSpec, BoardSpec, DeploySpec, ExperimentSpec, ScenarioSpec, Service, SimulateSpec};

/// Every state-changing route, as `(method, path)`.
pub const MUTATIONS: &[(&str, &str)] = &[
    ("POST", "/scenarios"),
    ("POST", "/faults"),
    ("DELETE", "/faults/{id}"),
    ("POST", "/simulate"),
    ("POST", "/plugins"),
    ("DELETE", "/plugins/{id}"),
    ("POST", "/plugins/{id}/stop"),
    ("POST", "/plugins/{id}/restart"),
    ("POST", "/experiments"),
    ("POST", "/leaderboards"),
    ("POST", "/leaderboards/{id}/algorithms"),
];

/// HTTP status for a domain error.
pub fn status_of(e: &BoardError) -> StatusCode {
    use BoardError as B;
    use ControllerError as C;
    match e {
        B::UnknownBoard(_) | B::UnknownScenario(_) | B::UnknownDataset(_) => StatusCode::NOT_FOUND,
        B::Calendar(CalendarError::UnknownFault(_)) => StatusCode::NOT_FOUND,
        B::Calendar(_) => StatusCode::CONFLICT,
        B::DuplicateBoard(_)
        | B::DuplicateScenario(_)
        | B::DuplicateDataset(_)
        | B::DuplicateAlgorithm { .. }
        | B::PluginNotRunning { .. }
        | B::DatasetChanged { .. } => StatusCode::CONFLICT,
        B::IncompatibleMetric { .. }
        | B::WindowUnavailable(_)
        | B::FaultRejected(_)
        | B::Plan(_)
        | B::Simulation(_)
        | B::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
        B::Csv(_) | B::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        B::Controller(c) => match c {
            C::UnknownPlugin(_) | C::UnknownExperiment(_) => StatusCode::NOT_FOUND,
            C::DuplicatePlugin(_)
            | C::DuplicateExperiment(_)
            | C::IllegalTransition { .. }
            | C::PluginUnreachable { .. }
            | C::PhaseOrder { .. }
            | C::PhaseNotAllowed { .. } => StatusCode::CONFLICT,
            C::Manifest(_) | C::Bundle(_) | C::InvalidId(_) | C::Window(_) => StatusCode::UNPROCESSABLE_ENTITY,
            C::PayloadInvalid { .. } | C::PluginFailure { .. } => StatusCode::BAD_GATEWAY,
            C::StartupTimeout { .. } => StatusCode::GATEWAY_TIMEOUT,
            C::NoFreePort(..) => StatusCode::SERVICE_UNAVAILABLE,
            C::Runtime(_) | C::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        },
    }
}

/// Error body `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: Value,
}

impl From<BoardError> for ApiError {
    fn from(e: BoardError) -> Self {
        Self {
            status: status_of(&e),
            code: e.code().to_string(),
            message: e.to_string(),
            detail: e.detail(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

/// JSON body extractor whose rejections use the API error shape.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(rejection_error(rejection)),
        }
    }
}

fn rejection_error(r: JsonRejection) -> ApiError {
    ApiError {
        status: r.status(),
        code: "invalid_request".into(),
        message: r.body_text(),
        detail: Value::Null,
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Created<T> = Result<(StatusCode, Json<T>), ApiError>;

fn created<T: Serialize>(v: T) -> (StatusCode, Json<T>) {
    (StatusCode::CREATED, Json(v))
}

type Svc = State<Arc<Service>>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/scenarios", get(list_scenarios).post(create_scenario))
        .route("/scenarios/{name}", get(get_scenario))
        .route("/faults", get(list_faults).post(schedule_fault))
        .route("/faults/{id}", delete(cancel_fault))
        .route("/simulate", post(simulate))
        .route("/datasets", get(list_datasets))
        .route("/plugins", get(list_plugins).post(deploy_plugin))
        .route("/plugins/{id}", get(get_plugin).delete(remove_plugin))
        .route("/plugins/{id}/stop", post(stop_plugin))
        .route("/plugins/{id}/restart", post(restart_plugin))
        .route("/experiments", post(run_experiment))
        .route("/experiments/{id}", get(get_experiment))
        .route("/leaderboards", get(list_boards).post(create_board))
        .route("/leaderboards/{id}", get(get_board))
        .route("/leaderboards/{id}/export", get(export_board))
        .route("/leaderboards/{id}/algorithms", post(add_algorithm))
        .with_state(service)
}

async fn list_scenarios(State(s): Svc) -> ApiResult<Vec<crate::Scenario>> {
    Ok(Json(s.scenarios()?))
}

async fn create_scenario(State(s): Svc, ApiJson(spec): ApiJson<ScenarioSpec>) -> Created<crate::Scenario> {
    Ok(created(s.create_scenario(&spec)?))
}

async fn get_scenario(State(s): Svc, Path(name): Path<String>) -> ApiResult<crate::Scenario> {
    Ok(Json(s.scenario(&name)?))
}

async fn list_faults(State(s): Svc) -> Json<Value> {
    Json(json!({"faults": s.faults()}))
}

async fn schedule_fault(State(s): Svc, ApiJson(entry): ApiJson<PlanEntry>) -> Created<PlanEntry> {
    Ok(created(s.schedule_fault(&entry)?))
}

async fn cancel_fault(State(s): Svc, Path(id): Path<String>) -> ApiResult<PlanEntry> {
    Ok(Json(s.cancel_fault(&id)?))
}

async fn simulate(State(s): Svc, ApiJson(spec): ApiJson<SimulateSpec>) -> Created<crate::DatasetInfo> {
    Ok(created(s.simulate(&spec).await?))
}

async fn list_datasets(State(s): Svc) -> ApiResult<Vec<crate::DatasetInfo>> {
    Ok(Json(s.list_datasets()?))
}

async fn list_plugins(State(s): Svc) -> Json<Vec<servo_plugin::PluginInstance>> {
    Json(s.plugins())
}

async fn deploy_plugin(State(s): Svc, ApiJson(spec): ApiJson<DeploySpec>) -> Created<servo_plugin::PluginInstance> {
    Ok(created(s.deploy_plugin(&spec).await?))
}

async fn get_plugin(State(s): Svc, Path(id): Path<String>) -> ApiResult<servo_plugin::PluginInstance> {
    Ok(Json(s.plugin(&id)?))
}

async fn remove_plugin(State(s): Svc, Path(id): Path<String>) -> ApiResult<servo_plugin::PluginInstance> {
    Ok(Json(s.remove_plugin(&id).await?))
}

async fn stop_plugin(State(s): Svc, Path(id): Path<String>) -> ApiResult<servo_plugin::PluginInstance> {
    Ok(Json(s.stop_plugin(&id).await?))
}

async fn restart_plugin(State(s): Svc, Path(id): Path<String>) -> ApiResult<servo_plugin::PluginInstance> {
    Ok(Json(s.restart_plugin(&id).await?))
}

async fn run_experiment(State(s): Svc, ApiJson(spec): ApiJson<ExperimentSpec>) -> Created<servo_plugin::ExperimentResult> {
    Ok(created(s.run_experiment(&spec).await?))
}

async fn get_experiment(State(s): Svc, Path(id): Path<String>) -> ApiResult<servo_plugin::ExperimentResult> {
    Ok(Json(s.experiment(&id)?))
}

async fn list_boards(State(s): Svc) -> ApiResult<Vec<crate::Leaderboard>> {
    Ok(Json(s.boards()?))
}

async fn create_board(State(s): Svc, ApiJson(spec): ApiJson<BoardSpec>) -> Created<crate::Leaderboard> {
    Ok(created(s.create_board(&spec).await?))
}

async fn get_board(State(s): Svc, Path(id): Path<String>) -> ApiResult<crate::Leaderboard> {
    Ok(Json(s.board(&id)?))
}

async fn export_board(State(s): Svc, Path(id): Path<String>) -> ApiResult<crate::BoardExport> {
    Ok(Json(s.export_board(&id)?))
}

async fn add_algorithm(
    State(s): Svc,
    Path(id): Path<String>,
    ApiJson(spec): ApiJson<AddAlgorithmSpec>,
) -> ApiResult<crate::Leaderboard> {
    Ok(Json(s.add_algorithm(&id, &spec.plugin_id).await?))
}

/// Serves the API on `listener` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "leaderboard API listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}

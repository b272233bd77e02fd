//! HTTP fitness service.
//!
//! `POST /evaluate` scores one controller; `GET /health` reports the
//! simulation version and active latency model. Every response is one of
//! 200, 400 (malformed body), 422 (invalid parameters or unknown version)
//! or 503 (injected failure).

mod latency;

pub use latency::{inject_latency, DelayDistribution, LatencyDraw, LatencyModel};

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::plant::{ControllerParams, FitnessModel, PlantError, SimConfig};

/// Version of the simulation configuration shipped as the default.
pub const SIM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub params: Vec<f64>,
    pub sim_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub fitness: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub sim_version: u32,
    pub latency: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub mod error_code {
    pub const MALFORMED: &str = "malformed_body";
    pub const INVALID_PARAMS: &str = "invalid_params";
    pub const UNKNOWN_SIM_VERSION: &str = "unknown_sim_version";
    pub const UNAVAILABLE: &str = "unavailable";
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid simulation config: {0}")]
    Plant(#[from] PlantError),
    #[error("invalid latency model: {0}")]
    Latency(String),
    #[error("failed to bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub sim: SimConfig,
    pub sim_version: u32,
    pub latency: LatencyModel,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            sim: SimConfig::default(),
            sim_version: SIM_VERSION,
            latency: LatencyModel::none(),
        }
    }
}

impl ServiceConfig {
    pub fn with_latency(latency: LatencyModel) -> Self {
        ServiceConfig {
            latency,
            ..Self::default()
        }
    }
}

/// Shared, immutable server state plus request counters.
#[derive(Debug)]
pub struct ServiceState {
    model: FitnessModel,
    sim_version: u32,
    latency: LatencyModel,
    requests: AtomicU64,
    evaluations: AtomicU64,
}

impl ServiceState {
    pub fn new(config: &ServiceConfig) -> Result<Self, ServiceError> {
        config.latency.validate().map_err(ServiceError::Latency)?;
        Ok(ServiceState {
            model: FitnessModel::new(config.sim)?,
            sim_version: config.sim_version,
            latency: config.latency,
            requests: AtomicU64::new(0),
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn model(&self) -> &FitnessModel {
        &self.model
    }

    /// Number of `/evaluate` requests received, whatever their outcome.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// Number of requests answered with a fitness.
    pub fn evaluation_count(&self) -> u64 {
        self.evaluations.load(Ordering::SeqCst)
    }

    fn health(&self) -> HealthResponse {
        HealthResponse {
            sim_version: self.sim_version,
            latency: self.latency.distribution.kind_name().to_string(),
        }
    }
}

fn error_response(status: StatusCode, code: &str) -> Response {
    (status, Json(ErrorBody { error: code.to_string() })).into_response()
}

/// Validates and scores one request body. Latency is not applied here.
pub fn handle_evaluate(state: &ServiceState, body: &[u8]) -> Result<EvaluateResponse, (StatusCode, &'static str)> {
    let req: EvaluateRequest = serde_json::from_slice(body)
        .map_err(|_| (StatusCode::BAD_REQUEST, error_code::MALFORMED))?;
    if req.sim_version != state.sim_version {
        return Err((StatusCode::UNPROCESSABLE_ENTITY, error_code::UNKNOWN_SIM_VERSION));
    }
    let params = ControllerParams::from_slice(&req.params)
        .map_err(|_| (StatusCode::UNPROCESSABLE_ENTITY, error_code::INVALID_PARAMS))?;

    let start = Instant::now();
    let fitness = state
        .model
        .fitness(&params)
        .map_err(|_| (StatusCode::UNPROCESSABLE_ENTITY, error_code::INVALID_PARAMS))?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(EvaluateResponse { fitness, elapsed_ms })
}

async fn evaluate_route(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let counter = state.requests.fetch_add(1, Ordering::SeqCst);
    let draw = {
        let mut rng = state.latency.request_rng(counter);
        inject_latency(&state.latency, &mut rng)
    };
    match draw {
        LatencyDraw::Fail => return error_response(StatusCode::SERVICE_UNAVAILABLE, error_code::UNAVAILABLE),
        LatencyDraw::Delay(ms) if ms > 0.0 => tokio::time::sleep(Duration::from_secs_f64(ms / 1e3)).await,
        LatencyDraw::Delay(_) => {}
    }
    match handle_evaluate(&state, &body) {
        Ok(resp) => {
            state.evaluations.fetch_add(1, Ordering::SeqCst);
            (StatusCode::OK, Json(resp)).into_response()
        }
        Err((status, code)) => error_response(status, code),
    }
}

async fn health_route(State(state): State<Arc<ServiceState>>) -> Json<HealthResponse> {
    Json(state.health())
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/evaluate", post(evaluate_route))
        .route("/health", get(health_route))
        .with_state(state)
}

/// A running service. Dropping the handle leaves the server running until
/// [`ServiceHandle::shutdown`] is called or the runtime exits.
pub struct ServiceHandle {
    addr: SocketAddr,
    state: Arc<ServiceState>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn state(&self) -> &Arc<ServiceState> {
        &self.state
    }

    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.task.await {
            Ok(res) => Ok(res?),
            Err(e) => Err(ServiceError::Io(std::io::Error::other(e))),
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub async fn spawn(config: &ServiceConfig, addr: SocketAddr) -> Result<ServiceHandle, ServiceError> {
    let state = Arc::new(ServiceState::new(config)?);
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServiceError::Bind { addr, source })?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(ServiceHandle {
        addr,
        state,
        shutdown: Some(tx),
        task,
    })
}

/// Spawns on an ephemeral localhost port.
pub async fn spawn_local(config: &ServiceConfig) -> Result<ServiceHandle, ServiceError> {
    spawn(config, SocketAddr::from(([127, 0, 0, 1], 0))).await
}

/// Serves on `0.0.0.0:port` until ctrl-c.
pub async fn serve(config: &ServiceConfig, port: u16) -> Result<(), ServiceError> {
    let handle = spawn(config, SocketAddr::from(([0, 0, 0, 0], port))).await?;
    tracing::info!(
        addr = %handle.addr(),
        latency = %config.latency.distribution,
        failure_rate = config.latency.failure_rate,
        seed_fitness = handle.state().model().calibration.seed_fitness,
        "fitness service listening"
    );
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await
}

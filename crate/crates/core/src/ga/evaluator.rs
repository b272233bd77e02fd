use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use thiserror::Error;

use crate::plant::{ControllerParams, FitnessModel, PlantError, FITNESS_MAX, FITNESS_MIN};
use crate::service::{ErrorBody, EvaluateRequest, EvaluateResponse, HealthResponse, SIM_VERSION};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("service unavailable (status {0})")]
    Unavailable(u16),
    #[error("request rejected with status {status}: {code}")]
    Rejected { status: u16, code: String },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<EvalError> },
    #[error(transparent)]
    Plant(#[from] PlantError),
}

impl EvalError {
    fn is_retryable(&self) -> bool {
        matches!(self, EvalError::Transport(_) | EvalError::Timeout | EvalError::Unavailable(_))
    }
}

/// Something that can score a controller. Implementations must be safe to
/// call concurrently.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, params: &ControllerParams) -> impl Future<Output = Result<f64, EvalError>> + Send;

    /// Liveness probe run before each trial.
    fn health(&self) -> impl Future<Output = Result<(), EvalError>> + Send {
        async { Ok(()) }
    }
}

impl<E: Evaluator> Evaluator for Arc<E> {
    fn evaluate(&self, params: &ControllerParams) -> impl Future<Output = Result<f64, EvalError>> + Send {
        (**self).evaluate(params)
    }

    fn health(&self) -> impl Future<Output = Result<(), EvalError>> + Send {
        (**self).health()
    }
}

/// In-process evaluation against the plant model.
#[derive(Debug, Clone)]
pub struct LocalEvaluator {
    model: FitnessModel,
    delay: Option<Duration>,
}

impl LocalEvaluator {
    pub fn new(model: FitnessModel) -> Self {
        LocalEvaluator { model, delay: None }
    }

    /// Sleeps for `delay` before every evaluation.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn model(&self) -> &FitnessModel {
        &self.model
    }
}

impl Evaluator for LocalEvaluator {
    fn evaluate(&self, params: &ControllerParams) -> impl Future<Output = Result<f64, EvalError>> + Send {
        let params = *params;
        async move {
            if let Some(d) = self.delay {
                tokio::time::sleep(d).await;
            }
            Ok(self.model.fitness(&params)?)
        }
    }
}

/// Exponential backoff base between retries.
pub const BACKOFF_BASE: Duration = Duration::from_millis(250);
pub const BACKOFF_FACTOR: u32 = 2;

/// Client for the `/evaluate` wire protocol.
#[derive(Debug, Clone)]
pub struct HttpEvaluator {
    client: reqwest::Client,
    base_url: String,
    sim_version: u32,
    timeout: Duration,
    max_retries: u32,
    backoff_base: Duration,
}

impl HttpEvaluator {
    pub fn new(base_url: &str, timeout: Duration, max_retries: u32) -> Result<Self, EvalError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EvalError::Transport(e.to_string()))?;
        Ok(HttpEvaluator {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            sim_version: SIM_VERSION,
            timeout,
            max_retries,
            backoff_base: BACKOFF_BASE,
        })
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_sim_version(mut self, version: u32) -> Self {
        self.sim_version = version;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.backoff_base * BACKOFF_FACTOR.saturating_pow(attempt)
    }

    fn map_transport(e: reqwest::Error) -> EvalError {
        if e.is_timeout() {
            EvalError::Timeout
        } else {
            EvalError::Transport(e.to_string())
        }
    }

    async fn attempt(&self, params: &ControllerParams) -> Result<f64, EvalError> {
        let req = EvaluateRequest {
            params: params.to_array().to_vec(),
            sim_version: self.sim_version,
        };
        let resp = self
            .client
            .post(format!("{}/evaluate", self.base_url))
            .json(&req)
            .send()
            .await
            .map_err(Self::map_transport)?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(Self::map_transport)?;
        match status {
            StatusCode::OK => {
                let body: EvaluateResponse = serde_json::from_slice(&bytes)
                    .map_err(|e| EvalError::BadResponse(e.to_string()))?;
                if !(FITNESS_MIN..=FITNESS_MAX).contains(&body.fitness) {
                    return Err(EvalError::BadResponse(format!(
                        "fitness {} outside [{FITNESS_MIN}, {FITNESS_MAX}]",
                        body.fitness
                    )));
                }
                Ok(body.fitness)
            }
            s if s.is_server_error() || s == StatusCode::TOO_MANY_REQUESTS => {
                Err(EvalError::Unavailable(s.as_u16()))
            }
            s => {
                let code = serde_json::from_slice::<ErrorBody>(&bytes)
                    .map(|b| b.error)
                    .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
                Err(EvalError::Rejected { status: s.as_u16(), code })
            }
        }
    }
}

impl Evaluator for HttpEvaluator {
    fn evaluate(&self, params: &ControllerParams) -> impl Future<Output = Result<f64, EvalError>> + Send {
        let params = *params;
        async move {
            let mut attempt = 0;
            loop {
                match self.attempt(&params).await {
                    Ok(f) => return Ok(f),
                    Err(e) if e.is_retryable() && attempt < self.max_retries => {
                        tokio::time::sleep(self.backoff(attempt)).await;
                        attempt += 1;
                    }
                    Err(e) if e.is_retryable() => {
                        return Err(EvalError::Exhausted {
                            attempts: attempt + 1,
                            last: Box::new(e),
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }

    async fn health(&self) -> Result<(), EvalError> {
        let resp = self
            .client
            .get(format!("{}/health", self.base_url))
            .timeout(self.timeout)
            .send()
            .await
            .map_err(Self::map_transport)?;
        if !resp.status().is_success() {
            return Err(EvalError::Unavailable(resp.status().as_u16()));
        }
        let body: HealthResponse = resp
            .json()
            .await
            .map_err(|e| EvalError::BadResponse(e.to_string()))?;
        if body.sim_version != self.sim_version {
            return Err(EvalError::BadResponse(format!(
                "service runs sim_version {}, client expects {}",
                body.sim_version, self.sim_version
            )));
        }
        Ok(())
    }
}

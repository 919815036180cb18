//! HTTP front end: one compliance checker per contract instance.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/contracts` | `{"contract": "dataseller"}` (optional) | 201 `{"id": ...}` |
//! | POST | `/contracts/{id}/events` | event XML | 200 verdict XML |
//! | POST | `/contracts/{id}/clock` | `{"days": n}` | `{"fired": [...]}` |
//! | POST | `/contracts/{id}/chain/tick` | `{"ticks": n}` | `{"delivered": n}` |
//! | GET | `/contracts/{id}` | | ROP state as JSON |
//! | GET | `/contracts/{id}/log` | | text dump |
//! | GET | `/contracts/{id}/log/raw` | | binary log |

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hybridcc::chain::{ChainSim, CodeId, LatencyPolicy};
use hybridcc::checker::{ChainPort, Checker, CheckerConfig, CheckerError, Ordering};
use hybridcc::contract::{reference_contract, ContractGraph, Verdict, REFERENCE_NAME};
use hybridcc::formats::{parse_event, verdict_xml};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Contract new instances get when the request names none.
    pub contract: String,
    /// Chain latency, as accepted by [`LatencyPolicy`]'s parser.
    pub latency: String,
    /// Settle outstanding confirmations before judging each event.
    pub settle_first: bool,
    pub payment_amount: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            contract: REFERENCE_NAME.to_owned(),
            latency: "0".to_owned(),
            settle_first: false,
            payment_amount: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("bad latency: {0}")]
    Latency(String),
    #[error("unknown contract {0:?}")]
    UnknownContract(String),
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<ServiceConfig, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.latency_policy()?;
        contract_by_name(&cfg.contract)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ServiceConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        ServiceConfig::from_toml(&text)
    }

    pub fn latency_policy(&self) -> Result<LatencyPolicy, ConfigError> {
        self.latency.parse().map_err(ConfigError::Latency)
    }
}

pub fn contract_by_name(name: &str) -> Result<ContractGraph, ConfigError> {
    match name {
        REFERENCE_NAME => Ok(reference_contract()),
        other => Err(ConfigError::UnknownContract(other.to_owned())),
    }
}

struct Instance {
    checker: Checker,
    chain: Arc<Mutex<ChainSim>>,
}

pub struct AppState {
    config: ServiceConfig,
    instances: RwLock<HashMap<String, Arc<Instance>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<AppState> {
        Arc::new(AppState { config, instances: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1) })
    }

    fn instance(&self, id: &str) -> Result<Arc<Instance>, ApiError> {
        self.instances
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(id.to_owned()))
    }
}

#[derive(Debug)]
enum ApiError {
    NotFound(String),
    BadRequest(String),
    Conflict(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::NotFound(id) => (StatusCode::NOT_FOUND, format!("no contract instance {id}")),
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
        };
        (status, Json(serde_json::json!({ "error": msg }))).into_response()
    }
}

impl From<CheckerError> for ApiError {
    fn from(e: CheckerError) -> Self {
        match e {
            CheckerError::ContractEnded => ApiError::Conflict(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub contract: Option<String>,
    /// A full contract graph instead of a named one.
    pub graph: Option<ContractGraph>,
    pub latency: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClockRequest {
    pub days: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TickRequest {
    pub ticks: u64,
}

async fn create(State(app): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let graph = match (req.graph, req.contract) {
        (Some(g), _) => g,
        (None, name) => contract_by_name(name.as_deref().unwrap_or(&app.config.contract))
            .map_err(|e| ApiError::BadRequest(e.to_string()))?,
    };
    let latency: LatencyPolicy =
        req.latency.as_deref().unwrap_or(&app.config.latency).parse().map_err(ApiError::BadRequest)?;
    let chain = Arc::new(Mutex::new(ChainSim::new(latency)));
    let address = chain.lock().unwrap_or_else(|p| p.into_inner()).deploy(CodeId::CollectPayment);
    let checker = Checker::new(CheckerConfig {
        contract: graph,
        chain: ChainPort { chain: chain.clone(), address },
        ordering: if app.config.settle_first { Ordering::SettleFirst { max_ticks: 1_000 } } else { Ordering::Arrival },
        payment_amount: app.config.payment_amount,
    })?;
    let id = format!("c{}", app.next_id.fetch_add(1, AtomicOrdering::Relaxed));
    app.instances.write().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), Arc::new(Instance { checker, chain }));
    tracing::info!(%id, "created contract instance");
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn submit(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    let event = parse_event(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let verdict = inst.checker.submit_event(event)?;
    Ok(([(header::CONTENT_TYPE, "application/xml")], verdict_xml(verdict == Verdict::Compliant)).into_response())
}

async fn clock(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<ClockRequest>,
) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    let fired = inst.checker.advance_clock(req.days)?;
    Ok(Json(serde_json::json!({ "fired": fired, "now": inst.checker.now() })).into_response())
}

async fn tick(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<TickRequest>,
) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    let delivered = inst
        .chain
        .lock()
        .unwrap_or_else(|p| p.into_inner())
        .tick(req.ticks)
        .map_err(|e| ApiError::BadRequest(e.to_string()))?
        .len();
    let processed = inst.checker.process_inbox();
    Ok(Json(serde_json::json!({ "delivered": delivered, "processed": processed })).into_response())
}

async fn state(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    inst.checker.process_inbox();
    Ok(Json(inst.checker.state()).into_response())
}

async fn log_dump(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], inst.checker.log().text_dump()).into_response())
}

async fn log_raw(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let inst = app.instance(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], inst.checker.log().to_bytes()).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/contracts", post(create))
        .route("/contracts/{id}", get(state))
        .route("/contracts/{id}/events", post(submit))
        .route("/contracts/{id}/clock", post(clock))
        .route("/contracts/{id}/chain/tick", post(tick))
        .route("/contracts/{id}/log", get(log_dump))
        .route("/contracts/{id}/log/raw", get(log_raw))
        .with_state(app)
}

/// Bind and serve until ctrl-c.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, config).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    let app = router(AppState::new(config));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

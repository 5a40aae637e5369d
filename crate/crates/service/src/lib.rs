//! HTTP JSON API over the catalog, the study store, prediction and evaluation.

mod error;
mod idempotency;
mod routes;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::AtomicU64;
use std::sync::Arc;
use std::time::Duration;

use axum::http::{HeaderName, HeaderValue, Method};
use axum::routing::{get, post};
use axum::{middleware, Router};
use dashmap::DashMap;
use degusta_api::{ApiError, Prediction};
use degusta_core::acceptability::JitterConfig;
use degusta_core::dataset::{DatasetStore, StoreError};
use degusta_core::{load_catalog, Catalog, CatalogError};
use degusta_models::{ConfigError, ModelClient, ProviderConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{watch, Mutex};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use error::AppError;
pub use idempotency::REPLAY_HEADER;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("data store: {0}")]
    Store(#[from] StoreError),
    #[error("provider `{name}`: {source}")]
    Provider {
        name: String,
        #[source]
        source: ConfigError,
    },
    #[error("invalid CORS origin `{0}`")]
    Cors(String),
    #[error("bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub catalog_dir: PathBuf,
    /// Providers callers may name in `/predict`.
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    #[serde(default)]
    pub jitter: JitterConfig,
    /// Makes table orders and jitter draws reproducible.
    #[serde(default)]
    pub seed: Option<u64>,
    /// How long `/predict` blocks before handing out a polling ticket.
    #[serde(default = "default_wait")]
    pub predict_wait_ms: u64,
    /// Allowed browser origins; empty allows any.
    #[serde(default)]
    pub cors_origins: Vec<String>,
    /// Built UI assets served at `/`.
    #[serde(default)]
    pub ui_dir: Option<PathBuf>,
}

fn default_wait() -> u64 {
    300_000
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, catalog_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            catalog_dir: catalog_dir.into(),
            providers: BTreeMap::new(),
            jitter: JitterConfig::default(),
            seed: None,
            predict_wait_ms: default_wait(),
            cors_origins: Vec::new(),
            ui_dir: None,
        }
    }
}

pub(crate) type JobResult = Option<Result<Prediction, ApiError>>;

pub struct AppState {
    pub(crate) catalog: Arc<Catalog>,
    pub(crate) store: DatasetStore,
    pub(crate) providers: BTreeMap<String, Arc<ModelClient>>,
    pub(crate) config: ServiceConfig,
    session_locks: DashMap<String, Arc<Mutex<()>>>,
    pub(crate) idempotency: DashMap<String, idempotency::Slot>,
    pub(crate) jobs: DashMap<String, watch::Receiver<JobResult>>,
    pub(crate) counter: AtomicU64,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let catalog = load_catalog(&config.catalog_dir)?;
        let store = DatasetStore::open(&config.data_dir)?;
        let providers = config
            .providers
            .iter()
            .map(|(name, cfg)| {
                ModelClient::new(cfg.clone())
                    .map(|c| (name.clone(), Arc::new(c)))
                    .map_err(|source| ServiceError::Provider {
                        name: name.clone(),
                        source,
                    })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            catalog: Arc::new(catalog),
            store,
            providers,
            config,
            session_locks: DashMap::new(),
            idempotency: DashMap::new(),
            jobs: DashMap::new(),
            counter: AtomicU64::new(0),
        })
    }

    /// Writes for one session go through this lock one at a time.
    pub(crate) fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        self.session_locks.entry(id.to_string()).or_default().clone()
    }
}

pub fn router(state: Arc<AppState>) -> Result<Router, ServiceError> {
    let assets = ServeDir::new(state.catalog.root());
    let mut app = Router::new()
        .route("/health", get(routes::health))
        .route("/catalog", get(routes::catalog))
        .route("/tables", get(routes::tables))
        .route("/sessions", post(routes::create_session).get(routes::list_sessions))
        .route("/sessions/{id}", get(routes::get_session))
        .route("/sessions/{id}/arrangements", post(routes::submit_arrangement))
        .route("/sessions/{id}/ratings", post(routes::submit_rating))
        .route("/sessions/{id}/jitter", get(routes::jitter))
        .route("/sessions/{id}/corrections", post(routes::submit_correction))
        .route("/predict", post(routes::predict))
        .route("/predict/{job}", get(routes::poll_prediction))
        .route("/evaluate", post(routes::evaluate))
        .nest_service("/assets", assets);
    app = match &state.config.ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(error::fallback),
    };
    let cors = cors(&state.config.cors_origins)?;
    Ok(app
        .layer(middleware::from_fn_with_state(state.clone(), idempotency::idempotency))
        .layer(middleware::from_fn(error::request_context))
        .layer(cors)
        .with_state(state))
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let allow = if origins.is_empty() {
        AllowOrigin::any()
    } else {
        let values = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Cors(o.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(values)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([
            axum::http::header::CONTENT_TYPE,
            HeaderName::from_static(degusta_api::IDEMPOTENCY_HEADER),
            HeaderName::from_static(degusta_api::REQUEST_ID_HEADER),
        ])
        .expose_headers([HeaderName::from_static(degusta_api::REQUEST_ID_HEADER)])
        .max_age(Duration::from_secs(600)))
}

/// A bound server ready to run.
pub struct Server {
    listener: tokio::net::TcpListener,
    app: Router,
}

impl Server {
    pub async fn bind(config: ServiceConfig, addr: SocketAddr) -> Result<Self, ServiceError> {
        let state = Arc::new(AppState::new(config)?);
        let app = router(state)?;
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Self { listener, app })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    pub async fn run(self) -> Result<(), ServiceError> {
        tracing::info!(addr = %self.local_addr(), "serving");
        axum::serve(self.listener, self.app).await.map_err(ServiceError::Serve)
    }

    /// Runs on the current runtime; returns the address and the task handle.
    pub fn spawn(self) -> (SocketAddr, tokio::task::JoinHandle<Result<(), ServiceError>>) {
        let addr = self.local_addr();
        (addr, tokio::spawn(self.run()))
    }
}

//! REST API and command-line front end for [`pomdbg`].
//!
//! Everything is served under `/api/v1`; see `docs/api.md` for the endpoint
//! table and JSON schemas. [`router`] builds the service in-process, which
//! is how the contract tests drive it.

pub mod cli;
pub mod error;
mod routes;
pub mod sessions;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

use pomdbg::store::TraceStore;
use pomdbg::{Policy, PomdpModel};

pub use error::{ApiError, ErrorBody};
pub use routes::{ScenarioDetail, SessionCreated};
pub use sessions::SessionManager;

pub const DEFAULT_MAX_SESSIONS: usize = 64;
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<TraceStore>,
    pub sessions: Arc<SessionManager>,
}

impl AppState {
    pub fn new(store: TraceStore, max_sessions: usize, ttl: Duration) -> Self {
        Self {
            store: Arc::new(store),
            sessions: Arc::new(SessionManager::new(max_sessions, ttl)),
        }
    }
}

/// Policies constructible without a policy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinPolicy {
    Random,
    NeverDefend,
    Threshold { alpha: f64 },
}

impl BuiltinPolicy {
    pub fn build(&self, model: &PomdpModel) -> Policy {
        match self {
            BuiltinPolicy::Random => Policy::random(model),
            BuiltinPolicy::NeverDefend => Policy::never_defend(model),
            BuiltinPolicy::Threshold { alpha } => Policy::threshold(model, *alpha),
        }
    }

    /// Parses `random`, `never_defend`, or `threshold=<alpha>`.
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "random" => Some(BuiltinPolicy::Random),
            "never_defend" => Some(BuiltinPolicy::NeverDefend),
            _ => text
                .strip_prefix("threshold=")
                .and_then(|a| a.parse().ok())
                .map(|alpha| BuiltinPolicy::Threshold { alpha }),
        }
    }
}

/// Looks a scenario up by catalog id, then by catalog name, then by the
/// model name recorded in trace headers.
pub fn resolve_scenario(store: &TraceStore, key: &str) -> pomdbg::Result<PomdpModel> {
    match store.scenario_model(key) {
        Err(pomdbg::Error::NotFound(msg)) => {
            for entry in store.list_scenarios() {
                if entry.name == key {
                    return store.scenario_model(&entry.id);
                }
            }
            for entry in store.list_scenarios() {
                if store.scenario_config(&entry.id)?.name == key {
                    return store.scenario_model(&entry.id);
                }
            }
            Err(pomdbg::Error::NotFound(msg))
        }
        other => other,
    }
}

/// The API mounted under `/api/v1`, plus static assets when `static_dir`
/// is given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let app = Router::new().nest("/api/v1", routes::api_router().with_state(state));
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.layer(TraceLayer::new_for_http())
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub store_root: PathBuf,
    pub max_sessions: usize,
    pub session_ttl: Duration,
    pub static_dir: Option<PathBuf>,
}

/// Runs until Ctrl-C, then flushes the store index.
pub async fn serve(config: ServeConfig) -> pomdbg::Result<()> {
    let store = TraceStore::open(&config.store_root)?;
    let state = AppState::new(store, config.max_sessions, config.session_ttl);
    let app = router(state.clone(), config.static_dir.clone());
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %config.store_root.display(), "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    state.store.flush()
}

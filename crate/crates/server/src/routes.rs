use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use pomdbg::debugger::{
    Breakpoint, DebugSession, Frame, Mode, Predicate, SessionSource, SessionSummary, Status,
};
use pomdbg::policy::save_policy;
use pomdbg::store::{
    CatalogEntry, Conditioning, EstimationConfig, ObservationKernelEstimate, TraceFilter,
    TraceMeta,
};
use pomdbg::{Belief, EpisodeTrace, Observation, PolicyInput, ScenarioConfig};

use crate::error::{ApiError, ApiResult, UNSUPPORTED_MEDIA_TYPE};
use crate::sessions::spawn_autoplay;
use crate::{resolve_scenario, AppState, BuiltinPolicy};

const NDJSON: &str = "application/x-ndjson";
/// Tolerance on client-supplied belief vectors; they are renormalized after.
const BELIEF_TOLERANCE: f64 = 1e-6;
const DEFAULT_INTERVAL_MS: u64 = 500;

pub fn api_router() -> Router<AppState> {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/continue", post(continue_run))
        .route("/sessions/{id}/halt", post(halt))
        .route("/sessions/{id}/reverse", post(reverse))
        .route("/sessions/{id}/fork", post(fork))
        .route("/sessions/{id}/what-if", post(what_if))
        .route("/sessions/{id}/frame", get(frame))
        .route("/sessions/{id}/frames", get(frames))
        .route(
            "/sessions/{id}/breakpoints",
            get(list_breakpoints).post(add_breakpoint),
        )
        .route("/sessions/{id}/breakpoints/{bid}", delete(remove_breakpoint))
        .route("/traces", get(list_traces).post(ingest_trace))
        .route("/traces/{id}", get(get_trace))
        .route("/traces/{id}/export", get(export_trace))
        .route("/policies", get(list_policies).post(register_policy))
        .route("/policies/{id}/predict", post(predict))
        .route("/scenarios", get(list_scenarios).post(register_scenario))
        .route("/scenarios/{id}", get(get_scenario))
        .route(
            "/scenarios/{id}/estimate-observation-model",
            post(estimate_observation_model),
        )
        .fallback(unknown_route)
}

async fn unknown_route() -> ApiError {
    ApiError::from(pomdbg::Error::NotFound("no such endpoint".into()))
}

/// Parses a JSON body; an empty body means `T::default()`.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    required_body(bytes)
}

fn required_body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::malformed(format!("invalid JSON body: {e}")))
}

fn content_type(headers: &HeaderMap) -> &str {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split(';').next())
        .map(str::trim)
        .unwrap_or("")
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    version: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok",
        version: env!("CARGO_PKG_VERSION"),
    })
}

// ---- sessions ----

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SourceKind {
    #[default]
    Simulation,
    Replay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModeKind {
    #[default]
    Manual,
    Autoplay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    #[serde(default)]
    source: SourceKind,
    scenario: Option<String>,
    /// Simulation only: the scenario that generates the hidden process when
    /// it differs from the defender's model.
    environment_scenario: Option<String>,
    policy_id: Option<String>,
    builtin_policy: Option<BuiltinPolicy>,
    seed: Option<u64>,
    horizon: Option<usize>,
    trace_id: Option<String>,
    #[serde(default)]
    mode: ModeKind,
    interval_ms: Option<u64>,
    reveal_attacker: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session: SessionSummary,
    pub frame: Frame,
}

fn resolve_policy(
    state: &AppState,
    id: Option<&str>,
    builtin: Option<&BuiltinPolicy>,
    model: &pomdbg::PomdpModel,
) -> ApiResult<Option<pomdbg::Policy>> {
    match (id, builtin) {
        (Some(_), Some(_)) => Err(ApiError::from(pomdbg::Error::Validation(
            "give policy_id or builtin_policy, not both".into(),
        ))),
        (Some(id), None) => Ok(Some(state.store.load_policy(id)?)),
        (None, Some(b)) => Ok(Some(b.build(model))),
        (None, None) => Ok(None),
    }
}

async fn create_session(
    State(state): State<AppState>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = body(&bytes)?;
    let mode = match req.mode {
        ModeKind::Manual => Mode::Manual,
        ModeKind::Autoplay => Mode::Autoplay {
            interval_ms: req.interval_ms.unwrap_or(DEFAULT_INTERVAL_MS),
        },
    };
    let source = match req.source {
        SourceKind::Simulation => {
            if req.trace_id.is_some() {
                return Err(ApiError::from(pomdbg::Error::Validation(
                    "trace_id is only valid for replay sessions".into(),
                )));
            }
            let scenario = req.scenario.as_deref().unwrap_or(pomdbg::scenario::DEFAULT_SCENARIO);
            let model = Arc::new(resolve_scenario(&state.store, scenario)?);
            let environment = match &req.environment_scenario {
                Some(id) => Some(Arc::new(resolve_scenario(&state.store, id)?)),
                None => None,
            };
            let policy = resolve_policy(
                &state,
                req.policy_id.as_deref(),
                req.builtin_policy.as_ref(),
                &model,
            )?
            .ok_or_else(|| {
                ApiError::from(pomdbg::Error::Validation(
                    "simulation sessions need policy_id or builtin_policy".into(),
                ))
            })?;
            SessionSource::Simulation {
                model,
                environment,
                policy: Arc::new(policy),
                seed: req.seed.unwrap_or(0),
                horizon: req.horizon,
            }
        }
        SourceKind::Replay => {
            let trace_id = req.trace_id.as_deref().ok_or_else(|| {
                ApiError::from(pomdbg::Error::Validation(
                    "replay sessions need trace_id".into(),
                ))
            })?;
            let trace = state.store.get_trace(trace_id)?;
            let scenario = req.scenario.as_deref().unwrap_or(&trace.header.scenario);
            let model = resolve_scenario(&state.store, scenario)?;
            let overlay = resolve_policy(
                &state,
                req.policy_id.as_deref(),
                req.builtin_policy.as_ref(),
                &model,
            )?;
            SessionSource::Replay {
                trace: Arc::new(trace),
                model: Arc::new(model),
                overlay: overlay.map(Arc::new),
            }
        }
    };
    let mut session = DebugSession::new(source, mode)?;
    if let Some(reveal) = req.reveal_attacker {
        session.set_reveal_attacker(reveal);
    }
    let created = SessionCreated {
        session: session.summary(),
        frame: session.current_frame(),
    };
    state.sessions.insert(session)?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    let mut out = Vec::new();
    for entry in state.sessions.all() {
        out.push(entry.session.lock().await.summary());
    }
    out.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    Json(out)
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionSummary>> {
    let entry = state.sessions.get(&id)?;
    let summary = entry.session.lock().await.summary();
    Ok(Json(summary))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    state.sessions.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountBody {
    #[serde(default = "one")]
    n: usize,
}

impl Default for CountBody {
    fn default() -> Self {
        Self { n: 1 }
    }
}

fn one() -> usize {
    1
}

async fn step(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<Frame>> {
    let req: CountBody = body(&bytes)?;
    let entry = state.sessions.get(&id)?;
    let frame = entry.session.lock().await.step(req.n)?;
    Ok(Json(frame))
}

async fn continue_run(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Frame>> {
    let entry = state.sessions.get(&id)?;
    let frame = {
        let mut session = entry.session.lock().await;
        let frame = session.continue_run()?;
        if session.status() == Status::Running {
            drop(session);
            spawn_autoplay(entry.clone());
        }
        frame
    };
    Ok(Json(frame))
}

async fn halt(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Frame>> {
    let entry = state.sessions.get(&id)?;
    let frame = entry.session.lock().await.halt()?;
    Ok(Json(frame))
}

async fn reverse(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<Frame>> {
    let req: CountBody = body(&bytes)?;
    let entry = state.sessions.get(&id)?;
    let frame = entry.session.lock().await.reverse(req.n)?;
    Ok(Json(frame))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForkBody {
    seed: Option<u64>,
}

async fn fork(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: ForkBody = body(&bytes)?;
    let entry = state.sessions.get(&id)?;
    let forked = entry.session.lock().await.fork(req.seed)?;
    let created = SessionCreated {
        session: forked.summary(),
        frame: forked.current_frame(),
    };
    state.sessions.insert(forked)?;
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ActionRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIfBody {
    action: ActionRef,
}

async fn what_if(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<pomdbg::debugger::WhatIfReport>> {
    let req: WhatIfBody = required_body(&bytes)?;
    let entry = state.sessions.get(&id)?;
    let session = entry.session.lock().await;
    let action = match req.action {
        ActionRef::Index(i) => i,
        ActionRef::Name(name) => session.model().defender_action_index(&name).ok_or_else(|| {
            ApiError::from(pomdbg::Error::Range(format!("unknown defender action {name:?}")))
        })?,
    };
    Ok(Json(session.what_if(action)?))
}

async fn frame(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Frame>> {
    let entry = state.sessions.get(&id)?;
    let frame = entry.session.lock().await.current_frame();
    Ok(Json(frame))
}

#[derive(Debug, Deserialize)]
struct FrameWindow {
    from: Option<usize>,
    to: Option<usize>,
}

async fn frames(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(window): Query<FrameWindow>,
) -> ApiResult<Json<Vec<Frame>>> {
    let entry = state.sessions.get(&id)?;
    let frames = entry
        .session
        .lock()
        .await
        .frames(window.from.unwrap_or(0), window.to.unwrap_or(usize::MAX));
    Ok(Json(frames))
}

async fn list_breakpoints(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<Vec<Breakpoint>>> {
    let entry = state.sessions.get(&id)?;
    let list = entry.session.lock().await.list_breakpoints();
    Ok(Json(list))
}

async fn add_breakpoint(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<Breakpoint>)> {
    let predicate: Predicate = required_body(&bytes)?;
    let entry = state.sessions.get(&id)?;
    let bid = entry.session.lock().await.add_breakpoint(predicate.clone())?;
    Ok((StatusCode::CREATED, Json(Breakpoint { id: bid, predicate })))
}

async fn remove_breakpoint(
    State(state): State<AppState>,
    Path((id, bid)): Path<(String, u64)>,
) -> ApiResult<StatusCode> {
    let entry = state.sessions.get(&id)?;
    entry.session.lock().await.remove_breakpoint(bid)?;
    Ok(StatusCode::NO_CONTENT)
}

// ---- traces ----

#[derive(Debug, Deserialize)]
struct TraceQuery {
    scenario: Option<String>,
}

async fn list_traces(
    State(state): State<AppState>,
    Query(q): Query<TraceQuery>,
) -> Json<Vec<TraceMeta>> {
    Json(state.store.list_traces(&TraceFilter {
        scenario: q.scenario,
    }))
}

/// Accepts the line-delimited format (`application/x-ndjson`,
/// `application/jsonl`, `text/plain`) or a JSON `{header, steps}` object.
async fn ingest_trace(
    State(state): State<AppState>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<TraceMeta>)> {
    let id = match content_type(&headers) {
        NDJSON | "application/jsonl" | "application/x-jsonlines" | "text/plain" | "" => {
            state.store.ingest_trace(&bytes[..])?
        }
        "application/json" => {
            let trace: EpisodeTrace = required_body(&bytes)?;
            state.store.insert_trace(trace)?
        }
        other => {
            return Err(ApiError::new(
                UNSUPPORTED_MEDIA_TYPE,
                format!("cannot ingest {other}; use {NDJSON} or application/json"),
            ))
        }
    };
    Ok((StatusCode::CREATED, Json(state.store.trace_meta(&id)?)))
}

fn wants_ndjson(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains(NDJSON))
}

fn ndjson(text: String) -> Response {
    ([(header::CONTENT_TYPE, NDJSON)], text).into_response()
}

async fn get_trace(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    if wants_ndjson(&headers) {
        return Ok(ndjson(state.store.export_trace(&id)?));
    }
    Ok(Json(state.store.get_trace(&id)?).into_response())
}

async fn export_trace(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(ndjson(state.store.export_trace(&id)?))
}

// ---- policies ----

async fn list_policies(State(state): State<AppState>) -> Json<Vec<CatalogEntry>> {
    Json(state.store.list_policies())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterPolicy {
    name: String,
    /// A policy file, inline.
    policy: Option<serde_json::Value>,
    builtin: Option<BuiltinPolicy>,
    /// Spaces for `builtin`; defaults to the built-in scenario.
    scenario: Option<String>,
}

async fn register_policy(
    State(state): State<AppState>,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<CatalogEntry>)> {
    let req: RegisterPolicy = required_body(&bytes)?;
    let file = match (req.policy, req.builtin) {
        (Some(v), None) => serde_json::to_vec(&v).expect("JSON value serializes"),
        (None, Some(b)) => {
            let scenario = req.scenario.as_deref().unwrap_or(pomdbg::scenario::DEFAULT_SCENARIO);
            let model = resolve_scenario(&state.store, scenario)?;
            save_policy(&b.build(&model))
        }
        _ => {
            return Err(ApiError::from(pomdbg::Error::Validation(
                "give exactly one of policy or builtin".into(),
            )))
        }
    };
    let id = state.store.register_policy(&req.name, &file)?;
    Ok((StatusCode::CREATED, Json(state.store.policy_entry(&id)?)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictBody {
    belief: Vec<f64>,
    last_observation: Option<Vec<usize>>,
    t: usize,
    horizon: usize,
    /// Decodes observation bins; defaults to the built-in scenario.
    scenario: Option<String>,
}

async fn predict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<pomdbg::ActionDistribution>> {
    let policy = state.store.load_policy(&id)?;
    let req: PredictBody = required_body(&bytes)?;
    let invalid = |msg: String| ApiError::from(pomdbg::Error::Validation(msg));
    let scenario = req.scenario.as_deref().unwrap_or(pomdbg::scenario::DEFAULT_SCENARIO);
    let model = resolve_scenario(&state.store, scenario)?;
    policy.check_compatible(&model)?;

    if req.belief.len() != model.num_states() {
        return Err(invalid(format!(
            "belief has {} entries, expected {}",
            req.belief.len(),
            model.num_states()
        )));
    }
    if req.belief.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(invalid("belief entries must be finite and non-negative".into()));
    }
    let total: f64 = req.belief.iter().sum();
    if (total - 1.0).abs() > BELIEF_TOLERANCE {
        return Err(invalid(format!("belief sums to {total}, not 1")));
    }
    let belief = Belief::new(req.belief.iter().map(|p| p / total).collect())?;
    if req.horizon == 0 || req.t > req.horizon {
        return Err(invalid(format!("need 0 <= t <= horizon, horizon >= 1 (t={}, horizon={})", req.t, req.horizon)));
    }
    let obs = req.last_observation.map(Observation);
    if let Some(o) = &obs {
        model.check_observation(o).map_err(|e| invalid(e.to_string()))?;
    }
    let input = PolicyInput::from_model(&model, &belief, obs.as_ref(), req.t, req.horizon);
    Ok(Json(policy.predict(&input)?))
}

// ---- scenarios ----

async fn list_scenarios(State(state): State<AppState>) -> Json<Vec<CatalogEntry>> {
    Json(state.store.list_scenarios())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterScenario {
    name: Option<String>,
    config: ScenarioConfig,
}

/// JSON `{name?, config}` or a raw TOML scenario file.
async fn register_scenario(
    State(state): State<AppState>,
    headers: HeaderMap,
    bytes: Bytes,
) -> ApiResult<(StatusCode, Json<CatalogEntry>)> {
    let (name, config) = match content_type(&headers) {
        "application/toml" | "text/toml" | "text/x-toml" => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| ApiError::malformed("scenario file is not UTF-8"))?;
            let config = ScenarioConfig::from_toml(text)?;
            (config.name.clone(), config)
        }
        "application/json" | "" => {
            let req: RegisterScenario = required_body(&bytes)?;
            (req.name.unwrap_or_else(|| req.config.name.clone()), req.config)
        }
        other => {
            return Err(ApiError::new(
                UNSUPPORTED_MEDIA_TYPE,
                format!("cannot read a scenario from {other}"),
            ))
        }
    };
    let id = state.store.register_scenario(&name, &config)?;
    Ok((StatusCode::CREATED, Json(state.store.scenario_entry(&id)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScenarioDetail {
    pub entry: CatalogEntry,
    pub config: ScenarioConfig,
}

async fn get_scenario(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<ScenarioDetail>> {
    Ok(Json(ScenarioDetail {
        entry: state.store.scenario_entry(&id)?,
        config: state.store.scenario_config(&id)?,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimateBody {
    trace_ids: Vec<String>,
    alpha: Option<f64>,
    min_samples: Option<usize>,
    conditioning: Option<Conditioning>,
}

async fn estimate_observation_model(
    State(state): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<Json<ObservationKernelEstimate>> {
    let model = state.store.scenario_model(&id)?;
    let req: EstimateBody = required_body(&bytes)?;
    let mut config = EstimationConfig::for_model(&model);
    if let Some(a) = req.alpha {
        config.alpha = a;
    }
    if let Some(m) = req.min_samples {
        config.min_samples = m;
    }
    if let Some(c) = req.conditioning {
        config.conditioning = c;
    }
    let estimate = state.store.estimate_observation_model(&req.trace_ids, &config)?;
    if estimate.scenario != model.name {
        return Err(ApiError::from(pomdbg::Error::Incompatible(format!(
            "traces are from scenario {}, not {}",
            estimate.scenario, model.name
        )))
        .with_detail(json!({ "scenario": estimate.scenario })));
    }
    Ok(Json(estimate))
}

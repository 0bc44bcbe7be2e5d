//! Contract cases against the in-process router (no UI assets, no socket).
//! Shared by the `api` and `acceptance` test targets.

#![allow(dead_code)]

use std::future::Future;
use std::pin::Pin;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use tower::ServiceExt;

use pomdbg::debugger::{Breakpoint, Frame, SessionSummary, WhatIfReport};
use pomdbg::store::{CatalogEntry, ObservationKernelEstimate, TraceMeta, TraceStore};
use pomdbg::{default_scenario, simulate_episode, ActionDistribution, EpisodeTrace, Policy};
use pomdbg_server::{router, AppState, ErrorBody, SessionCreated};

struct Api {
    app: Router,
    _dir: tempfile::TempDir,
}

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.bytes))
        })
    }

    /// Decodes into `T` and checks that nothing was dropped or renamed.
    fn typed<T: DeserializeOwned + Serialize>(&self) -> T {
        let raw = self.json();
        let value: T = serde_json::from_value(raw.clone()).expect("matches schema");
        assert_eq!(serde_json::to_value(&value).unwrap(), raw);
        value
    }

    fn error(&self, status: u16, code: &str) -> ErrorBody {
        assert_eq!(
            self.status.as_u16(),
            status,
            "{}",
            String::from_utf8_lossy(&self.bytes)
        );
        let e: ErrorBody = self.typed();
        assert_eq!(e.code, code);
        assert!(!e.message.is_empty());
        e
    }
}

impl Api {
    fn with_limits(max_sessions: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::open(dir.path()).unwrap();
        let state = AppState::new(store, max_sessions, Duration::from_secs(600));
        Self {
            app: router(state, None),
            _dir: dir,
        }
    }

    fn new() -> Self {
        Self::with_limits(64)
    }

    async fn raw(&self, method: Method, uri: &str, content_type: Option<&str>, body: Vec<u8>) -> Reply {
        self.raw_with(method, uri, content_type, None, body).await
    }

    async fn raw_with(
        &self,
        method: Method,
        uri: &str,
        content_type: Option<&str>,
        accept: Option<&str>,
        body: Vec<u8>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(format!("/api/v1{uri}"));
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        if let Some(a) = accept {
            req = req.header(header::ACCEPT, a);
        }
        let res = self
            .app
            .clone()
            .oneshot(req.body(Body::from(body)).unwrap())
            .await
            .unwrap();
        let status = res.status();
        let content_type = res
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply {
            status,
            content_type,
            bytes,
        }
    }

    async fn get(&self, uri: &str) -> Reply {
        self.raw(Method::GET, uri, None, Vec::new()).await
    }

    async fn post(&self, uri: &str, body: Value) -> Reply {
        self.raw(
            Method::POST,
            uri,
            Some("application/json"),
            serde_json::to_vec(&body).unwrap(),
        )
        .await
    }

    async fn delete(&self, uri: &str) -> Reply {
        self.raw(Method::DELETE, uri, None, Vec::new()).await
    }

    async fn create(&self, body: Value) -> SessionCreated {
        let r = self.post("/sessions", body).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
        r.typed()
    }

    async fn threshold_session(&self, seed: u64) -> String {
        self.create(json!({
            "builtin_policy": {"kind": "threshold", "alpha": 0.5},
            "seed": seed,
        }))
        .await
        .session
        .session_id
    }

    async fn ingest(&self, trace: &EpisodeTrace) -> TraceMeta {
        let r = self
            .raw(
                Method::POST,
                "/traces",
                Some("application/x-ndjson"),
                trace.to_jsonl().into_bytes(),
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
        r.typed()
    }
}

fn sample_trace(seed: u64) -> EpisodeTrace {
    let m = default_scenario();
    simulate_episode(&m, &Policy::random(&m), seed, Some(12)).unwrap()
}

pub async fn health_reports_version() {
    let api = Api::new();
    let r = api.get("/health").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({"status": "ok", "version": env!("CARGO_PKG_VERSION")}));
}

pub async fn unknown_endpoint_and_session_are_not_found() {
    let api = Api::new();
    api.get("/nope").await.error(404, "not_found");
    api.get("/sessions/missing").await.error(404, "not_found");
    api.post("/sessions/missing/step", json!({})).await.error(404, "not_found");
    api.delete("/sessions/missing").await.error(404, "not_found");
}

pub async fn unknown_scenario_is_not_found() {
    let api = Api::new();
    api.post(
        "/sessions",
        json!({"scenario": "no-such-scenario", "builtin_policy": {"kind": "random"}}),
    )
    .await
    .error(404, "not_found");
}

pub async fn simulation_session_lifecycle() {
    let api = Api::new();
    let created = api
        .create(json!({"builtin_policy": {"kind": "threshold", "alpha": 0.5}, "seed": 3}))
        .await;
    assert_eq!(created.frame.t, 0);
    assert_eq!(created.session.source, "simulation");
    let id = created.session.session_id;

    let f: Frame = api.post(&format!("/sessions/{id}/step"), json!({"n": 2})).await.typed();
    assert!(f.t >= 1 && f.t <= 2);

    // Empty body means n = 1.
    let r = api.raw(Method::POST, &format!("/sessions/{id}/step"), None, Vec::new()).await;
    assert_eq!(r.status, StatusCode::OK);
    let f3: Frame = r.typed();
    assert_eq!(f3.t, f.t + 1);

    let current: Frame = api.get(&format!("/sessions/{id}/frame")).await.typed();
    assert_eq!(current, f3);
    let again: Frame = api.get(&format!("/sessions/{id}/frame")).await.typed();
    assert_eq!(again, current, "GET must not advance the session");

    let window: Vec<Frame> = api
        .get(&format!("/sessions/{id}/frames?from=0&to={}", f3.t))
        .await
        .typed();
    assert_eq!(window.len(), f3.t + 1);
    assert_eq!(window[0].t, 0);

    let summary: SessionSummary = api.get(&format!("/sessions/{id}")).await.typed();
    assert_eq!(summary.cursor, f3.t);
    let all: Vec<SessionSummary> = api.get("/sessions").await.typed();
    assert_eq!(all.len(), 1);

    let back: Frame = api.post(&format!("/sessions/{id}/reverse"), json!({"n": f3.t})).await.typed();
    assert_eq!(back, created.frame);

    let wi: WhatIfReport = api
        .post(&format!("/sessions/{id}/what-if"), json!({"action": "defend"}))
        .await
        .typed();
    assert_eq!(wi.action, 1);
    let wi0: WhatIfReport = api
        .post(&format!("/sessions/{id}/what-if"), json!({"action": 0}))
        .await
        .typed();
    assert_eq!(wi0.action_name, "continue");
    let after: Vec<Frame> = api.get(&format!("/sessions/{id}/frames")).await.typed();
    assert_eq!(after.len(), f3.t + 1, "what-if must not add frames");

    let forked = api.post(&format!("/sessions/{id}/fork"), json!({"seed": 5})).await;
    assert_eq!(forked.status, StatusCode::CREATED);
    let forked: SessionCreated = forked.typed();
    assert_ne!(forked.session.session_id, id);

    let done: Frame = api.post(&format!("/sessions/{id}/continue"), json!({})).await.typed();
    assert!(done.halt_reason.is_some());
    api.post(&format!("/sessions/{id}/step"), json!({})).await.error(409, "finished");
    api.post(&format!("/sessions/{id}/what-if"), json!({"action": 0}))
        .await
        .error(409, "precondition");

    let r = api.delete(&format!("/sessions/{id}")).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    api.get(&format!("/sessions/{id}")).await.error(404, "not_found");
}

pub async fn breakpoints_halt_and_are_removable() {
    let api = Api::new();
    let id = api.threshold_session(2).await;
    let r = api
        .post(&format!("/sessions/{id}/breakpoints"), json!({"type": "time_equals", "t": 4}))
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let bp: Breakpoint = r.typed();

    let list: Vec<Breakpoint> = api.get(&format!("/sessions/{id}/breakpoints")).await.typed();
    assert_eq!(list, vec![bp.clone()]);

    let f: Frame = api.post(&format!("/sessions/{id}/continue"), json!({})).await.typed();
    assert_eq!(f.t, 4);
    assert_eq!(f.halt_reason, Some(pomdbg::debugger::HaltReason::Breakpoint { id: bp.id }));

    let r = api.delete(&format!("/sessions/{id}/breakpoints/{}", bp.id)).await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    api.delete(&format!("/sessions/{id}/breakpoints/{}", bp.id))
        .await
        .error(404, "not_found");

    api.post(
        &format!("/sessions/{id}/breakpoints"),
        json!({"type": "belief_threshold", "state": 9, "op": "ge", "value": 0.5}),
    )
    .await
    .error(400, "range");
    api.post(&format!("/sessions/{id}/breakpoints"), json!({"type": "bogus"}))
        .await
        .error(422, "malformed");
}

pub async fn command_preconditions() {
    let api = Api::new();
    let id = api.threshold_session(1).await;
    api.post(&format!("/sessions/{id}/halt"), json!({})).await.error(409, "precondition");
    api.post(&format!("/sessions/{id}/reverse"), json!({"n": 1})).await.error(400, "range");
    api.post(&format!("/sessions/{id}/step"), json!({"n": 0})).await.error(400, "range");
    api.post(&format!("/sessions/{id}/what-if"), json!({"action": 7})).await.error(400, "range");
    api.post(&format!("/sessions/{id}/what-if"), json!({"action": "surrender"}))
        .await
        .error(400, "range");
    api.raw(Method::POST, &format!("/sessions/{id}/step"), Some("application/json"), b"{n:".to_vec())
        .await
        .error(422, "malformed");
    api.post(&format!("/sessions/{id}/step"), json!({"n": 1, "extra": true}))
        .await
        .error(422, "malformed");
    api.post("/sessions", json!({"seed": 1})).await.error(422, "validation");
}

pub async fn session_cap_is_enforced() {
    let api = Api::with_limits(1);
    api.threshold_session(1).await;
    api.post("/sessions", json!({"builtin_policy": {"kind": "random"}}))
        .await
        .error(503, "capacity");
}

pub async fn autoplay_runs_until_halted() {
    let api = Api::new();
    let id = api
        .create(json!({
            "builtin_policy": {"kind": "never_defend"},
            "mode": "autoplay",
            "interval_ms": 5,
            "horizon": 100000,
            "seed": 4,
        }))
        .await
        .session
        .session_id;
    let started: Frame = api.post(&format!("/sessions/{id}/continue"), json!({})).await.typed();
    assert_eq!(started.t, 0);
    let s: SessionSummary = api.get(&format!("/sessions/{id}")).await.typed();
    assert_eq!(s.status, pomdbg::debugger::Status::Running);
    api.post(&format!("/sessions/{id}/step"), json!({})).await.error(409, "precondition");

    let mut advanced = false;
    for _ in 0..200 {
        tokio::time::sleep(Duration::from_millis(5)).await;
        let f: Frame = api.get(&format!("/sessions/{id}/frame")).await.typed();
        if f.t > 0 {
            advanced = true;
            break;
        }
    }
    assert!(advanced, "autoplay never advanced");

    let r = api.post(&format!("/sessions/{id}/halt"), json!({})).await;
    if r.status == StatusCode::OK {
        let halted: Frame = r.typed();
        assert_eq!(halted.halt_reason, Some(pomdbg::debugger::HaltReason::User));
        tokio::time::sleep(Duration::from_millis(30)).await;
        let later: Frame = api.get(&format!("/sessions/{id}/frame")).await.typed();
        assert_eq!(later.t, halted.t, "halted session kept moving");
    } else {
        // The episode reached a terminal state before the halt arrived.
        r.error(409, "precondition");
        let s: SessionSummary = api.get(&format!("/sessions/{id}")).await.typed();
        assert_eq!(s.status, pomdbg::debugger::Status::Finished);
    }
}

pub async fn concurrent_steps_serialize() {
    let api = Api::new();
    let id = api
        .create(json!({"builtin_policy": {"kind": "never_defend"}, "seed": 1, "horizon": 500}))
        .await
        .session
        .session_id;
    let uri = format!("/sessions/{id}/step");
    let (a, b) = tokio::join!(api.post(&uri, json!({"n": 1})), api.post(&uri, json!({"n": 1})));
    let (a, b): (Frame, Frame) = (a.typed(), b.typed());
    let mut ts = [a.t, b.t];
    ts.sort();
    // Breached could end the episode after one step; otherwise each request
    // saw a distinct cursor.
    assert!(ts == [1, 2] || (ts == [1, 1] && a.halt_reason.is_some()), "{ts:?}");
}

pub async fn trace_ingest_export_round_trip() {
    let api = Api::new();
    let trace = sample_trace(9);
    let meta = api.ingest(&trace).await;
    assert_eq!(meta.trace_id, trace.trace_id());
    assert_eq!(meta.steps, trace.steps.len());

    let exported = api.get(&format!("/traces/{}/export", meta.trace_id)).await;
    assert_eq!(exported.status, StatusCode::OK);
    assert_eq!(exported.content_type.as_deref(), Some("application/x-ndjson"));
    assert_eq!(exported.bytes, trace.to_jsonl().into_bytes());

    let as_json: EpisodeTrace = api.get(&format!("/traces/{}", meta.trace_id)).await.typed();
    assert_eq!(as_json, trace);
    let negotiated = api
        .raw_with(Method::GET, &format!("/traces/{}", meta.trace_id), None, Some("application/x-ndjson"), Vec::new())
        .await;
    assert_eq!(negotiated.bytes, trace.to_jsonl().into_bytes());

    let list: Vec<TraceMeta> = api.get("/traces").await.typed();
    assert_eq!(list.len(), 1);
    let filtered: Vec<TraceMeta> = api.get("/traces?scenario=other").await.typed();
    assert!(filtered.is_empty());

    // Same trace again.
    api.raw(Method::POST, "/traces", Some("application/x-ndjson"), trace.to_jsonl().into_bytes())
        .await
        .error(409, "conflict");

    // JSON form with a fresh id.
    let mut copy = sample_trace(10);
    copy.header.trace_id = "json-copy".into();
    let r = api.post("/traces", serde_json::to_value(&copy).unwrap()).await;
    assert_eq!(r.status, StatusCode::CREATED);

    api.get("/traces/missing").await.error(404, "not_found");
    api.get("/traces/missing/export").await.error(404, "not_found");
}

pub async fn bad_trace_reports_line() {
    let api = Api::new();
    let text = sample_trace(2).to_jsonl();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "{\"t\": 3, \"state\": \"oops\"}";
    let body = lines.join("\n") + "\n";
    let e = api
        .raw(Method::POST, "/traces", Some("application/x-ndjson"), body.into_bytes())
        .await
        .error(422, "ingest");
    assert_eq!(e.detail, Some(json!({"line": 4})));

    api.raw(Method::POST, "/traces", Some("image/png"), vec![1, 2, 3])
        .await
        .error(415, "unsupported_media_type");
}

pub async fn replay_session_matches_records() {
    let api = Api::new();
    let trace = sample_trace(5);
    api.ingest(&trace).await;
    let created = api
        .create(json!({"source": "replay", "trace_id": trace.trace_id()}))
        .await;
    assert_eq!(created.session.source, "replay");
    let id = created.session.session_id;
    let last: Frame = api.post(&format!("/sessions/{id}/continue"), json!({})).await.typed();
    assert_eq!(last.t, trace.steps.len());
    let frames: Vec<Frame> = api.get(&format!("/sessions/{id}/frames?from=1")).await.typed();
    for (f, r) in frames.iter().zip(&trace.steps) {
        assert_eq!(f.defender_action, Some(r.defender_action));
        assert_eq!(f.observation.as_ref(), Some(&r.observation));
        assert_eq!(f.reward, r.reward);
        assert_eq!(Some(&f.belief), r.belief_after.as_ref());
    }

    api.post("/sessions", json!({"source": "replay"})).await.error(422, "validation");
    api.post("/sessions", json!({"source": "replay", "trace_id": "missing"}))
        .await
        .error(404, "not_found");
}

pub async fn replay_against_other_scenario_is_incompatible() {
    let api = Api::new();
    let trace = sample_trace(5);
    api.ingest(&trace).await;
    let config = pomdbg::ScenarioConfig {
        name: "other".into(),
        ..Default::default()
    };
    let r = api.post("/scenarios", json!({"config": config})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    api.post(
        "/sessions",
        json!({"source": "replay", "trace_id": trace.trace_id(), "scenario": "other"}),
    )
    .await
    .error(422, "incompatible");
}

pub async fn policy_registration_and_prediction() {
    let api = Api::new();
    let r = api.post("/policies", json!({"name": "rnd", "builtin": {"kind": "random"}})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let random: CatalogEntry = r.typed();
    assert_eq!(random.kind, "random");

    let body = json!({"belief": [0.2, 0.3, 0.5, 0.0], "last_observation": [1, 2, 3], "t": 5, "horizon": 100});
    let d: ActionDistribution = api.post(&format!("/policies/{}/predict", random.id), body.clone()).await.typed();
    assert_eq!(d.probs, vec![0.5, 0.5]);

    let thr: CatalogEntry = api
        .post("/policies", json!({"name": "thr", "builtin": {"kind": "threshold", "alpha": 0.5}}))
        .await
        .typed();
    let d: ActionDistribution = api
        .post(
            &format!("/policies/{}/predict", thr.id),
            json!({"belief": [0.4, 0.3, 0.3, 0.0], "t": 0, "horizon": 100}),
        )
        .await
        .typed();
    assert_eq!(d.probs, vec![0.0, 1.0]);

    // The stored file is the same bytes a client would upload.
    let m = default_scenario();
    let file: Value = serde_json::from_slice(&pomdbg::policy::save_policy(&Policy::never_defend(&m))).unwrap();
    let r = api.post("/policies", json!({"name": "nd", "policy": file})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let list: Vec<CatalogEntry> = api.get("/policies").await.typed();
    assert_eq!(list.len(), 3);

    let url = format!("/policies/{}/predict", random.id);
    api.post(&url, json!({"belief": [0.2, 0.3, 0.5, 0.1], "t": 0, "horizon": 10}))
        .await
        .error(422, "validation");
    api.post(&url, json!({"belief": [1.0, 0.0], "t": 0, "horizon": 10}))
        .await
        .error(422, "validation");
    api.post(&url, json!({"belief": [1.0, 0.0, 0.0, 0.0], "last_observation": [99, 0, 0], "t": 0, "horizon": 10}))
        .await
        .error(422, "validation");
    api.post(&url, json!({"belief": "x"})).await.error(422, "malformed");
    api.post("/policies/missing/predict", body).await.error(404, "not_found");
    api.post("/policies", json!({"name": "bad", "policy": {"format_version": 99}}))
        .await
        .error(422, "validation");
    api.post("/policies", json!({"name": "rnd", "builtin": {"kind": "random"}}))
        .await
        .error(409, "conflict");
}

pub async fn scenario_catalog() {
    let api = Api::new();
    let list: Vec<CatalogEntry> = api.get("/scenarios").await.typed();
    assert_eq!(list[0].id, "intrusion-default");
    assert!(list[0].builtin);

    let toml = pomdbg::ScenarioConfig {
        name: "noisy".into(),
        client_traffic_scale: 2.0,
        ..Default::default()
    }
    .to_toml();
    let r = api.raw(Method::POST, "/scenarios", Some("application/toml"), toml.into_bytes()).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let entry: CatalogEntry = r.typed();
    let detail: pomdbg_server::ScenarioDetail = api.get(&format!("/scenarios/{}", entry.id)).await.typed();
    assert_eq!(detail.config.client_traffic_scale, 2.0);

    let bad = pomdbg::ScenarioConfig {
        name: "bad".into(),
        intrusion_start_prob: 1.5,
        ..Default::default()
    };
    api.post("/scenarios", json!({"config": bad})).await.error(422, "config");
    api.raw(Method::POST, "/scenarios", Some("application/toml"), b"name = 3".to_vec())
        .await
        .error(422, "config");

    // A simulation can use it by name, with the defender on the default model.
    let s = api
        .create(json!({
            "environment_scenario": "noisy",
            "builtin_policy": {"kind": "threshold", "alpha": 0.5},
        }))
        .await;
    assert_eq!(s.session.scenario, "intrusion-default");
}

pub async fn observation_model_estimation() {
    let api = Api::new();
    let mut ids = Vec::new();
    for seed in 0..5 {
        ids.push(api.ingest(&sample_trace(seed)).await.trace_id);
    }
    let url = "/scenarios/intrusion-default/estimate-observation-model";
    let est: ObservationKernelEstimate = api
        .post(url, json!({"trace_ids": ids, "alpha": 1.0, "conditioning": "state_only"}))
        .await
        .typed();
    assert_eq!(est.kernel.len(), 4);
    for row in est.kernel.iter().flatten().flatten() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    api.post(url, json!({"trace_ids": []})).await.error(422, "empty_input");
    api.post(url, json!({"trace_ids": ["missing"]})).await.error(404, "not_found");
    api.post(url, json!({"trace_ids": ids, "alpha": -1.0})).await.error(422, "config");
    api.post("/scenarios/missing/estimate-observation-model", json!({"trace_ids": ids}))
        .await
        .error(404, "not_found");
}

/// Codes that no well-formed request can provoke (internal failures) are
/// checked through the same conversion the handlers use.
pub async fn every_error_code_has_a_response() {
    use axum::response::IntoResponse;
    use pomdbg::Error;

    let params = pomdbg::PolicyParameters::init(4, &[2], 2, &mut pomdbg::SimRng::new(0));
    let cases = vec![
        (Error::ModelInvalid(Default::default()), 422),
        (Error::Index { what: "state", index: 9, len: 4 }, 422),
        (Error::ImpossibleObservation { unnormalized: vec![0.0] }, 422),
        (Error::TerminalState(3), 409),
        (Error::Incompatible("x".into()), 422),
        (Error::Config("x".into()), 422),
        (Error::Shape("x".into()), 422),
        (Error::Numeric("x".into()), 500),
        (Error::TrainingAborted { iteration: 2, reason: "nan".into(), last_good: Box::new(params) }, 500),
        (Error::NotFound("x".into()), 404),
        (Error::Conflict("x".into()), 409),
        (Error::Ingest { line: 3, message: "x".into() }, 422),
        (Error::EmptyInput("x".into()), 422),
        (Error::Validation("x".into()), 422),
        (Error::Finished, 409),
        (Error::Range("x".into()), 400),
        (Error::Precondition("x".into()), 409),
        (Error::Load("x".into()), 422),
        (Error::Io(std::io::Error::other("x")), 500),
    ];
    for (err, status) in cases {
        let code = err.code();
        let res = pomdbg_server::ApiError::from(err).into_response();
        let reply = Reply {
            status: res.status(),
            content_type: None,
            bytes: res.into_body().collect().await.unwrap().to_bytes().to_vec(),
        };
        reply.error(status, code);
    }
}

pub type Case = (&'static str, fn() -> Pin<Box<dyn Future<Output = ()> + Send>>);

pub const CASES: &[Case] = &[
    ("health_reports_version", || Box::pin(health_reports_version())),
    ("unknown_endpoint_and_session_are_not_found", || Box::pin(unknown_endpoint_and_session_are_not_found())),
    ("unknown_scenario_is_not_found", || Box::pin(unknown_scenario_is_not_found())),
    ("simulation_session_lifecycle", || Box::pin(simulation_session_lifecycle())),
    ("breakpoints_halt_and_are_removable", || Box::pin(breakpoints_halt_and_are_removable())),
    ("command_preconditions", || Box::pin(command_preconditions())),
    ("session_cap_is_enforced", || Box::pin(session_cap_is_enforced())),
    ("autoplay_runs_until_halted", || Box::pin(autoplay_runs_until_halted())),
    ("concurrent_steps_serialize", || Box::pin(concurrent_steps_serialize())),
    ("trace_ingest_export_round_trip", || Box::pin(trace_ingest_export_round_trip())),
    ("bad_trace_reports_line", || Box::pin(bad_trace_reports_line())),
    ("replay_session_matches_records", || Box::pin(replay_session_matches_records())),
    ("replay_against_other_scenario_is_incompatible", || Box::pin(replay_against_other_scenario_is_incompatible())),
    ("policy_registration_and_prediction", || Box::pin(policy_registration_and_prediction())),
    ("scenario_catalog", || Box::pin(scenario_catalog())),
    ("observation_model_estimation", || Box::pin(observation_model_estimation())),
    ("every_error_code_has_a_response", || Box::pin(every_error_code_has_a_response())),
];

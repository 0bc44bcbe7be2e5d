//! Drives a debugging session through the REST API without opening a socket:
//! create, step, set a breakpoint, continue to it, probe, and rewind.
//!
//! ```bash
//! cargo run -p pomdbg-server --example api_walkthrough
//! ```

use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use pomdbg::store::TraceStore;
use pomdbg_server::{router, AppState};

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Value {
    let mut req = Request::builder().method(method.clone()).uri(format!("/api/v1{uri}"));
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    println!("{method} {uri} -> {status}");
    serde_json::from_slice(&bytes).unwrap_or(Value::Null)
}

fn show(frame: &Value) {
    let belief: Vec<String> = frame["belief"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| format!("{:.3}", p.as_f64().unwrap()))
        .collect();
    println!(
        "    t={:<3} belief=[{}] P(defend)={:.3} obs={} halt={}",
        frame["t"],
        belief.join(", "),
        frame["action_distribution"]["probs"][1].as_f64().unwrap_or(f64::NAN),
        frame["observation"],
        frame["halt_reason"],
    );
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::new(TraceStore::open(dir.path()).unwrap(), 8, Duration::from_secs(600));
    let app = router(state, None);

    let created = call(
        &app,
        Method::POST,
        "/sessions",
        Some(json!({"builtin_policy": {"kind": "threshold", "alpha": 0.5}, "seed": 21})),
    )
    .await;
    let id = created["session"]["session_id"].as_str().unwrap().to_string();
    show(&created["frame"]);

    show(&call(&app, Method::POST, &format!("/sessions/{id}/step"), Some(json!({"n": 3}))).await);

    // Halt as soon as the defender believes an intrusion is more likely than not.
    let bp = json!({"type": "belief_threshold", "state": 0, "op": "le", "value": 0.5});
    call(&app, Method::POST, &format!("/sessions/{id}/breakpoints"), Some(bp)).await;
    let hit = call(&app, Method::POST, &format!("/sessions/{id}/continue"), None).await;
    show(&hit);

    for action in ["continue", "defend"] {
        let r = call(&app, Method::POST, &format!("/sessions/{id}/what-if"), Some(json!({"action": action}))).await;
        println!(
            "    what if {action}: expected reward {:.2}, predicted belief {}",
            r["expected_reward"].as_f64().unwrap(),
            r["predicted_belief"]
        );
    }

    show(&call(&app, Method::POST, &format!("/sessions/{id}/reverse"), Some(json!({"n": 2}))).await);
    let summary = call(&app, Method::GET, &format!("/sessions/{id}"), None).await;
    println!("    cursor {} of {} frames", summary["cursor"], summary["history_len"]);
}

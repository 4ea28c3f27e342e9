use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bvr_cli::service::{self, ServiceConfig};
use bvr_core::{MlpModel, ModelSet, PolicyId, SimConfig};
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const SCENARIO: &str = r#"
format_version = 1
seed = 4
ring = "deterministic"

[uav]
altitude_m = 8000
speed_m_s = 330
heading_deg = 0

[[launch]]
range_km = 70
bearing_deg = 200
altitude_m = 10000
speed_m_s = 300
time_s = 2
"#;

/// A missile fired from almost straight ahead at 8 km.
const HEAD_ON: &str = r#"
format_version = 1
ring = "deterministic"

[uav]
altitude_m = 9000
speed_m_s = 330
heading_deg = 0

[[launch]]
range_km = 8
bearing_deg = 0
altitude_m = 9000
speed_m_s = 300
time_s = 0
"#;

fn zero_models() -> Arc<ModelSet> {
    Arc::new(ModelSet::new(PolicyId::ALL.map(MlpModel::zeros)).unwrap())
}

fn app(speed: f64, models: Option<Arc<ModelSet>>) -> Router {
    service::router(service::new_state(ServiceConfig { sim: SimConfig::default(), speed, models }))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder().method(method).uri(uri);
    let request = match body {
        Some(b) => request.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => request.body(Body::empty()),
    }
    .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap()
}

#[tokio::test]
async fn health_answers() {
    let (status, body) = call(&app(0.0, None), "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn ring_without_a_session_is_no_session() {
    let app = app(0.0, Some(zero_models()));
    let (status, body) = call(&app, "GET", "/v1/ring", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(error_code(&body), "no_session");
    for (method, uri) in [("GET", "/v1/session"), ("POST", "/v1/session/start"), ("DELETE", "/v1/session")] {
        let (status, body) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert_eq!(error_code(&body), "no_session");
    }
}

#[tokio::test]
async fn bad_requests_are_rejected_with_codes() {
    let app = app(0.0, Some(zero_models()));
    let (status, body) = call(&app, "POST", "/v1/session", Some(json!({ "scenario": "format_version = 2" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "bad_scenario");

    let (status, body) = call(&app, "POST", "/v1/session", Some(json!({ "wrong": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "bad_request");

    call(&app, "POST", "/v1/session", Some(json!({ "scenario": SCENARIO }))).await;
    let (status, body) = call(&app, "POST", "/v1/session/command", Some(json!({ "kind": "barrel_roll" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "bad_request");
    let (status, body) = call(&app, "POST", "/v1/session/step", Some(json!({ "seconds": -1.0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_code(&body), "bad_request");
}

#[tokio::test]
async fn sessions_need_a_model_set() {
    let app = app(0.0, None);
    let (status, body) = call(&app, "POST", "/v1/session", Some(json!({ "scenario": SCENARIO }))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(error_code(&body), "no_models");
}

#[tokio::test]
async fn heading_command_converges() {
    let app = app(0.0, Some(zero_models()));
    let (status, snap) = call(&app, "POST", "/v1/session", Some(json!({ "scenario": SCENARIO }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["clock_s"], 0.0);
    assert_eq!(snap["running"], false);
    assert_eq!(snap["outcome"], "ongoing");
    assert!(snap["ring"].is_null());

    // Paused sessions do not move.
    let (_, paused) = call(&app, "POST", "/v1/session/step", Some(json!({ "seconds": 5.0 }))).await;
    assert_eq!(paused["clock_s"], 0.0);

    call(&app, "POST", "/v1/session/start", None).await;
    let (status, _) = call(&app, "POST", "/v1/session/command", Some(json!({ "kind": "heading", "heading_deg": 135 }))).await;
    assert_eq!(status, StatusCode::OK);
    let mut headings = Vec::new();
    for _ in 0..30 {
        let (_, snap) = call(&app, "POST", "/v1/session/step", Some(json!({ "seconds": 1.0 }))).await;
        headings.push(snap["uav"]["heading_deg"].as_f64().unwrap());
    }
    let last = *headings.last().unwrap();
    assert!((last - 135.0).abs() < 0.5, "{headings:?}");
    assert!(headings[0] > 0.0 && headings[0] < 135.0);

    let (_, ring) = call(&app, "GET", "/v1/ring", None).await;
    assert_eq!(ring["ring"]["entries"].as_array().unwrap().len(), 8);
    assert_eq!(ring["ring"]["entries"][4]["policy"], "S");
    assert_eq!(ring["ring"]["thresholds"]["orange_below_m"], 2000.0);

    let (status, _) = call(&app, "DELETE", "/v1/session", None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "GET", "/v1/session", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn commands_after_a_hit_are_terminal() {
    let app = app(0.0, Some(zero_models()));
    call(&app, "POST", "/v1/session", Some(json!({ "scenario": HEAD_ON }))).await;
    call(&app, "POST", "/v1/session/start", None).await;
    let mut snap = Value::Null;
    for _ in 0..60 {
        let (status, s) = call(&app, "POST", "/v1/session/step", Some(json!({ "seconds": 1.0 }))).await;
        if status == StatusCode::CONFLICT {
            break;
        }
        snap = s;
        if snap["outcome"] != "ongoing" {
            break;
        }
    }
    assert_eq!(snap["outcome"], "hit");
    assert_eq!(snap["running"], false);
    assert!(snap["miss_distances_m"][0].as_f64().unwrap() < 100.0);
    let (status, body) = call(&app, "POST", "/v1/session/command", Some(json!({ "kind": "safest" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(error_code(&body), "terminal_session");
    let (status, _) = call(&app, "POST", "/v1/session/start", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn stream_clocks_strictly_increase() {
    let app = app(10.0, Some(zero_models()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let server = app.clone();
    tokio::spawn(async move { axum::serve(listener, server).await.unwrap() });

    call(&app, "POST", "/v1/session", Some(json!({ "scenario": SCENARIO }))).await;
    call(&app, "POST", "/v1/session/start", None).await;

    let (mut socket, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/v1/stream")).await.unwrap();
    let mut clocks = Vec::new();
    while clocks.len() < 5 {
        let message = tokio::time::timeout(Duration::from_secs(10), socket.next()).await.unwrap().unwrap().unwrap();
        if let tokio_tungstenite::tungstenite::Message::Text(text) = message {
            let value: Value = serde_json::from_str(&text).unwrap();
            assert!(value["uav"]["heading_deg"].is_number());
            clocks.push(value["clock_s"].as_f64().unwrap());
        }
    }
    assert!(clocks.windows(2).all(|w| w[1] > w[0]), "{clocks:?}");
}

use std::sync::Arc;
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use patentforge::claims::FeatureId;
use patentforge::generation::{
    generate, BackendRegistry, GenerationBackend, GenerationRequest, GenerationStatus, RemoteBackend,
};

async fn echo(headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("");
    let text = format!(
        "echo {} max={} auth={auth}",
        body["input_text"].as_str().unwrap_or(""),
        body["max_output_tokens"]
    );
    (StatusCode::OK, Json(json!({ "output_text": text })))
}

async fn slow() -> Json<Value> {
    tokio::time::sleep(Duration::from_secs(3)).await;
    Json(json!({ "output_text": "too late" }))
}

async fn broken() -> (StatusCode, &'static str) {
    (StatusCode::INTERNAL_SERVER_ERROR, "model crashed")
}

async fn empty() -> Json<Value> {
    Json(json!({ "output_text": "" }))
}

fn stub() -> String {
    let app = Router::new()
        .route("/echo", post(echo))
        .route("/slow", post(slow))
        .route("/broken", post(broken))
        .route("/empty", post(empty));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    format!("http://{}", rx.recv().unwrap())
}

fn run(url: &str, deadline: Duration) -> patentforge::generation::GenerationResult {
    let mut registry = BackendRegistry::new();
    registry.register(Arc::new(RemoteBackend::new("t5", url).unwrap().with_token(Some("k".into()))));
    let request = GenerationRequest {
        feature_id: FeatureId::new(1, 0),
        input_text: "<feature> a memory </feature>".into(),
        max_output_tokens: 64,
        backend_id: "t5".into(),
    };
    generate(&request, &registry, deadline).unwrap()
}

#[test]
fn ok_response_is_passed_through() {
    let base = stub();
    let r = run(&format!("{base}/echo"), Duration::from_secs(5));
    assert_eq!(r.status, GenerationStatus::Ok, "{:?}", r.diagnostic);
    assert_eq!(r.raw_output, "echo <feature> a memory </feature> max=64 auth=Bearer k");
    assert_eq!(r.backend_id, "t5");
}

#[test]
fn slow_backend_times_out() {
    let base = stub();
    let r = run(&format!("{base}/slow"), Duration::from_millis(300));
    assert_eq!(r.status, GenerationStatus::Timeout);
    assert!(r.elapsed_seconds < 2.5, "{}", r.elapsed_seconds);
}

#[test]
fn server_error_and_empty_output_fail() {
    let base = stub();
    let r = run(&format!("{base}/broken"), Duration::from_secs(5));
    assert_eq!(r.status, GenerationStatus::Failed);
    assert!(r.diagnostic.unwrap().contains("model crashed"));
    let r = run(&format!("{base}/empty"), Duration::from_secs(5));
    assert_eq!(r.status, GenerationStatus::Failed);
}

#[test]
fn unreachable_backend_fails() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let r = run(&format!("http://127.0.0.1:{port}/gen"), Duration::from_secs(2));
    assert_eq!(r.status, GenerationStatus::Failed);
    assert!(r.raw_output.is_empty());
}

#[test]
fn id_is_reported() {
    let b = RemoteBackend::new("x", "http://127.0.0.1:1/").unwrap();
    assert_eq!(b.id(), "x");
}

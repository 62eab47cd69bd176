use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use skillscout_cli::api::{router, SCHEMA_VERSION};
use skillscout_core::catalog::generate_synthetic_catalog;
use skillscout_core::dialog::{DialogEnv, PromptCatalog};
use skillscout_core::nlu::Nlu;
use skillscout_core::service::SessionManager;
use tower::ServiceExt;

fn app() -> axum::Router {
    let catalog = Arc::new(generate_synthetic_catalog(2, 150, 5, 15).unwrap());
    let env = DialogEnv::new(catalog, Arc::new(PromptCatalog::default()));
    router(Arc::new(SessionManager::new(env, Nlu::default(), None, None, 3)))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn session_lifecycle() {
    let app = app();
    let (status, opened) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"policy": "baseline-popularity", "profile": {"first_time": false}})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(opened["schema_version"], SCHEMA_VERSION);
    assert_eq!(opened["move"]["action"], "offer-one-skill");
    let id = opened["session_id"].as_str().unwrap().to_string();

    let (status, turn) = call(&app, "POST", &format!("/v1/sessions/{id}/utterances"), Some(json!({"text": "yes"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["done"], true);
    assert_eq!(turn["reward"], 1.0);
    assert_eq!(turn["move"]["action"], "launch-skill");
    assert_eq!(turn["state"]["status"], "launched");

    let (status, summary) = call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["status"], "launched");
    assert_eq!(summary["schema_version"], SCHEMA_VERSION);

    let (status, err) = call(&app, "POST", &format!("/v1/sessions/{id}/utterances"), Some(json!({"text": "hi"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "session_terminal");
    assert!(err["message"].is_string());

    let (status, metrics) = call(&app, "GET", "/v1/metrics", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(metrics["sessions_total"], 1);
    assert_eq!(metrics["success_rate"], 1.0);
    let buckets = metrics["buckets"].as_array().unwrap();
    assert_eq!(buckets.len(), 6);
    let rule = buckets.iter().find(|b| b["policy"] == "rule" && b["first_time"] == true).unwrap();
    assert!(rule["success_rate"].is_null());
}

#[tokio::test]
async fn errors_are_code_and_message() {
    let app = app();
    let (status, err) = call(&app, "POST", "/v1/sessions/nope/utterances", Some(json!({"text": "hi"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "unknown_session");

    let (status, err) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"policy": "rl", "profile": {"first_time": true}})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["code"], "policy_unavailable");

    let (status, err) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"policy": "rule", "profile": {"first_time": true}, "extra": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["code"], "invalid_request");
    assert_eq!(err["schema_version"], SCHEMA_VERSION);

    let (status, err) = call(&app, "GET", "/v1/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["code"], "not_found");
}

#[tokio::test]
async fn free_text_is_understood() {
    let app = app();
    let (_, opened) = call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"policy": "rule", "profile": {"first_time": true}, "utterance": "let's play a game"})),
    )
    .await;
    let id = opened["session_id"].as_str().unwrap();
    let (status, turn) = call(&app, "POST", &format!("/v1/sessions/{id}/utterances"), Some(json!({"text": "flurble glorp"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["understood"]["intent"], "out-of-domain");
    assert_eq!(turn["understood"]["confidence"], "fallback");
    assert_eq!(turn["done"], false);
}

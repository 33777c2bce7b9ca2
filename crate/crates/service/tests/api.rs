//! The HTTP API driven in-process.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use futures::StreamExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use tutorbot_core::Engine;
use tutorbot_service::{router, AppState, Service};

fn app(dir: &std::path::Path, token: Option<&str>) -> Router {
    let service = Arc::new(Service::open(Arc::new(Engine::bundled()), dir).unwrap());
    router(AppState { service, token: token.map(String::from) })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri).header(header::AUTHORIZATION, "Bearer secret");
    let body = match body {
        Some(b) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(b.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router) -> String {
    let (status, v) = call(app, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

async fn say(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": text }))).await
}

#[tokio::test]
async fn certificate_question_gets_the_organisational_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let id = create(&app).await;
    assert_eq!(id, "dlg-000001");
    let (status, v) = say(&app, &id, "Hi, I have a question regarding the certificate issue.").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["act"]["action"], "org_ack");
    assert_eq!(v["turn_index"], 0);
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(view["turns"].as_array().unwrap().len(), 1);
    assert_eq!(view["state"]["intent"], "organizational");
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    assert_eq!(say(&app, "dlg-999999", "hi").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/sessions/nope/events", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn message_after_hand_over_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let id = create(&app).await;
    let (_, v) = say(&app, &id, "human").await;
    assert_eq!(v["act"]["action"], "human_handover");
    assert_eq!(v["closed"], true);
    assert_eq!(say(&app, &id, "hello?").await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn token_is_required_except_for_health() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), Some("secret"));
    let bare = |uri: &str, method: &str| Request::builder().method(method).uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(bare("/sessions", "POST")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let resp = app.clone().oneshot(bare("/health", "GET")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    // `call` sends the right token
    create(&app).await;
    let (_, health) = call(&app, "GET", "/health", None).await;
    assert_eq!(health["sessions"], 1);
}

#[tokio::test]
async fn concurrent_posts_to_one_session_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let id = create(&app).await;
    let (a, b) = tokio::join!(say(&app, &id, "Hi"), say(&app, &id, "math"));
    let mut idx = vec![a.1["turn_index"].as_u64().unwrap(), b.1["turn_index"].as_u64().unwrap()];
    idx.sort();
    assert_eq!(idx, [0, 1]);
    let (_, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let turns: Vec<u64> = view["turns"].as_array().unwrap().iter().map(|t| t["turn_index"].as_u64().unwrap()).collect();
    assert_eq!(turns, [0, 1]);
}

#[tokio::test]
async fn many_sessions_in_parallel_keep_contiguous_turns() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let mut ids = Vec::new();
    for _ in 0..8 {
        ids.push(create(&app).await);
    }
    let mut tasks = Vec::new();
    for id in &ids {
        for text in ["Hi", "math", "Chapter 2"] {
            let (app, id) = (app.clone(), id.clone());
            tasks.push(tokio::spawn(async move { say(&app, &id, text).await.0 }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    for id in &ids {
        let (_, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        let turns: Vec<u64> =
            view["turns"].as_array().unwrap().iter().map(|t| t["turn_index"].as_u64().unwrap()).collect();
        assert_eq!(turns, [0, 1, 2]);
    }
}

#[tokio::test]
async fn acknowledged_turns_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path(), None);
        let id = create(&app).await;
        say(&app, &id, "Hi, I have difficulties in Chapter I, Elementary Calculus, by solving Exercise 1 a").await;
        create(&app).await;
        id
    };
    let app = app(dir.path(), None);
    let (status, view) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(view["turns"][0]["next_action"], "ask_level");
    assert_eq!(view["state"]["last_system_action"], "ask_level");
    let (_, v) = say(&app, &id, "Chapter").await;
    assert_eq!((v["turn_index"].as_u64(), v["act"]["action"].as_str()), (Some(1), Some("final_request")));
    assert_eq!(create(&app).await, "dlg-000003");
}

#[tokio::test]
async fn a_torn_last_line_is_dropped_on_restart() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path(), None);
        let id = create(&app).await;
        say(&app, &id, "Hi").await;
        id
    };
    let log = dir.path().join("sessions").join(format!("{id}.jsonl"));
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"turn_index\":1,\"user_te");
    std::fs::write(&log, text).unwrap();
    let app = app(dir.path(), None);
    let (_, v) = say(&app, &id, "math").await;
    assert_eq!(v["turn_index"], 1);
    let again = Service::open(Arc::new(Engine::bundled()), dir.path()).unwrap();
    assert_eq!(again.get_session(&id).await.unwrap().turns.len(), 2);
}

#[tokio::test]
async fn events_stream_carries_each_act() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let id = create(&app).await;
    let req = Request::builder().uri(format!("/sessions/{id}/events")).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "text/event-stream");
    let mut body = resp.into_body().into_data_stream();
    say(&app, &id, "Hi").await;
    say(&app, &id, "math").await;
    let mut text = String::new();
    while text.matches("event: act").count() < 2 {
        let chunk = tokio::time::timeout(std::time::Duration::from_secs(5), body.next()).await.unwrap().unwrap().unwrap();
        text.push_str(std::str::from_utf8(&chunk).unwrap());
    }
    let acts: Vec<Value> = text
        .lines()
        .filter_map(|l| l.strip_prefix("data: "))
        .map(|d| serde_json::from_str(d).unwrap())
        .collect();
    assert_eq!(acts[0]["act"]["action"], "unknown_intent_menu");
    assert_eq!(acts[1]["act"]["action"], "ask_topic");
    assert_eq!(acts[1]["turn_index"], 1);
}

#[tokio::test]
async fn export_counts_turns_and_filters_by_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let done = create(&app).await;
    let script = [
        "Hi, I have difficulties in Chapter I, Elementary Calculus, by solving Exercise 1 a",
        "Chapter",
        "yep",
        "I do not understand how to solve the exercise...",
    ];
    for m in script {
        say(&app, &done, m).await;
    }
    let open = create(&app).await;
    say(&app, &open, "Hi").await;

    let (status, v) = call(&app, "POST", "/export", Some(json!({}))).await;
    assert_eq!(status, StatusCode::OK);
    let triples = v["files"]["triples.jsonl"].as_str().unwrap();
    assert_eq!(triples.lines().count(), 1 + script.len());
    assert!(!triples.contains(&open));
    assert_eq!(v["files"].as_object().unwrap().len(), 5);

    let (_, v) = call(&app, "POST", "/export", Some(json!({"outcome": "all", "formats": ["triples", "entities"]}))).await;
    let files = v["files"].as_object().unwrap();
    assert_eq!(files.len(), 2);
    assert_eq!(files["triples.jsonl"].as_str().unwrap().lines().count(), 1 + script.len() + 1);

    let (status, _) = call(&app, "POST", "/export", Some(json!({"formats": ["csv"]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn empty_store_exports_header_only_files() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), None);
    let (_, v) = call(&app, "POST", "/export", None).await;
    for (name, content) in v["files"].as_object().unwrap() {
        let lines: Vec<&str> = content.as_str().unwrap().lines().collect();
        assert_eq!(lines.len(), 1, "{name}");
        let header: Value = serde_json::from_str(lines[0]).unwrap();
        assert!(header["schema"].as_str().unwrap().starts_with("tutorbot."));
    }
}

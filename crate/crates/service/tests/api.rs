use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use chatrec::dataset::{split_train_test, Dataset, HoldoutOrder, SplitPolicy};
use chatrec::eval::{run_topk_experiment, EvalContext, ReportStore, TopkConfig};
use chatrec::llm::{Binding, EchoStub, Gateway};
use chatrec::prompt::PromptForge;
use chatrec::recsys::import_external_scores;
use chatrec_service::api::{ErrorBody, Health, IngestResult, MessageReply, ReportIndex, SessionCreated, Transcript};
use chatrec_service::{build_state, router, AppState, ServiceConfig};

fn micro() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/micro")
}

fn config(dir: &std::path::Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: micro(),
        candidates: format!("external:{}", micro().join("candidates.csv").display()),
        provider: "echo".into(),
        reports_dir: dir.join("reports"),
        coldstart_dir: Some(dir.join("cache")),
        ..ServiceConfig::default()
    }
}

struct Server {
    app: Router,
    state: Arc<AppState>,
    dir: tempfile::TempDir,
}

fn server() -> Server {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(build_state(&config(dir.path())).unwrap());
    Server { app: router(state.clone(), &["http://ui.example".to_string()]), state, dir }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn open(app: &Router, user: u32) -> String {
    let (status, body) = call(app, "POST", "/sessions", Some(json!({ "user_id": user }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let created: SessionCreated = serde_json::from_value(body).unwrap();
    created.session_id
}

async fn say(app: &Router, session: &str, text: &str) -> MessageReply {
    let (status, body) = call(app, "POST", &format!("/sessions/{session}/messages"), Some(json!({ "text": text }))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_value(body).unwrap()
}

#[tokio::test]
async fn two_sessions_get_distinct_tokens() {
    let s = server();
    let a = open(&s.app, 1).await;
    let b = open(&s.app, 1).await;
    assert_ne!(a, b);
    assert_eq!(a.len(), 32);
    assert_eq!(s.state.session_count(), 2);
}

#[tokio::test]
async fn unknown_user_is_named_in_the_error() {
    let s = server();
    let (status, body) = call(&s.app, "POST", "/sessions", Some(json!({ "user_id": 99999 }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let err: ErrorBody = serde_json::from_value(body).unwrap();
    assert_eq!(err.error.code, "unknown_user");
    assert!(err.error.message.contains("99999"));
}

#[tokio::test]
async fn malformed_bodies_and_foreign_providers_are_rejected() {
    let s = server();
    let (status, body) = call(&s.app, "POST", "/sessions", Some(json!({ "user": 1 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "bad_request");
    let (status, body) = call(&s.app, "POST", "/sessions", Some(json!({ "user_id": 1, "provider": "http/gpt-4" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "unknown_provider");
    let (status, _) = call(&s.app, "POST", "/sessions", Some(json!({ "user_id": 1, "provider": "echo" }))).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn recommend_then_explain_fargo() {
    let s = server();
    let id = open(&s.app, 2).await;
    let r = say(&s.app, &id, "recommend action movies").await;
    assert_eq!(r.turn, 1);
    let cards = r.reply.recommendations.as_ref().expect("cards");
    assert_eq!(cards.len(), 5);
    assert_eq!(cards[0].title, "Fargo (1996)");
    assert_eq!(cards[0].item_id, Some(9));
    assert_eq!(cards[0].year, Some(1996));
    assert_eq!(cards[0].genres, ["Crime", "Drama", "Thriller"]);
    let (_, raw) = call(&s.app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(raw["turns"][0]["reply"]["kind"], "recommend");

    let e = say(&s.app, &id, "why did you recommend Fargo?").await;
    let v = serde_json::to_value(&e).unwrap();
    assert_eq!(v["kind"], "explain");
    assert_eq!(v["item_id"], 9);
    assert!(e.reply.recommendations.is_none());
    assert!(!e.reply.text.is_empty());
}

#[tokio::test]
async fn transcript_holds_every_turn_verbatim() {
    let s = server();
    let id = open(&s.app, 2).await;
    let mut replies = Vec::new();
    for q in ["recommend some movies", "why did you recommend Fargo?", "recommend something else"] {
        replies.push(say(&s.app, &id, q).await.reply);
    }
    let (status, body) = call(&s.app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let t: Transcript = serde_json::from_value(body).unwrap();
    assert_eq!(t.turns.len(), 3);
    assert_eq!(t.user_id, 2);
    assert_eq!(t.provider, "echo/reference");
    assert_eq!(t.turns.iter().map(|t| t.reply.clone()).collect::<Vec<_>>(), replies);
    assert_eq!(t.turns[2].query, "recommend something else");
    let second: Vec<_> = t.turns[2].reply.recommendations.as_ref().unwrap().iter().map(|c| c.item_id.unwrap()).collect();
    // user 2 rated 12 and 20; the first turn showed 9, 10, 11, 13, 14
    assert_eq!(second, [15, 16, 17, 18, 19]);
}

#[tokio::test]
async fn concurrent_submissions_are_serialized() {
    let s = server();
    let id = open(&s.app, 3).await;
    let uri = format!("/sessions/{id}/messages");
    let (a, b) = tokio::join!(
        call(&s.app, "POST", &uri, Some(json!({ "text": "recommend a movie" }))),
        call(&s.app, "POST", &uri, Some(json!({ "text": "recommend a movie" }))),
    );
    assert_eq!((a.0, b.0), (StatusCode::OK, StatusCode::OK));
    let mut turns = [a.1["turn"].as_u64().unwrap(), b.1["turn"].as_u64().unwrap()];
    turns.sort();
    assert_eq!(turns, [1, 2]);
    let (_, body) = call(&s.app, "GET", &format!("/sessions/{id}"), None).await;
    let t: Transcript = serde_json::from_value(body).unwrap();
    assert_eq!(t.turns.len(), 2);
    let shown: Vec<u32> = t.turns.iter().flat_map(|t| t.reply.recommendations.clone().unwrap()).map(|c| c.item_id.unwrap()).collect();
    // user 3 rated 15 and 16
    assert_eq!(shown, [9, 10, 11, 12, 13, 14, 17, 18, 19, 20]);
}

#[tokio::test]
async fn sessions_do_not_see_each_other() {
    let s = server();
    let a = open(&s.app, 2).await;
    let b = open(&s.app, 2).await;
    say(&s.app, &a, "recommend a movie").await;
    let r = say(&s.app, &b, "recommend a movie").await;
    let ids: Vec<_> = r.reply.recommendations.unwrap().iter().map(|c| c.item_id.unwrap()).collect();
    assert_eq!(ids, [9, 10, 11, 13, 14]);
    let (_, body) = call(&s.app, "GET", &format!("/sessions/{b}"), None).await;
    assert_eq!(body["turns"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn unknown_session_and_empty_text() {
    let s = server();
    let (status, body) = call(&s.app, "POST", "/sessions/nope/messages", Some(json!({ "text": "hi" }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"]["code"], "unknown_session");
    let (status, _) = call(&s.app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let id = open(&s.app, 1).await;
    let (status, body) = call(&s.app, "POST", &format!("/sessions/{id}/messages"), Some(json!({ "text": "  " }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"]["code"], "empty_query");
}

#[tokio::test]
async fn health_is_static() {
    let s = server();
    let (status, body) = call(&s.app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<Health>(body).unwrap(), Health::ok());
}

#[tokio::test]
async fn reports_list_one_entry_after_one_run() {
    let s = server();
    let (_, body) = call(&s.app, "GET", "/reports", None).await;
    assert!(serde_json::from_value::<ReportIndex>(body).unwrap().reports.is_empty());

    let data = Dataset::load(micro()).unwrap();
    let split =
        split_train_test(data.ratings.events(), SplitPolicy::PerUserHoldout { fraction: 0.2, order: HoldoutOrder::MostRecent }, 0).unwrap();
    let source = import_external_scores(micro().join("candidates.csv")).unwrap();
    let binding = Binding::new(Gateway::new(Arc::new(EchoStub)), "reference");
    let forge = PromptForge::new(Arc::new(data.catalog.clone()));
    let ctx = EvalContext { users: &data.users, split: &split, source: &source, binding: &binding, forge: &forge };
    let cfg = TopkConfig { users: (1..=10).collect(), temperature: 0.0, ..TopkConfig::default() };
    let report = run_topk_experiment(ctx, &cfg).unwrap();
    let saved = ReportStore::new(s.dir.path().join("reports")).save(&report).unwrap();

    let (status, body) = call(&s.app, "GET", "/reports", None).await;
    assert_eq!(status, StatusCode::OK);
    let index: ReportIndex = serde_json::from_value(body).unwrap();
    assert_eq!(index.reports.len(), 1);
    assert_eq!(index.reports[0].id, saved);
    let (status, body) = call(&s.app, "GET", &format!("/reports/{saved}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["users_evaluated"], 9);
    let (status, _) = call(&s.app, "GET", "/reports/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn coldstart_ingest_feeds_new_item_questions() {
    let s = server();
    let docs = json!({ "docs": [
        { "doc_id": "n1", "title": "Harbor Lights", "release_year": 2023, "description": "A crime drama about a dock strike.", "source_tag": "press" },
        { "doc_id": "n2", "title": "Night Orbit", "release_year": 2023, "description": "Astronauts stranded near Mars.", "source_tag": "press" },
    ]});
    let (status, body) = call(&s.app, "POST", "/coldstart/docs", Some(docs.clone())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let r: IngestResult = serde_json::from_value(body).unwrap();
    assert_eq!((r.report.added, r.cached), (2, 2));
    assert!(s.dir.path().join("cache").join("manifest.json").exists());
    let (_, body) = call(&s.app, "POST", "/coldstart/docs", Some(docs)).await;
    assert_eq!(body["unchanged"], 2);

    let id = open(&s.app, 1).await;
    let reply = say(&s.app, &id, "recommend a movie from 2023").await.reply;
    assert!(reply.flags.iter().any(|f| f == "coldstart"), "{reply:?}");
    let cards = reply.recommendations.unwrap();
    assert_eq!(cards.len(), 2);
    assert!(cards.iter().all(|c| c.doc_id.is_some() && c.item_id.is_none()));
}

#[tokio::test]
async fn stub_conversations_replay_identically() {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let s = server();
        let id = open(&s.app, 5).await;
        for q in ["recommend some movies", "why did you recommend Fargo?", "tell me about Heat"] {
            say(&s.app, &id, q).await;
        }
        let (_, body) = call(&s.app, "GET", &format!("/sessions/{id}"), None).await;
        runs.push(body["turns"].clone());
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn snapshot_restores_sessions() {
    let s = server();
    let id = open(&s.app, 1).await;
    say(&s.app, &id, "recommend a movie").await;
    let path = s.dir.path().join("sessions.json");
    s.state.save_snapshot(&path).await.unwrap();

    let mut cfg = config(s.dir.path());
    cfg.snapshot = Some(path);
    let state = Arc::new(build_state(&cfg).unwrap());
    let app = router(state, &[]);
    let (status, body) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["turns"].as_array().unwrap().len(), 1);
    let r = say(&app, &id, "recommend another movie").await;
    assert_eq!(r.turn, 2);
}

#[tokio::test]
async fn cors_allows_the_configured_origin() {
    let s = server();
    let req = Request::builder().uri("/health").header("origin", "http://ui.example").body(Body::empty()).unwrap();
    let resp = s.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://ui.example");
    let req = Request::builder().uri("/health").header("origin", "http://elsewhere").body(Body::empty()).unwrap();
    let resp = s.app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().get("access-control-allow-origin").is_none());
}

#[tokio::test]
async fn missing_data_points_at_the_fetch_script() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig { data_dir: dir.path().join("absent"), ..config(dir.path()) };
    let err = build_state(&cfg).err().unwrap().to_string();
    assert!(err.contains("scripts/fetch_ml100k.py"), "{err}");
}

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use expsum::consistency::{EntailmentBackend, RecordedRetriever, Retriever};
use expsum::llm::{CompletionBackend, Gateway, LlmConfig};
use expsum::Error;
use expsum_http::{ChatClient, HttpEntailment, WikipediaRetriever};
use serde_json::{json, Value};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/wiki")
}

fn slug(s: &str) -> String {
    RecordedRetriever::slug(s)
}

#[derive(Clone, Default)]
struct Shared {
    chat_calls: Arc<AtomicUsize>,
    wiki_calls: Arc<AtomicUsize>,
}

async fn wiki(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> (StatusCode, String) {
    s.wiki_calls.fetch_add(1, Ordering::SeqCst);
    let name = match (q.get("list"), q.get("prop")) {
        (Some(_), _) if q["srsearch"] == "outage" => return (StatusCode::SERVICE_UNAVAILABLE, String::new()),
        (Some(_), _) => format!("search_{}.json", slug(&q["srsearch"])),
        (_, Some(_)) => format!("extract_{}.json", slug(&q["titles"])),
        _ => return (StatusCode::BAD_REQUEST, String::new()),
    };
    match std::fs::read_to_string(fixtures().join(name)) {
        Ok(body) => (StatusCode::OK, body),
        Err(_) => (StatusCode::OK, json!({"query": {"search": []}}).to_string()),
    }
}

async fn chat(State(s): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = s.chat_calls.fetch_add(1, Ordering::SeqCst);
    if headers.get("authorization").and_then(|v| v.to_str().ok()) != Some("Bearer test-key") {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
    if prompt.contains("flaky") && n == 0 {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({})));
    }
    let echo = json!({
        "temperature": body["temperature"], "top_p": body["top_p"],
        "frequency_penalty": body["frequency_penalty"], "presence_penalty": body["presence_penalty"],
        "max_tokens": body["max_tokens"], "model": body["model"], "role": body["messages"][0]["role"],
    });
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": echo.to_string()}}]})))
}

async fn nli(Json(body): Json<Value>) -> Json<Value> {
    let n = body["premises"].as_array().map_or(0, Vec::len);
    Json(json!({"probabilities": vec![0.25; n]}))
}

fn serve() -> (String, Shared) {
    let shared = Shared::default();
    let state = shared.clone();
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route("/w/api.php", get(wiki))
                .route("/v1/chat/completions", post(chat))
                .route("/nli", post(nli))
                .with_state(state);
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (format!("http://{}", rx.recv().unwrap()), shared)
}

fn wiki_client(base: &str) -> WikipediaRetriever {
    WikipediaRetriever::new(format!("{base}/w/api.php"), Duration::from_secs(5))
        .unwrap()
        .with_retries(2, Duration::from_millis(1))
}

#[test]
fn wikipedia_search_then_extract() {
    let (base, _) = serve();
    let r = wiki_client(&base);
    let articles = r.retrieve("cerebellum", 3).unwrap();
    let titles: Vec<_> = articles.iter().map(|a| a.title.as_str()).collect();
    assert_eq!(titles, ["Cerebellum", "Purkinje cell"]);
    assert!(articles[0].text.starts_with("The cerebellum is a region of the hindbrain"));
    assert_eq!(r.retrieve("cerebellum", 1).unwrap().len(), 1);
    assert!(r.retrieve("zzqx", 3).unwrap().is_empty());
    assert!(matches!(r.retrieve("  ", 3), Err(Error::InvalidArgument(_))));
}

#[test]
fn wikipedia_failures_are_retrieval_errors() {
    let (base, shared) = serve();
    let r = wiki_client(&base);
    assert!(matches!(r.retrieve("outage", 3), Err(Error::Retrieval(_))));
    assert_eq!(shared.wiki_calls.load(Ordering::SeqCst), 2);
}

#[test]
fn recording_replays_offline() {
    let (base, _) = serve();
    let dir = std::env::temp_dir().join(format!("expsum-wiki-{}", std::process::id()));
    let live = wiki_client(&base).recording(&dir).unwrap().retrieve("cerebellum", 3).unwrap();
    let replay = RecordedRetriever::new(&dir).unwrap().retrieve("cerebellum", 3).unwrap();
    assert_eq!(live, replay);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn chat_client_sends_generation_parameters() {
    let (base, _) = serve();
    let cfg = LlmConfig { endpoint: format!("{base}/v1/chat/completions"), max_new_tokens: 512, ..Default::default() };
    let client = ChatClient::new(&cfg, "test-key".into()).unwrap();
    let gw = Gateway::new(cfg, Arc::new(client)).unwrap();
    let out: Value = serde_json::from_str(&gw.summarize_zero_shot("A document.").unwrap()).unwrap();
    assert_eq!(out["temperature"], 1.0);
    assert_eq!(out["top_p"], 1.0);
    assert_eq!(out["frequency_penalty"], 0.2);
    assert_eq!(out["presence_penalty"], 0.2);
    assert_eq!(out["max_tokens"], 512);
    assert_eq!(out["role"], "user");
}

#[test]
fn chat_client_retries_server_errors_not_auth() {
    let (base, shared) = serve();
    let cfg = LlmConfig {
        endpoint: format!("{base}/v1/chat/completions"),
        initial_backoff_ms: 1,
        ..Default::default()
    };
    let gw = Gateway::new(cfg.clone(), Arc::new(ChatClient::new(&cfg, "test-key".into()).unwrap())).unwrap();
    assert!(gw.summarize_zero_shot("flaky document").is_ok());
    assert_eq!(shared.chat_calls.load(Ordering::SeqCst), 2);

    let bad = ChatClient::new(&cfg, "wrong".into()).unwrap();
    let gw = Gateway::new(cfg, Arc::new(bad)).unwrap();
    assert!(matches!(gw.summarize_zero_shot("doc"), Err(Error::Gateway { attempts: 1, .. })));
}

#[test]
fn chat_client_needs_key_variable() {
    let cfg = LlmConfig { api_key_env: "EXPSUM_TEST_SURELY_UNSET_KEY".into(), ..Default::default() };
    assert!(matches!(ChatClient::from_config(&cfg), Err(Error::InvalidArgument(_))));
}

#[test]
fn connection_refused_is_retryable() {
    let cfg = LlmConfig { endpoint: "http://127.0.0.1:9/".into(), ..Default::default() };
    let client = ChatClient::new(&cfg, "k".into()).unwrap();
    let req = expsum::llm::CompletionRequest {
        id: 0,
        prompt: expsum::prompts::render(expsum::prompts::TemplateId::IrrelevantQuestion, &[]).unwrap(),
        chat: serde_json::from_value(json!({
            "model": "m", "messages": [], "temperature": 1.0, "top_p": 1.0,
            "frequency_penalty": 0.0, "presence_penalty": 0.0, "max_tokens": 1
        }))
        .unwrap(),
    };
    let err = client.complete(&req).unwrap_err();
    assert!(err.is_retryable());
}

#[test]
fn entailment_client() {
    let (base, _) = serve();
    let nli = HttpEntailment::new(format!("{base}/nli"), Duration::from_secs(5)).unwrap();
    let p = nli.score(&["a".into(), "b".into()], "c").unwrap();
    assert_eq!(p, [0.25, 0.25]);
}

//! HTTP backends against a local chat-completions server that fronts the
//! synthetic world.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};

use qrw_core::backend::http::{
    encode_chat_response, HttpChatBackend, HttpEndpoint, HttpRewardBackend,
};
use qrw_core::backend::{
    BackendError, ChatBackend, ChatHandle, GenerationRequest, Message, RetryPolicy, RewardBackend,
};
use qrw_core::criteria::{render_binary_prompt, score_binary_judge, BinaryTarget};
use qrw_core::pipeline::config::{ChatBackendConfig, RewardBackendConfig};
use qrw_core::pipeline::{artifacts, BackendSet};
use qrw_core::{synthetic, Pipeline, PipelineConfig, Stage};

#[derive(Default)]
struct ServerState {
    requests: AtomicUsize,
    fail_first: AtomicUsize,
    fail_status: Mutex<u16>,
    auth: Mutex<Vec<String>>,
}

struct TestServer {
    base_url: String,
    state: Arc<ServerState>,
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = if status == 200 { "OK" } else { "Error" };
    let head = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body.as_bytes());
}

fn handle(mut stream: TcpStream, state: &ServerState) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line
        .split_whitespace()
        .nth(1)
        .unwrap_or("")
        .to_string();
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (name, value) = line.split_once(':').unwrap_or((line, ""));
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().unwrap(),
            "authorization" => state.auth.lock().unwrap().push(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    state.requests.fetch_add(1, Ordering::SeqCst);
    if state
        .fail_first
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok()
    {
        let status = *state.fail_status.lock().unwrap();
        respond(&mut stream, status, "{\"error\":\"injected\"}");
        return;
    }
    let body: Value = serde_json::from_slice(&body).unwrap();
    if path == "/reward" {
        let score = synthetic::coverage_score(body["answer"].as_str().unwrap());
        respond(&mut stream, 200, &json!({ "score": score }).to_string());
        return;
    }
    let messages: Vec<Message> = serde_json::from_value(body["messages"].clone()).unwrap();
    let request = GenerationRequest {
        messages,
        temperature: body["temperature"].as_f64().unwrap(),
        top_p: body["top_p"].as_f64().unwrap(),
        max_tokens: body["max_tokens"].as_u64().unwrap() as u32,
        want_logprobs: body["logprobs"].as_bool().unwrap_or(false),
        seed_hint: body["seed"].as_u64(),
    };
    let reply = synthetic::world_chat().complete(&request).unwrap();
    let wire = encode_chat_response(&reply.text, reply.token_logprobs.as_deref());
    respond(&mut stream, 200, &wire.to_string());
}

fn serve() -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let state = Arc::new(ServerState::default());
    let shared = state.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let s = shared.clone();
            std::thread::spawn(move || handle(stream, &s));
        }
    });
    TestServer { base_url, state }
}

fn endpoint(server: &TestServer, path: &str, key_env: Option<&str>) -> HttpEndpoint {
    HttpEndpoint {
        base_url: server.base_url.clone(),
        path: path.into(),
        model: "world".into(),
        api_key_env: key_env.map(Into::into),
        timeout_secs: 10,
    }
}

#[test]
fn chat_round_trip_with_logprobs_and_bearer_token() {
    let server = serve();
    std::env::set_var("QRW_TEST_KEY", "sekret");
    let backend = HttpChatBackend::new(endpoint(
        &server,
        "/v1/chat/completions",
        Some("QRW_TEST_KEY"),
    ));
    let reply = backend
        .complete(&GenerationRequest::greedy(
            "What are the causes of flu?",
            64,
        ))
        .unwrap();
    assert_eq!(
        reply.text,
        synthetic::answer_for("What are the causes of flu?")
    );
    assert!(reply.token_logprobs.is_none());
    assert_eq!(
        server.state.auth.lock().unwrap().as_slice(),
        ["Bearer sekret"]
    );

    let judge = ChatHandle::new(Arc::new(backend)).with_policy(RetryPolicy::immediate(1));
    let answer = synthetic::answer_for("What are the causes and risks of flu?");
    let p = score_binary_judge("q", &answer, &judge, BinaryTarget::Truthful, false).unwrap();
    assert!(p > 0.0 && p < 1.0, "{p}");
    assert!(render_binary_prompt("q", &answer, BinaryTarget::Truthful).contains("Q: q"));
}

#[test]
fn transient_errors_are_retried_and_client_errors_are_not() {
    let server = serve();
    let backend = Arc::new(HttpChatBackend::new(endpoint(
        &server,
        "/v1/chat/completions",
        None,
    )));
    let handle = ChatHandle::new(backend.clone()).with_policy(RetryPolicy::immediate(3));

    *server.state.fail_status.lock().unwrap() = 503;
    server.state.fail_first.store(2, Ordering::SeqCst);
    assert!(handle.complete(&GenerationRequest::greedy("hi", 8)).is_ok());
    assert_eq!(server.state.requests.load(Ordering::SeqCst), 3);

    server.state.fail_first.store(5, Ordering::SeqCst);
    match handle.complete(&GenerationRequest::greedy("hi", 8)) {
        Err(BackendError::RetriesExhausted { attempts: 3, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }

    *server.state.fail_status.lock().unwrap() = 400;
    server.state.fail_first.store(1, Ordering::SeqCst);
    let before = server.state.requests.load(Ordering::SeqCst);
    match handle.complete(&GenerationRequest::greedy("hi", 8)) {
        Err(BackendError::Status { status: 400, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.state.requests.load(Ordering::SeqCst), before + 1);
}

#[test]
fn reward_endpoint() {
    let server = serve();
    let reward = HttpRewardBackend::new(endpoint(&server, "/reward", None));
    let answer = synthetic::answer_for("What are the symptoms and causes of flu?");
    assert_eq!(reward.score("ctx", &answer).unwrap(), 2.0 / 6.0);
}

fn small(cache: &std::path::Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::synthetic_demo();
    cfg.sampler.k_unique = 8;
    cfg.sampler.max_attempts = 100;
    cfg.cache_dir = Some(cache.to_path_buf());
    cfg
}

#[test]
fn pipeline_over_http_matches_in_process_backends() {
    let server = serve();
    let dir = tempfile::tempdir().unwrap();

    let mut http_cfg = small(&dir.path().join("cache-http"));
    let chat = ChatBackendConfig::Http(endpoint(&server, "/v1/chat/completions", None));
    http_cfg.backends.generator = chat.clone();
    http_cfg.backends.answerer = chat.clone();
    http_cfg.backends.judge = chat;
    http_cfg.backends.reward = Some(RewardBackendConfig::Http(endpoint(
        &server, "/reward", None,
    )));
    let over_http = Pipeline::new(http_cfg, dir.path().join("http")).unwrap();

    let local_cfg = small(&dir.path().join("cache-local"));
    let set = BackendSet::from_config(&local_cfg.backends);
    let local = Pipeline::with_backends(local_cfg, dir.path().join("local"), set).unwrap();

    for p in [&over_http, &local] {
        for stage in [Stage::Rewrite, Stage::Answer, Stage::Score, Stage::Pair] {
            p.run_stage(stage).unwrap();
        }
    }
    for name in [
        artifacts::REWRITES,
        artifacts::PAIRS_TRAIN,
        artifacts::PAIRS_VALIDATION,
    ] {
        let a = std::fs::read(over_http.path(name)).unwrap();
        let b = std::fs::read(local.path(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name}");
    }
    assert!(over_http.backends().calls() > 0);
    assert!(server.state.requests.load(Ordering::SeqCst) as u64 >= over_http.backends().calls());
}

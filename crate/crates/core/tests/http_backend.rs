use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use tomforge_core::chain_model::NodeKind;
use tomforge_core::llm_backend::{
    default_params, generate, Backend, GenerationRequest, HttpBackend, HttpConfig, LlmError,
};

struct Seen {
    body: Value,
    auth: Option<String>,
    path: String,
}

type Responder = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

struct FakeServer {
    url: String,
    seen: Arc<Mutex<Vec<Seen>>>,
    peak: Arc<AtomicUsize>,
}

fn read_request(stream: &mut TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut length = 0;
    let mut auth = None;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        let (name, value) = header.split_once(':')?;
        match name.to_ascii_lowercase().as_str() {
            "content-length" => length = value.trim().parse().ok()?,
            "authorization" => auth = Some(value.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some(Seen {
        body: serde_json::from_slice(&body).ok()?,
        auth,
        path,
    })
}

fn serve(respond: Arc<Responder>, delay: Duration) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let peak = Arc::new(AtomicUsize::new(0));
    let active = Arc::new(AtomicUsize::new(0));
    let counter = Arc::new(AtomicUsize::new(0));
    {
        let seen = seen.clone();
        let peak = peak.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (seen, peak, active, counter, respond) =
                    (seen.clone(), peak.clone(), active.clone(), counter.clone(), respond.clone());
                thread::spawn(move || {
                    let Some(req) = read_request(&mut stream) else { return };
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(delay);
                    let n = counter.fetch_add(1, Ordering::SeqCst);
                    let (status, body) = respond(n, &req.body);
                    seen.lock().unwrap().push(req);
                    active.fetch_sub(1, Ordering::SeqCst);
                    let reply = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = stream.write_all(reply.as_bytes());
                });
            }
        });
    }
    FakeServer { url, seen, peak }
}

fn echo_choices(_: usize, body: &Value) -> (u16, String) {
    let n = body["n"].as_u64().unwrap();
    // Out of order on purpose: the client must sort by index.
    let choices: Vec<Value> = (0..n)
        .rev()
        .map(|i| serde_json::json!({"index": i, "text": format!(" choice {i}\nextra")}))
        .collect();
    (200, serde_json::json!({ "choices": choices }).to_string())
}

fn config(url: &str) -> HttpConfig {
    HttpConfig {
        endpoint_url: url.to_string(),
        max_concurrency: 2,
        retries: 2,
        timeout_ms: 5_000,
        backoff_ms: 1,
    }
}

#[test]
fn sends_openai_compatible_request() {
    let server = serve(Arc::new(echo_choices), Duration::ZERO);
    let backend = HttpBackend::new(config(&server.url), Some("secret".into()));
    let req = GenerationRequest::new("When I", default_params(NodeKind::Clue));
    let result = generate(&backend, &req).unwrap();
    assert_eq!(result.completions, ["choice 0", "choice 1", "choice 2"]);
    assert_eq!(result.backend, "http");

    let seen = server.seen.lock().unwrap();
    let s = &seen[0];
    assert_eq!(s.path, "/v1/completions");
    assert_eq!(s.auth.as_deref(), Some("Bearer secret"));
    for key in [
        "prompt",
        "n",
        "best_of",
        "model",
        "temperature",
        "max_tokens",
        "top_p",
        "frequency_penalty",
        "presence_penalty",
        "stop",
    ] {
        assert!(s.body.get(key).is_some(), "missing {key}");
    }
    assert_eq!(s.body["n"], 3);
    assert_eq!(s.body["best_of"], 3);
    assert_eq!(s.body["max_tokens"], 256);
    assert_eq!(s.body["stop"], serde_json::json!(["\n"]));
}

#[test]
fn rate_limit_exhausts_retries() {
    let server = serve(Arc::new(|_, _: &Value| (429, "{}".to_string())), Duration::ZERO);
    let backend = HttpBackend::new(config(&server.url), None);
    let req = GenerationRequest::new("p", default_params(NodeKind::Situation));
    assert_eq!(
        generate(&backend, &req).unwrap_err(),
        LlmError::RateLimited { attempts: 3 }
    );
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn transient_failures_are_retried() {
    let server = serve(
        Arc::new(|n, body: &Value| if n < 2 { (503, "{}".into()) } else { echo_choices(n, body) }),
        Duration::ZERO,
    );
    let backend = HttpBackend::new(config(&server.url), None);
    let req = GenerationRequest::new("p", default_params(NodeKind::Emotion));
    assert_eq!(generate(&backend, &req).unwrap().completions, ["choice 0"]);
}

#[test]
fn client_errors_are_not_retried() {
    let server = serve(Arc::new(|_, _: &Value| (400, "{\"error\":\"bad\"}".into())), Duration::ZERO);
    let backend = HttpBackend::new(config(&server.url), None);
    let req = GenerationRequest::new("p", default_params(NodeKind::Emotion));
    assert!(matches!(generate(&backend, &req), Err(LlmError::BadResponse(_))));
    assert_eq!(server.seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_bad_response() {
    let server = serve(Arc::new(|_, _: &Value| (200, "not json".into())), Duration::ZERO);
    let backend = HttpBackend::new(config(&server.url), None);
    let req = GenerationRequest::new("p", default_params(NodeKind::Emotion));
    assert!(matches!(generate(&backend, &req), Err(LlmError::BadResponse(_))));
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let backend = HttpBackend::new(config(&url), None);
    let req = GenerationRequest::new("p", default_params(NodeKind::Emotion));
    let err = generate(&backend, &req).unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)), "{err:?}");
    assert!(err.is_retryable());
}

#[test]
fn in_flight_requests_never_exceed_the_limit() {
    let server = serve(Arc::new(echo_choices), Duration::from_millis(30));
    let backend = Arc::new(HttpBackend::new(config(&server.url), None));
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let backend = backend.clone();
            thread::spawn(move || {
                let req = GenerationRequest::new(format!("p{i}"), default_params(NodeKind::Emotion));
                backend.complete(&req).unwrap()
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.seen.lock().unwrap().len(), 8);
    let peak = server.peak.load(Ordering::SeqCst);
    assert!(peak <= 2, "peak concurrency {peak}");
    assert!(peak >= 1);
}

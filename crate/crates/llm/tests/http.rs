//! The HTTP backend against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use spage_llm::backend::{Backend, CompletionRequest, LlmError, Role};
use spage_llm::http::HttpBackend;
use spage_llm::LlmConfig;

struct Seen {
    headers: String,
    body: serde_json::Value,
}

fn read_request(stream: &mut TcpStream) -> Option<Seen> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        if line == "\r\n" {
            break;
        }
        headers.push_str(&line);
    }
    let len: usize = headers
        .lines()
        .find_map(|l| {
            l.to_ascii_lowercase()
                .strip_prefix("content-length:")
                .map(|v| v.trim().parse().unwrap())
        })
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Seen {
        headers,
        body: serde_json::from_slice(&body).ok()?,
    })
}

fn respond(stream: &mut TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
}

const OK_BODY: &str = r#"{"choices": [{"message": {"role": "assistant", "content": "hello"}}]}"#;

fn request(config: &LlmConfig) -> CompletionRequest {
    CompletionRequest::new(Role::Summary, "Say hello.".into(), config).unwrap()
}

#[test]
fn request_body_carries_config_and_auth() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(None));
    let sink = seen.clone();
    let server = thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        *sink.lock().unwrap() = read_request(&mut s);
        respond(&mut s, "200 OK", OK_BODY);
    });
    let config = LlmConfig {
        model_name: "tiny".into(),
        temperature: 0.1,
        top_p: 0.95,
        max_output_tokens: 400,
        ..LlmConfig::default()
    };
    let backend = HttpBackend::new(&url, Some("secret".into()), 4);
    assert_eq!(backend.complete(&request(&config)).unwrap(), "hello");
    server.join().unwrap();
    let seen = seen.lock().unwrap().take().unwrap();
    assert!(seen.headers.starts_with("POST /v1/chat/completions "));
    assert!(seen
        .headers
        .to_ascii_lowercase()
        .contains("authorization: bearer secret"));
    assert_eq!(seen.body["model"], "tiny");
    assert_eq!(seen.body["temperature"], 0.1);
    assert_eq!(seen.body["top_p"], 0.95);
    assert_eq!(seen.body["max_tokens"], 400);
    assert_eq!(seen.body["messages"][0]["content"], "Say hello.");
}

#[test]
fn transport_errors_are_retried_twice() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let server = thread::spawn(move || {
        // Two connections dropped mid-request, then a good answer.
        for i in 0..3 {
            let (mut s, _) = listener.accept().unwrap();
            if i < 2 {
                drop(s);
                continue;
            }
            read_request(&mut s);
            respond(&mut s, "200 OK", OK_BODY);
        }
    });
    let mut backend = HttpBackend::new(&url, None, 1);
    backend.backoff = Duration::from_millis(1);
    assert_eq!(
        backend.complete(&request(&LlmConfig::default())).unwrap(),
        "hello"
    );
    server.join().unwrap();
}

#[test]
fn transport_errors_give_up_after_three_attempts() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let accepted = Arc::new(AtomicUsize::new(0));
    let count = accepted.clone();
    thread::spawn(move || {
        for s in listener.incoming() {
            count.fetch_add(1, Ordering::SeqCst);
            drop(s);
        }
    });
    let mut backend = HttpBackend::new(&url, None, 1);
    backend.backoff = Duration::from_millis(1);
    let err = backend
        .complete(&request(&LlmConfig::default()))
        .unwrap_err();
    assert!(
        matches!(err, LlmError::Backend(ref m) if m.contains("after 3 attempts")),
        "{err}"
    );
    assert_eq!(accepted.load(Ordering::SeqCst), 3);
}

#[test]
fn http_errors_are_not_retried() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let accepted = Arc::new(AtomicUsize::new(0));
    let count = accepted.clone();
    thread::spawn(move || {
        for s in listener.incoming() {
            let mut s = s.unwrap();
            count.fetch_add(1, Ordering::SeqCst);
            read_request(&mut s);
            respond(&mut s, "500 Internal Server Error", r#"{"error": "boom"}"#);
        }
    });
    let mut backend = HttpBackend::new(&url, None, 1);
    backend.backoff = Duration::from_millis(1);
    let err = backend
        .complete(&request(&LlmConfig::default()))
        .unwrap_err();
    assert!(
        matches!(err, LlmError::Backend(ref m) if m.starts_with("HTTP 500")),
        "{err}"
    );
    assert_eq!(accepted.load(Ordering::SeqCst), 1);
}

#[test]
fn in_flight_requests_respect_the_cap() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let current = Arc::new(AtomicUsize::new(0));
    let peak = Arc::new(AtomicUsize::new(0));
    let (cur, pk) = (current.clone(), peak.clone());
    thread::spawn(move || {
        for s in listener.incoming() {
            let mut s = s.unwrap();
            let (cur, pk) = (cur.clone(), pk.clone());
            thread::spawn(move || {
                let now = cur.fetch_add(1, Ordering::SeqCst) + 1;
                pk.fetch_max(now, Ordering::SeqCst);
                read_request(&mut s);
                thread::sleep(Duration::from_millis(40));
                cur.fetch_sub(1, Ordering::SeqCst);
                respond(&mut s, "200 OK", OK_BODY);
            });
        }
    });
    let backend = Arc::new(HttpBackend::new(&url, None, 2));
    let workers: Vec<_> = (0..6)
        .map(|_| {
            let b = backend.clone();
            thread::spawn(move || b.complete(&request(&LlmConfig::default())).unwrap())
        })
        .collect();
    for w in workers {
        assert_eq!(w.join().unwrap(), "hello");
    }
    assert!(
        peak.load(Ordering::SeqCst) <= 2,
        "peak {}",
        peak.load(Ordering::SeqCst)
    );
}

/// Opt-in check against a real endpoint: set SPAGE_LLM_BASE_URL (and usually
/// SPAGE_LLM_API_KEY and SPAGE_LLM_MODEL) and run with `--ignored`.
#[test]
#[ignore]
fn live_backend_smoke() {
    let backend = HttpBackend::from_env(1).expect("SPAGE_LLM_BASE_URL must be set");
    let config = LlmConfig::default().with_env_model();
    let reply = backend.complete(&request(&config)).unwrap();
    assert!(!reply.trim().is_empty());
}

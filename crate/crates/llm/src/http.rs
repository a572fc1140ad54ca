//! Chat-completions over HTTP with bearer auth.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::json;

use crate::backend::{Backend, CompletionRequest, LlmError};
use crate::config::{ENV_API_KEY, ENV_BASE_URL};

/// Counting gate bounding requests in flight.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Gate {
            free: Mutex::new(slots.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    gate: Gate,
    pub retries: u32,
    pub backoff: Duration,
}

impl HttpBackend {
    /// `base_url` is the API root; requests go to `<base_url>/chat/completions`.
    pub fn new(base_url: &str, api_key: Option<String>, max_concurrent: usize) -> Self {
        HttpBackend {
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            gate: Gate::new(max_concurrent),
            retries: 2,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads `SPAGE_LLM_BASE_URL` (required) and `SPAGE_LLM_API_KEY`.
    pub fn from_env(max_concurrent: usize) -> Result<Self, LlmError> {
        let base = std::env::var(ENV_BASE_URL)
            .map_err(|_| LlmError::Backend(format!("{ENV_BASE_URL} is not set")))?;
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend::new(&base, key, max_concurrent))
    }

    pub fn request_body(request: &CompletionRequest) -> serde_json::Value {
        let mut body = json!({
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(schema) = &request.json_schema {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {"name": "plan", "schema": schema},
            });
        }
        body
    }

    fn send(&self, body: &serde_json::Value) -> Result<serde_json::Value, Attempt> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| Attempt::Fail(LlmError::Backend(format!("unreadable response: {e}")))),
            Err(ureq::Error::Transport(t)) => Err(Attempt::Retry(t.to_string())),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(Attempt::Fail(LlmError::Backend(format!(
                    "HTTP {code}: {text}"
                ))))
            }
        }
    }
}

enum Attempt {
    Retry(String),
    Fail(LlmError),
}

impl Backend for HttpBackend {
    /// Transport failures are retried with exponential backoff; HTTP error
    /// statuses and malformed replies are not.
    fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let body = HttpBackend::request_body(request);
        let _slot = self.gate.acquire();
        let mut attempt = 0;
        let reply = loop {
            match self.send(&body) {
                Ok(v) => break v,
                Err(Attempt::Retry(_)) if attempt < self.retries => {
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(Attempt::Retry(msg)) => {
                    return Err(LlmError::Backend(format!(
                        "transport error after {} attempts: {msg}",
                        attempt + 1
                    )))
                }
                Err(Attempt::Fail(e)) => return Err(e),
            }
        };
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Backend(format!("unexpected response shape: {reply}")))
    }
}

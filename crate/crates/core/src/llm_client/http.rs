use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ClientError, RetryPolicy, SamplingParams};

/// Client for `{base_url}/v1/chat/completions`.
///
/// Shareable across threads. `max_in_flight` bounds concurrent requests.
pub struct HttpChatClient {
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry: RetryPolicy,
    send_top_k: AtomicBool,
    gate: Gate,
    retries_used: AtomicU64,
}

struct Gate {
    cap: usize,
    used: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retryable(ClientError),
    Fatal(ClientError),
    TopKRejected,
}

impl HttpChatClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            agent,
            retry: RetryPolicy::default(),
            send_top_k: AtomicBool::new(true),
            gate: Gate { cap: 8, used: Mutex::new(0), cv: Condvar::new() },
            retries_used: AtomicU64::new(0),
        }
    }

    /// Reads the API key from the named environment variable, if set.
    pub fn with_api_key_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.gate.cap = cap.max(1);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Whether top_k is still being sent (false once the endpoint rejected it).
    pub fn top_k_enabled(&self) -> bool {
        self.send_top_k.load(Ordering::Relaxed)
    }

    pub fn retries_used(&self) -> u64 {
        self.retries_used.load(Ordering::Relaxed)
    }

    fn body(&self, model: &str, system: &str, user: &str, p: &SamplingParams) -> Value {
        let mut messages = Vec::new();
        if !system.is_empty() {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": user}));
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": p.temperature,
            "top_p": p.top_p,
            "max_tokens": p.max_tokens,
        });
        if let (Some(k), true) = (p.top_k, self.top_k_enabled()) {
            body["top_k"] = json!(k);
        }
        if let Some(s) = p.request_seed {
            body["seed"] = json!(s);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let mut req = self.agent.post(&url).set("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {k}"));
        }
        let _permit = self.gate.acquire();
        match req.send_json(body) {
            Ok(resp) => match resp.into_json::<Value>() {
                Ok(v) => match extract_content(&v) {
                    Ok(s) => Attempt::Done(s),
                    Err(e) => Attempt::Fatal(e),
                },
                Err(e) => Attempt::Fatal(ClientError::InvalidResponse(e.to_string())),
            },
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                if (status == 400 || status == 422) && body.get("top_k").is_some() && text.contains("top_k") {
                    return Attempt::TopKRejected;
                }
                let err = ClientError::Http { status, body: truncate(&text, 500) };
                if status == 429 || status >= 500 {
                    Attempt::Retryable(err)
                } else {
                    Attempt::Fatal(err)
                }
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retryable(ClientError::Network(t.to_string())),
        }
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

fn extract_content(v: &Value) -> Result<String, ClientError> {
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| ClientError::InvalidResponse("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) if s.trim().is_empty() => Err(ClientError::EmptyCompletion),
        Value::String(s) => Ok(s.clone()),
        Value::Null => Err(ClientError::EmptyCompletion),
        other => Err(ClientError::InvalidResponse(format!("content is not a string: {other}"))),
    }
}

impl ChatBackend for HttpChatClient {
    fn chat(&self, model: &str, system: &str, user: &str, params: &SamplingParams) -> Result<String, ClientError> {
        let mut rng = rand::thread_rng();
        let mut body = self.body(model, system, user, params);
        let mut retry = 0;
        loop {
            let err = match self.attempt(&body) {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fatal(e) => return Err(e),
                Attempt::TopKRejected => {
                    log::warn!("endpoint {} rejected top_k; continuing without it", self.base_url);
                    self.send_top_k.store(false, Ordering::Relaxed);
                    body = self.body(model, system, user, params);
                    continue;
                }
                Attempt::Retryable(e) => e,
            };
            if retry >= self.retry.max_retries {
                return Err(match err {
                    ClientError::Http { status: 429, .. } => ClientError::RateLimited { retries: retry },
                    e => e,
                });
            }
            let wait = self.retry.delay(retry, &mut rng);
            log::debug!("transient failure ({err}); retry {} in {:?}", retry + 1, wait);
            self.retries_used.fetch_add(1, Ordering::Relaxed);
            std::thread::sleep(wait);
            retry += 1;
        }
    }
}

//! Remote chat-completion backend.
//!
//! One POST per classification, carrying the model id, the request
//! temperature, and the rendered prompt as a single user message. Transient
//! failures (HTTP 429/5xx and transport errors) are retried with capped
//! exponential backoff plus jitter; other 4xx statuses are fatal. A
//! semaphore bounds in-flight requests and a sliding-window limiter holds
//! the client under a requests-per-minute cap.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use super::{parse_label, BackendError, Classifier, ClassifierRequest, ClassifierResponse, ResponseSource};

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Full chat-completions URL, e.g. `https://host/v1/chat/completions`.
    pub endpoint: String,
    /// Name of the environment variable holding the API credential.
    pub credential_env: String,
    /// Maximum attempts per request (first try included).
    pub max_attempts: u32,
    /// Base backoff; attempt `k` waits ~`base * 2^k` plus jitter.
    pub initial_backoff: Duration,
    /// Concurrent in-flight request cap.
    pub in_flight: usize,
    /// Requests-per-minute cap; 0 disables the limiter.
    pub requests_per_minute: u32,
    /// Per-request timeout.
    pub timeout: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            credential_env: "TRENDVOTE_API_KEY".into(),
            max_attempts: 5,
            initial_backoff: Duration::from_millis(250),
            in_flight: 4,
            requests_per_minute: 60,
            timeout: Duration::from_secs(60),
        }
    }
}

/// Request/retry counters, observable after a run.
#[derive(Debug, Default)]
pub struct RemoteStats {
    requests: AtomicU64,
    retries: AtomicU64,
}

impl RemoteStats {
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Sliding-window requests-per-minute limiter.
struct RateLimiter {
    cap: u32,
    window: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    fn new(cap: u32) -> Self {
        RateLimiter {
            cap,
            window: Mutex::new(VecDeque::new()),
        }
    }

    fn wait(&self) {
        if self.cap == 0 {
            return;
        }
        loop {
            let sleep_for = {
                let mut window = self.window.lock().unwrap();
                let now = Instant::now();
                while window
                    .front()
                    .is_some_and(|t| now.duration_since(*t) >= Duration::from_secs(60))
                {
                    window.pop_front();
                }
                if (window.len() as u32) < self.cap {
                    window.push_back(now);
                    return;
                }
                Duration::from_secs(60) - now.duration_since(*window.front().unwrap())
            };
            std::thread::sleep(sleep_for.min(Duration::from_millis(200)));
        }
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    credential: String,
    client: reqwest::blocking::Client,
    gate: Semaphore,
    limiter: RateLimiter,
    stats: RemoteStats,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
}

impl RemoteBackend {
    /// Build the client. Fails before any network call when the credential
    /// env var is unset or the endpoint is empty.
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        if cfg.endpoint.is_empty() {
            return Err(BackendError::BadRequest("remote endpoint is empty".into()));
        }
        let credential = std::env::var(&cfg.credential_env)
            .map_err(|_| BackendError::MissingCredential(cfg.credential_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                attempts: 0,
                reason: e.to_string(),
            })?;
        Ok(RemoteBackend {
            gate: Semaphore::new(cfg.in_flight),
            limiter: RateLimiter::new(cfg.requests_per_minute),
            credential,
            client,
            stats: RemoteStats::default(),
            cfg,
        })
    }

    pub fn stats(&self) -> &RemoteStats {
        &self.stats
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.cfg.initial_backoff.as_millis() as u64;
        let exp = base.saturating_mul(1u64 << attempt.min(10));
        let jitter = rand::thread_rng().gen_range(0..=exp / 2 + 1);
        Duration::from_millis(exp + jitter)
    }

    fn post_once(&self, request: &ClassifierRequest) -> Result<String, TryError> {
        let body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [{"role": "user", "content": request.prompt}],
        });
        self.stats.requests.fetch_add(1, Ordering::Relaxed);
        let resp = self
            .client
            .post(&self.cfg.endpoint)
            .bearer_auth(&self.credential)
            .json(&body)
            .send()
            .map_err(|e| TryError::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| TryError::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TryError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TryError::Fatal(BackendError::Http {
                status: status.as_u16(),
                body: text,
            }));
        }
        let completion: ChatCompletion = serde_json::from_str(&text)
            .map_err(|e| TryError::Fatal(BackendError::BadRequest(format!("malformed completion: {e}"))))?;
        completion
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TryError::Fatal(BackendError::BadRequest("completion has no choices".into())))
    }

    fn post_with_retry(&self, request: &ClassifierRequest) -> Result<String, BackendError> {
        let _slot = self.gate.acquire();
        let mut last = String::new();
        for attempt in 0..self.cfg.max_attempts {
            self.limiter.wait();
            match self.post_once(request) {
                Ok(content) => return Ok(content),
                Err(TryError::Fatal(e)) => return Err(e),
                Err(TryError::Transient(reason)) => {
                    last = reason;
                    if attempt + 1 < self.cfg.max_attempts {
                        self.stats.retries.fetch_add(1, Ordering::Relaxed);
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError::Transport {
            attempts: self.cfg.max_attempts,
            reason: last,
        })
    }
}

enum TryError {
    Transient(String),
    Fatal(BackendError),
}

impl Classifier for RemoteBackend {
    fn classify(&self, request: &ClassifierRequest) -> Result<ClassifierResponse, BackendError> {
        let raw = self.post_with_retry(request)?;
        let label = parse_label(&raw, request.label_set)?;
        Ok(ClassifierResponse {
            raw,
            label,
            source: ResponseSource::Remote,
        })
    }

    fn summarize(&self, article: &str, n_tokens: usize) -> Result<String, BackendError> {
        let prompt = format!(
            "Summarize the following news article in at most {n_tokens} words. Reply with the summary only.\n\n{article}"
        );
        let request = ClassifierRequest::new("summarize", 0.0, prompt, crate::prompting::LabelSet::TwoClass)?;
        self.post_with_retry(&request)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::{ItemLabel, LabelSet};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Minimal HTTP server: answers each connection with the next scripted
    /// (status, body) pair and records request bodies.
    fn spawn_server(
        responses: Vec<(u16, String)>,
    ) -> (String, std::sync::mpsc::Receiver<String>, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        content_length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; content_length];
                reader.read_exact(&mut buf).unwrap();
                tx.send(String::from_utf8(buf).unwrap()).unwrap();
                let mut stream = reader.into_inner();
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), rx, handle)
    }

    fn completion_body(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string()
    }

    fn cfg(endpoint: String, env: &str) -> RemoteConfig {
        RemoteConfig {
            endpoint,
            credential_env: env.into(),
            max_attempts: 5,
            initial_backoff: Duration::from_millis(1),
            in_flight: 2,
            requests_per_minute: 0,
            timeout: Duration::from_secs(5),
        }
    }

    #[test]
    fn missing_credential_fails_before_any_call() {
        let err = RemoteBackend::new(cfg("http://127.0.0.1:1/unreachable".into(), "TRENDVOTE_TEST_UNSET_VAR"))
            .err()
            .unwrap();
        assert!(matches!(err, BackendError::MissingCredential(v) if v == "TRENDVOTE_TEST_UNSET_VAR"));
    }

    #[test]
    fn temperature_zero_is_transmitted_and_label_parsed() {
        let (endpoint, rx, handle) = spawn_server(vec![(200, completion_body("Label: Down"))]);
        std::env::set_var("TRENDVOTE_TEST_KEY_A", "k");
        let backend = RemoteBackend::new(cfg(endpoint, "TRENDVOTE_TEST_KEY_A")).unwrap();
        let request = ClassifierRequest::new("test-model", 0.0, "Title: q\nLabel:", LabelSet::ThreeClass).unwrap();
        let resp = backend.classify(&request).unwrap();
        assert_eq!(resp.label, ItemLabel::Down);
        assert_eq!(resp.source, ResponseSource::Remote);
        let body: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(body["temperature"], serde_json::json!(0.0));
        assert_eq!(body["model"], serde_json::json!("test-model"));
        assert_eq!(body["messages"][0]["role"], serde_json::json!("user"));
        handle.join().unwrap();
    }

    #[test]
    fn transient_5xx_then_success_retries_once() {
        let (endpoint, _rx, handle) = spawn_server(vec![
            (500, "oops".into()),
            (200, completion_body("Up")),
        ]);
        std::env::set_var("TRENDVOTE_TEST_KEY_B", "k");
        let backend = RemoteBackend::new(cfg(endpoint, "TRENDVOTE_TEST_KEY_B")).unwrap();
        let request = ClassifierRequest::new("m", 0.0, "Title: q\nLabel:", LabelSet::TwoClass).unwrap();
        let resp = backend.classify(&request).unwrap();
        assert_eq!(resp.label, ItemLabel::Up);
        assert_eq!(backend.stats().retries(), 1);
        assert_eq!(backend.stats().requests(), 2);
        handle.join().unwrap();
    }

    #[test]
    fn auth_4xx_is_fatal_without_retry() {
        let (endpoint, _rx, handle) = spawn_server(vec![(401, "denied".into())]);
        std::env::set_var("TRENDVOTE_TEST_KEY_C", "k");
        let backend = RemoteBackend::new(cfg(endpoint, "TRENDVOTE_TEST_KEY_C")).unwrap();
        let request = ClassifierRequest::new("m", 0.0, "Title: q\nLabel:", LabelSet::TwoClass).unwrap();
        match backend.classify(&request) {
            Err(BackendError::Http { status: 401, .. }) => {}
            other => panic!("expected fatal 401, got {other:?}"),
        }
        assert_eq!(backend.stats().requests(), 1);
        handle.join().unwrap();
    }
}

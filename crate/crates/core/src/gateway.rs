//! Minimal client for an OpenAI-compatible chat-completion endpoint.
//!
//! Three modes:
//! - `Off` (live): POST to the configured endpoint.
//! - `Record`: live, plus every successful response is persisted to a fixture
//!   directory keyed by a content hash of the request.
//! - `Replay`: served exclusively from fixtures; a miss is an error, so tests
//!   are closed-world and bit-deterministic.
//!
//! Concurrency is bounded by an internal semaphore (`max_in_flight`), and
//! transient failures are retried with exponential backoff.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub system_text: String,
    pub user_text: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

/// A successful completion.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s)")]
    HttpStatus { status: u16, attempts: u32 },
    #[error("no fixture recorded for request {key}")]
    MissingFixture { key: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway not configured: {0}")]
    NotConfigured(String),
}

impl GatewayError {
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout { .. }
                | GatewayError::HttpStatus { .. }
                | GatewayError::Transport { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureMode {
    /// Live calls only.
    Off,
    /// Live calls; successful responses are persisted as fixtures.
    Record,
    /// Fixtures only; never touches the network.
    Replay,
}

impl std::str::FromStr for FixtureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(FixtureMode::Off),
            "record" => Ok(FixtureMode::Record),
            "replay" => Ok(FixtureMode::Replay),
            other => Err(format!("unknown fixture mode '{other}' (off|record|replay)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Full chat-completion URL, e.g. `http://localhost:8000/v1/chat/completions`.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub mode: FixtureMode,
    pub fixtures_dir: Option<PathBuf>,
    /// At most this many requests in flight at once.
    pub max_in_flight: usize,
    /// Retries after the initial attempt, for transient failures.
    pub retries: u32,
    pub backoff_initial: Duration,
    pub request_timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            mode: FixtureMode::Replay,
            fixtures_dir: None,
            max_in_flight: 8,
            retries: 3,
            backoff_initial: Duration::from_millis(500),
            request_timeout: Duration::from_secs(60),
        }
    }
}

impl GatewayConfig {
    /// Reads `LLM_ENDPOINT` and `LLM_API_KEY` from the environment; the model
    /// name (`LLM_MODEL`) belongs to the per-request configuration.
    pub fn from_env(mode: FixtureMode, fixtures_dir: Option<PathBuf>) -> Self {
        Self {
            endpoint: std::env::var("LLM_ENDPOINT").ok(),
            api_key: std::env::var("LLM_API_KEY").ok(),
            mode,
            fixtures_dir,
            ..Self::default()
        }
    }
}

/// Content hash identifying a request in the fixture store. Covers model,
/// system text, user text, and temperature; changing any of them misses.
pub fn request_fingerprint(req: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    for field in [&req.model, &req.system_text, &req.user_text] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hasher.update(req.temperature.to_bits().to_le_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a String cannot fail");
    }
    out
}

/// On-disk fixture: the request (for human inspection) plus the response.
#[derive(Debug, Serialize, Deserialize)]
struct FixtureRecord {
    model: String,
    system_text: String,
    user_text: String,
    max_tokens: u32,
    temperature: f64,
    response_text: String,
}

/// Writes a fixture for `request` into `dir`, exactly as record mode would.
/// Useful for seeding replay stores in tests and tooling.
pub fn store_fixture(
    dir: &std::path::Path,
    request: &CompletionRequest,
    response_text: &str,
) -> std::io::Result<()> {
    FixtureStore::new(dir.to_path_buf()).save(&request_fingerprint(request), request, response_text)
}

struct FixtureStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl FixtureStore {
    fn new(dir: PathBuf) -> Self {
        Self { dir, write_lock: Mutex::new(()) }
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn load(&self, key: &str) -> Option<String> {
        let text = std::fs::read_to_string(self.path_for(key)).ok()?;
        let record: FixtureRecord = serde_json::from_str(&text).ok()?;
        Some(record.response_text)
    }

    fn save(&self, key: &str, req: &CompletionRequest, response_text: &str) -> std::io::Result<()> {
        let _guard = self.write_lock.lock().expect("fixture write lock poisoned");
        std::fs::create_dir_all(&self.dir)?;
        let record = FixtureRecord {
            model: req.model.clone(),
            system_text: req.system_text.clone(),
            user_text: req.user_text.clone(),
            max_tokens: req.max_tokens,
            temperature: req.temperature,
            response_text: response_text.to_string(),
        };
        let mut text = serde_json::to_string_pretty(&record).expect("fixture serialization is total");
        text.push('\n');
        std::fs::write(self.path_for(key), text)
    }
}

/// Counting semaphore; `std` has none, and this is all we need.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits), available: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("semaphore lock poisoned");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock poisoned");
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: String,
}

pub struct LlmGateway {
    cfg: GatewayConfig,
    http: reqwest::blocking::Client,
    permits: Semaphore,
    store: Option<FixtureStore>,
}

impl LlmGateway {
    pub fn new(cfg: GatewayConfig) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.request_timeout)
            .build()
            .expect("default TLS backend is available");
        let permits = Semaphore::new(cfg.max_in_flight.max(1));
        let store = cfg.fixtures_dir.clone().map(FixtureStore::new);
        Self { cfg, http, permits, store }
    }

    pub fn mode(&self) -> FixtureMode {
        self.cfg.mode
    }

    /// Completes one request according to the configured mode. Transient
    /// failures (timeout, HTTP error, transport) are retried up to
    /// `cfg.retries` times with exponential backoff; fixture misses are not.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if request.user_text.is_empty() {
            return Err(GatewayError::InvalidRequest("user_text must be non-empty".into()));
        }
        if request.max_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_tokens must be >= 1".into()));
        }

        let key = request_fingerprint(request);
        if self.cfg.mode == FixtureMode::Replay {
            let store = self.store.as_ref().ok_or_else(|| {
                GatewayError::NotConfigured("replay mode requires a fixtures directory".into())
            })?;
            return match store.load(&key) {
                Some(text) => Ok(CompletionResult { text, latency_ms: 0, attempt_count: 1 }),
                None => Err(GatewayError::MissingFixture { key }),
            };
        }

        let _permit = self.permits.acquire();
        let started = Instant::now();
        let max_attempts = self.cfg.retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(request) {
                Ok(text) => {
                    if self.cfg.mode == FixtureMode::Record {
                        if let Some(store) = &self.store {
                            store.save(&key, request, &text).map_err(|e| {
                                GatewayError::Transport {
                                    message: format!("failed to persist fixture: {e}"),
                                    attempts: attempt,
                                }
                            })?;
                        }
                    }
                    return Ok(CompletionResult {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                    });
                }
                Err(err) if err.is_retryable() && attempt < max_attempts => {
                    let backoff = self.cfg.backoff_initial * 2u32.pow(attempt - 1);
                    std::thread::sleep(backoff);
                }
                Err(err) => return Err(with_attempts(err, attempt)),
            }
        }
    }

    fn post_once(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let endpoint = self.cfg.endpoint.as_deref().ok_or_else(|| {
            GatewayError::NotConfigured("set LLM_ENDPOINT or use replay fixtures".into())
        })?;
        let mut messages = Vec::with_capacity(2);
        if !request.system_text.is_empty() {
            messages.push(WireMessage { role: "system", content: &request.system_text });
        }
        messages.push(WireMessage { role: "user", content: &request.user_text });
        let body = WireRequest {
            model: &request.model,
            messages,
            max_tokens: request.max_tokens,
            temperature: request.temperature,
        };
        let mut builder = self.http.post(endpoint).json(&body);
        if let Some(key) = &self.cfg.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout { attempts: 0 }
            } else {
                GatewayError::Transport { message: e.to_string(), attempts: 0 }
            }
        })?;
        let status = response.status();
        if !status.is_success() {
            return Err(GatewayError::HttpStatus { status: status.as_u16(), attempts: 0 });
        }
        let wire: WireResponse = response.json().map_err(|e| GatewayError::Transport {
            message: format!("malformed completion body: {e}"),
            attempts: 0,
        })?;
        wire.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| GatewayError::Transport {
                message: "completion body has no choices".into(),
                attempts: 0,
            })
    }

    /// Completes many requests with at most `max_in_flight` concurrently.
    /// Output order matches input order; one failing element never aborts
    /// the rest.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<CompletionResult, GatewayError>> {
        let n = requests.len();
        if n == 0 {
            return Vec::new();
        }
        let results: Mutex<Vec<Option<Result<CompletionResult, GatewayError>>>> =
            Mutex::new((0..n).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.cfg.max_in_flight.clamp(1, n);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let outcome = self.complete(&requests[i]);
                    results.lock().expect("batch results lock poisoned")[i] = Some(outcome);
                });
            }
        });
        results
            .into_inner()
            .expect("batch results lock poisoned")
            .into_iter()
            .map(|slot| slot.expect("every index is filled by a worker"))
            .collect()
    }
}

fn with_attempts(err: GatewayError, attempts: u32) -> GatewayError {
    match err {
        GatewayError::Timeout { .. } => GatewayError::Timeout { attempts },
        GatewayError::HttpStatus { status, .. } => GatewayError::HttpStatus { status, attempts },
        GatewayError::Transport { message, .. } => GatewayError::Transport { message, attempts },
        other => other,
    }
}

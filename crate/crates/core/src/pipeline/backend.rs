use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{asset, ChatMessage, Role, BASELINE, BASELINE_COT, T3D_INTEGRATE, T3M, T3_CODE, T3_EXTRACT, T3_TABLE};
use crate::synth::oracle_extract;
use crate::table_io::to_csv;
use crate::tuples::{integrate, parse_count_tuples, parse_tuples, render_count_tuples, render_tuples};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl LlmRequest {
    /// Hex sha256 over the canonical JSON of the request.
    pub fn cache_key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn last_user(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Usage,
    /// As reported by the backend; zero for local backends.
    #[serde(default)]
    pub latency_ms: u64,
}

impl LlmResponse {
    pub fn text(text: impl Into<String>) -> Self {
        LlmResponse {
            text: text.into(),
            usage: Usage::default(),
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
    #[error("cache miss for {0}")]
    CacheMiss(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited { .. } | BackendError::Transient(_))
    }
}

/// A chat-completions endpoint. Implementations must be shareable across
/// worker threads.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        (**self).complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    /// Each delay is scaled by a factor drawn from `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        RetryPolicy {
            attempts,
            base_delay: Duration::ZERO,
            jitter: 0.0,
        }
    }

    /// Delay before retry number `retry` (0-based), jitter drawn from `rng`.
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let base = self.base_delay.saturating_mul(1u32 << retry.min(16));
        if self.jitter <= 0.0 || base.is_zero() {
            return base;
        }
        let factor = rng.random_range((1.0 - self.jitter).max(0.0)..=1.0 + self.jitter);
        base.mul_f64(factor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendFailure {
    pub attempts: u32,
    pub error: BackendError,
}

/// Call `backend`, retrying rate limits and transient errors with
/// exponential backoff. Returns the response and the attempts used.
pub fn call_with_retry(
    backend: &dyn Backend,
    request: &LlmRequest,
    policy: &RetryPolicy,
) -> Result<(LlmResponse, u32), BackendFailure> {
    let attempts = policy.attempts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(
        Sha256::digest(request.cache_key().as_bytes())[..8].try_into().unwrap(),
    ));
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(request) {
            Ok(resp) => return Ok((resp, attempt)),
            Err(error) if error.is_retryable() && attempt < attempts => {
                let mut wait = policy.delay(attempt - 1, &mut rng);
                if let BackendError::RateLimited { retry_after: Some(after) } = error {
                    wait = wait.max(after.min(policy.base_delay.saturating_mul(64)));
                }
                if !wait.is_zero() {
                    std::thread::sleep(wait);
                }
            }
            Err(error) => return Err(BackendFailure { attempts: attempt, error }),
        }
    }
}

// ---------------------------------------------------------------------------

type Script = dyn Fn(&LlmRequest) -> Result<String, BackendError> + Send + Sync;

/// Scripted backend for tests: a closure from request to reply text.
pub struct StubBackend {
    script: Box<Script>,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn new(script: impl Fn(&LlmRequest) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        StubBackend {
            script: Box::new(script),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        StubBackend::new(move |_| Ok(text.clone()))
    }

    /// Reply with the text of the first rule whose needle occurs in the last
    /// user message.
    pub fn rules(rules: Vec<(String, String)>) -> Self {
        StubBackend::new(move |req| {
            let prompt = req.last_user();
            rules
                .iter()
                .find(|(needle, _)| prompt.contains(needle.as_str()))
                .map(|(_, reply)| reply.clone())
                .ok_or_else(|| BackendError::Fatal("no stub rule matches the prompt".into()))
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for StubBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(request).map(LlmResponse::text)
    }
}

// ---------------------------------------------------------------------------

/// File body of one cache entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub request: LlmRequest,
    pub response: LlmResponse,
}

/// Disk cache in front of an optional inner backend. Without an inner
/// backend it replays recorded responses and reports misses as errors.
pub struct CachedBackend<B> {
    dir: PathBuf,
    inner: Option<B>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(dir: impl Into<PathBuf>, inner: B) -> std::io::Result<Self> {
        Self::build(dir.into(), Some(inner))
    }

    fn build(dir: PathBuf, inner: Option<B>) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(CachedBackend {
            dir,
            inner,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Requests forwarded to the inner backend (or refused, in replay mode).
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    fn read(&self, path: &Path, request: &LlmRequest) -> Option<LlmResponse> {
        let body = fs::read(path).ok()?;
        let record: CacheRecord = serde_json::from_slice(&body).ok()?;
        (record.request == *request).then_some(record.response)
    }

    fn write(&self, path: &Path, record: &CacheRecord) -> std::io::Result<()> {
        // Write-then-rename keeps concurrent writers of one key from
        // exposing a torn file.
        let tmp = path.with_extension(format!("tmp{:?}", std::thread::current().id()).replace(['(', ')'], ""));
        fs::write(&tmp, serde_json::to_vec_pretty(record).expect("record serializes"))?;
        fs::rename(&tmp, path)
    }
}

impl CachedBackend<StubBackend> {
    /// Replay-only cache.
    pub fn replay(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        Self::build(dir.into(), None)
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let key = request.cache_key();
        let path = self.path_for(&key);
        if let Some(resp) = self.read(&path, request) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(resp);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let inner = self.inner.as_ref().ok_or(BackendError::CacheMiss(key))?;
        let response = inner.complete(request)?;
        let record = CacheRecord {
            request: request.clone(),
            response,
        };
        self.write(&path, &record)
            .map_err(|e| BackendError::Fatal(format!("cache write {}: {e}", path.display())))?;
        Ok(record.response)
    }
}

// ---------------------------------------------------------------------------

/// Answers every prompt template as a perfect model would, using the
/// rule-based extractor for stage 1. `drop_rate` removes extracted tuples
/// at random (seeded by the prompt) to simulate an imperfect model.
#[derive(Debug, Clone, Default)]
pub struct OracleBackend {
    pub drop_rate: f64,
    pub seed: u64,
    calls: std::sync::Arc<AtomicUsize>,
}

impl OracleBackend {
    pub fn new() -> Self {
        OracleBackend::default()
    }

    pub fn noisy(drop_rate: f64, seed: u64) -> Self {
        OracleBackend {
            drop_rate,
            seed,
            ..OracleBackend::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn extract(&self, text: &str) -> Vec<crate::model::EventTuple> {
        let mut tuples = oracle_extract(text);
        if self.drop_rate > 0.0 {
            let digest = Sha256::digest(format!("{}:{text}", self.seed).as_bytes());
            let mut rng = ChaCha8Rng::from_seed(digest.into());
            let rate = self.drop_rate.clamp(0.0, 1.0);
            tuples.retain(|_| !rng.random_bool(rate));
        }
        tuples
    }
}

fn payload_after<'a>(prompt: &'a str, body: &'static str) -> Option<&'a str> {
    let marker = format!("{}\n\n", asset(body));
    prompt.find(&marker).map(|i| &prompt[i + marker.len()..])
}

impl Backend for OracleBackend {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.last_user();
        let reply = if let Some(text) = payload_after(prompt, T3_EXTRACT) {
            render_tuples(&self.extract(text))
        } else if let Some(tuples) = payload_after(prompt, T3D_INTEGRATE).or_else(|| payload_after(prompt, T3_CODE)) {
            render_count_tuples(&integrate(&parse_tuples(tuples).tuples))
        } else if let Some(counts) = payload_after(prompt, T3_TABLE) {
            to_csv(&parse_count_tuples(counts))
        } else if let Some(text) = payload_after(prompt, BASELINE_COT) {
            let table = integrate(&self.extract(text));
            format!(
                "Counting each event for both teams gives:\n{}\nSo the table is:\n{}",
                render_count_tuples(&table),
                to_csv(&table)
            )
        } else if let Some(text) = payload_after(prompt, BASELINE).or_else(|| payload_after(prompt, T3M)) {
            to_csv(&integrate(&self.extract(text)))
        } else {
            return Err(BackendError::Fatal("oracle does not recognize the prompt".into()));
        };
        Ok(LlmResponse::text(reply))
    }
}

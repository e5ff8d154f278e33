use std::path::{Path, PathBuf};

use serde::Deserialize;
use t3_core::pipeline::{Backend, BackendConfig, CachedBackend, OracleBackend, StubBackend};

use crate::http::HttpBackend;
use crate::{io_err, BackendKind, CliError};

pub const DEFAULT_CACHE_DIR: &str = ".t3-cache";

/// The backend chosen on the command line, with optional disk cache.
pub enum Selected {
    Plain(Box<dyn Backend>),
    Cached(CachedBackend<Box<dyn Backend>>),
    Replay(CachedBackend<StubBackend>),
}

impl Selected {
    pub fn backend(&self) -> &dyn Backend {
        match self {
            Selected::Plain(b) => b.as_ref(),
            Selected::Cached(c) => c,
            Selected::Replay(r) => r,
        }
    }

    /// `(cache hits, requests that reached the backend)`, when cached.
    pub fn cache_stats(&self) -> Option<(usize, usize)> {
        match self {
            Selected::Plain(_) => None,
            Selected::Cached(c) => Some((c.hits(), c.misses())),
            Selected::Replay(r) => Some((r.hits(), 0)),
        }
    }
}

#[derive(Deserialize)]
struct StubRule {
    #[serde(rename = "match")]
    needle: String,
    response: String,
}

fn load_rules(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<StubRule>(l)
                .map(|r| (r.needle, r.response))
                .map_err(|e| CliError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn select(kind: BackendKind, cfg: &BackendConfig, api_key: Option<String>) -> Result<Selected, CliError> {
    let inner: Box<dyn Backend> = match kind {
        BackendKind::Replay => {
            let dir = cfg.cache_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR));
            if !dir.is_dir() {
                return Err(io_err(&dir, "replay cache directory not found"));
            }
            let replay = CachedBackend::replay(&dir).map_err(|e| io_err(&dir, e))?;
            return Ok(Selected::Replay(replay));
        }
        BackendKind::Oracle => Box::new(OracleBackend::new()),
        BackendKind::Stub => match &cfg.stub_rules {
            Some(path) => Box::new(StubBackend::rules(load_rules(path)?)),
            None => Box::new(OracleBackend::noisy(cfg.stub_drop, cfg.exemplar_seed)),
        },
        BackendKind::Http => {
            let endpoint = cfg.endpoint.clone().ok_or_else(|| {
                CliError::Usage("--backend http needs `endpoint` in --config or T3_ENDPOINT".into())
            })?;
            if api_key.is_none() {
                eprintln!("t3: warning: T3_API_KEY is not set; sending requests without credentials");
            }
            Box::new(HttpBackend::new(endpoint, api_key, cfg.timeout))
        }
    };
    // HTTP responses are always cached so reruns are free.
    let dir = match (&cfg.cache_dir, kind) {
        (Some(dir), _) => dir.clone(),
        (None, BackendKind::Http) => PathBuf::from(DEFAULT_CACHE_DIR),
        (None, _) => return Ok(Selected::Plain(inner)),
    };
    let cached = CachedBackend::new(&dir, inner).map_err(|e| io_err(&dir, e))?;
    Ok(Selected::Cached(cached))
}

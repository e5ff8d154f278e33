use std::path::{Path, PathBuf};
use std::time::Duration;

use super::RetryPolicy;
use crate::error::{Error, Result};

/// Backend settings read from a `key = value` file. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    /// External integrator command line, whitespace separated.
    pub integrator: Option<Vec<String>>,
    /// Drop rate of the noisy oracle used by the stub backend.
    pub stub_drop: f64,
    /// Rules file for the stub backend: JSON lines of `{"match", "response"}`.
    pub stub_rules: Option<PathBuf>,
    pub exemplar_seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: None,
            model: "gpt-4-0613".to_string(),
            temperature: 0.0,
            parallelism: 1,
            cache_dir: None,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
            integrator: None,
            stub_drop: 0.1,
            stub_rules: None,
            exemplar_seed: 0,
        }
    }
}

impl BackendConfig {
    pub fn parse(text: &str) -> Result<BackendConfig> {
        let mut cfg = BackendConfig::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Overwrite only the keys present in `text`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let cfg = self;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = |what: &str| err(format!("{key}: expected {what}, got {value:?}"));
            match key {
                "endpoint" => cfg.endpoint = Some(value.to_string()),
                "model" => cfg.model = value.to_string(),
                "temperature" => cfg.temperature = value.parse().map_err(|_| number("a number"))?,
                "parallelism" => {
                    cfg.parallelism = value
                        .parse()
                        .ok()
                        .filter(|p| *p > 0)
                        .ok_or_else(|| number("a positive integer"))?
                }
                "cache_dir" => cfg.cache_dir = Some(PathBuf::from(value)),
                "retry_attempts" => {
                    cfg.retry.attempts = value
                        .parse()
                        .ok()
                        .filter(|a| *a > 0)
                        .ok_or_else(|| number("a positive integer"))?
                }
                "retry_base_ms" => {
                    cfg.retry.base_delay =
                        Duration::from_millis(value.parse().map_err(|_| number("milliseconds"))?)
                }
                "retry_jitter" => cfg.retry.jitter = value.parse().map_err(|_| number("a fraction"))?,
                "timeout_s" => cfg.timeout = Duration::from_secs(value.parse().map_err(|_| number("seconds"))?),
                "integrator" => {
                    let argv: Vec<String> = value.split_whitespace().map(String::from).collect();
                    cfg.integrator = (!argv.is_empty()).then_some(argv);
                }
                "stub_drop" => cfg.stub_drop = value.parse().map_err(|_| number("a fraction"))?,
                "stub_rules" => cfg.stub_rules = Some(PathBuf::from(value)),
                "exemplar_seed" => cfg.exemplar_seed = value.parse().map_err(|_| number("an integer"))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BackendConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        BackendConfig::parse(&text)
    }
}

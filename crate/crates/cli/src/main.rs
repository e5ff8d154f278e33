//! `t3`: generate synthetic data, run pipelines, score runs, and compute
//! Auto-QA coverage.

mod autoqa;
mod backends;
mod eval;
mod gen;
mod http;
mod inspect;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use t3_core::pipeline::{BackendConfig, PipelineMode};

#[derive(Parser)]
#[command(name = "t3", version, about = "Text to tuples to tables for match commentary")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known ground truth.
    Gen(gen::GenArgs),
    /// Run a pipeline mode over a dataset and write transcripts.
    Run(run::RunArgs),
    /// Score transcripts against a dataset.
    Eval(eval::EvalArgs),
    /// Auto-QA coverage of generated tables against their documents.
    Autoqa(autoqa::AutoqaArgs),
    /// Pretty-print one transcript with a diff against ground truth.
    Inspect(inspect::InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Http,
    Stub,
    Replay,
    Oracle,
}

/// Backend flags shared by `run` and `autoqa`.
#[derive(Args, Debug, Clone)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: BackendKind,
    /// Backend config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl BackendArgs {
    /// Environment defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<(BackendConfig, Option<String>), CliError> {
        let mut cfg = BackendConfig::default();
        if let Ok(endpoint) = std::env::var("T3_ENDPOINT") {
            cfg.endpoint = Some(endpoint);
        }
        if let Ok(model) = std::env::var("T3_MODEL") {
            cfg.model = model;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            cfg.apply(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        if let Some(p) = self.parallelism {
            if p == 0 {
                return Err(CliError::Usage("--parallelism must be at least 1".into()));
            }
            cfg.parallelism = p;
        }
        if let Some(seed) = self.seed {
            cfg.exemplar_seed = seed;
        }
        if let Some(model) = &self.model {
            cfg.model = model.clone();
        }
        if let Some(dir) = &self.cache_dir {
            cfg.cache_dir = Some(dir.clone());
        }
        let key = std::env::var("T3_API_KEY").ok().filter(|k| !k.is_empty());
        Ok((cfg, key))
    }
}

pub fn parse_mode(s: &str) -> Result<PipelineMode, String> {
    s.parse()
        .map_err(|_| format!("unknown mode {s:?}; valid modes: {}", PipelineMode::NAMES))
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    /// Some instances exhausted their backend retries; outputs were written.
    BackendExhausted(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::BackendExhausted(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::BackendExhausted(m) => f.write_str(m),
        }
    }
}

/// Library errors from reading inputs are I/O class; the rest are usage.
impl From<t3_core::Error> for CliError {
    fn from(e: t3_core::Error) -> Self {
        use t3_core::Error::*;
        match e {
            Io { .. } | MalformedLine { .. } | BadTableShape { .. } | DuplicateId { .. } | Json(_) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

pub fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &std::path::Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen::cmd_gen(a),
        Command::Run(a) => run::cmd_run(a),
        Command::Eval(a) => eval::cmd_eval(a),
        Command::Autoqa(a) => autoqa::cmd_autoqa(a),
        Command::Inspect(a) => inspect::cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("t3: {e}");
            ExitCode::from(e.code())
        }
    }
}

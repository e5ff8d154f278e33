use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::Args;
use t3_core::pipeline::{write_transcripts, Pipeline, PipelineMode, RunConfig};
use t3_core::synth::read_dataset;

use crate::backends::select;
use crate::{parse_mode, BackendArgs, CliError};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Dataset (JSON lines).
    #[arg(long)]
    pub dataset: PathBuf,
    /// zero-shot, zero-shot-cot, few-shot:<k>, few-shot-cot:<k>, t3, t3m, t3d or t2.
    #[arg(long, value_parser = parse_mode)]
    pub mode: PipelineMode,
    /// Transcript output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Draw few-shot exemplars from this dataset instead of the run dataset.
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    /// Suppress per-instance progress on stderr.
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let (cfg, key) = args.backend.resolve()?;
    let data = read_dataset(&args.dataset)?;
    let pool = match &args.exemplars {
        Some(path) => Some(read_dataset(path)?),
        None => None,
    };
    let selected = select(args.backend.backend, &cfg, key)?;
    let mut pipeline = Pipeline::new(selected.backend(), RunConfig::from_backend_config(&cfg));
    if let Some(pool) = &pool {
        pipeline = pipeline.with_exemplar_pool(pool);
    }

    let last_pct = AtomicUsize::new(0);
    let quiet = args.quiet;
    let progress = |done: usize, total: usize| {
        let pct = done * 100 / total.max(1);
        if !quiet && (pct / 10 > last_pct.swap(pct, Ordering::SeqCst) / 10 || done == total) {
            eprintln!("  {done}/{total} instances");
        }
    };
    let transcripts = pipeline.run_batch(&data, args.mode, &progress)?;
    write_transcripts(&transcripts, &args.out)?;

    let malformed = transcripts.iter().filter(|t| t.outcome.is_malformed()).count();
    let failed = transcripts.iter().filter(|t| t.backend_failed).count();
    println!(
        "mode {}: {} transcripts written to {}, malformed {malformed}",
        args.mode,
        transcripts.len(),
        args.out.display()
    );
    if let Some((hits, calls)) = selected.cache_stats() {
        println!("cache hits {hits}, backend calls {calls}");
    }
    if failed > 0 {
        return Err(CliError::BackendExhausted(format!(
            "{failed} instance(s) failed after exhausting backend retries"
        )));
    }
    Ok(())
}

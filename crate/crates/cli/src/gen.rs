use std::path::{Path, PathBuf};

use clap::Args;
use t3_core::model::EventType;
use t3_core::synth::{empirical_means, generate, write_dataset, GeneratorConfig};

use crate::{io_err, CliError};

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of instances.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output dataset (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Generator overrides as `key = value` lines, e.g. `mean.goals = 2.0`.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn event_key(e: EventType) -> String {
    e.header().to_lowercase().replace(' ', "_")
}

pub fn apply_overrides(cfg: &mut GeneratorConfig, text: &str, path: &Path) -> Result<(), CliError> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: &str| CliError::Usage(format!("{}:{}: {m}", path.display(), i + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| bad("expected a non-negative number"))?;
        if let Some(name) = key.strip_prefix("mean.") {
            let event = EventType::ALL
                .into_iter()
                .find(|e| event_key(*e) == name)
                .ok_or_else(|| bad(&format!("unknown event {name:?}")))?;
            cfg.means.insert(event, value);
            continue;
        }
        let share = || -> Result<f64, CliError> {
            if value > 1.0 {
                Err(bad("expected a probability in [0, 1]"))
            } else {
                Ok(value)
            }
        };
        match key {
            "foul_free_kick_link" => cfg.foul_free_kick_link = share()?,
            "offside_through_ball" => cfg.offside_through_ball = share()?,
            "second_yellow_share" => cfg.second_yellow_share = share()?,
            "handball_share" => cfg.handball_share = share()?,
            "dangerous_play_share" => cfg.dangerous_play_share = share()?,
            "penalty_share" => cfg.penalty_share = share()?,
            "filler_mean" => cfg.filler_mean = value,
            other => return Err(bad(&format!("unknown key {other:?}"))),
        }
    }
    Ok(())
}

pub fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let mut cfg = GeneratorConfig::default().with_seed(args.seed);
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        apply_overrides(&mut cfg, &text, path)?;
    }
    let data = generate(&cfg, args.n);
    write_dataset(&data, &args.out)?;
    println!("wrote {} instances to {}", data.len(), args.out.display());
    println!("{:<14} {:>10} {:>10}", "event", "target", "empirical");
    let means = empirical_means(&data);
    for e in EventType::ALL {
        println!("{:<14} {:>10.2} {:>10.2}", e.header(), cfg.mean(e), means[&e]);
    }
    Ok(())
}

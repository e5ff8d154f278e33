use std::collections::HashMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;
use t3_core::evaluation::{report_with, score_instance, EvalReport, Pooling};
use t3_core::pipeline::read_transcripts;
use t3_core::synth::read_dataset;

use crate::{write_file, CliError};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolingArg {
    Cells,
    InstanceMean,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Cells => Pooling::Cells,
            PoolingArg::InstanceMean => Pooling::InstanceMean,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub transcripts: PathBuf,
    /// Dataset with ground-truth tables.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Write the report and per-instance scores as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cells")]
    pub pooling: PoolingArg,
    /// Print one line per instance.
    #[arg(long)]
    pub per_instance: bool,
}

#[derive(Serialize)]
struct InstanceRow {
    id: String,
    /// `None` when the prediction was malformed and filtered.
    rmse: Option<f64>,
    error_rate: Option<f64>,
    malformed: Option<String>,
}

#[derive(Serialize)]
struct EvalOutput {
    mode: Option<String>,
    report: EvalReport,
    instances: Vec<InstanceRow>,
}

fn list(ids: &[&str]) -> String {
    const SHOWN: usize = 10;
    let mut s = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    s
}

pub fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let transcripts = read_transcripts(&args.transcripts)?;
    let dataset = read_dataset(&args.dataset)?;
    let truth: HashMap<&str, _> = dataset
        .iter()
        .map(|i| (i.id.as_str(), i.ground_truth.as_ref()))
        .collect();

    let unknown: Vec<&str> = transcripts
        .iter()
        .map(|t| t.instance_id.as_str())
        .filter(|id| !truth.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Io(format!(
            "{} transcript(s) have no instance in {}: {}",
            unknown.len(),
            args.dataset.display(),
            list(&unknown)
        )));
    }
    let covered: std::collections::HashSet<&str> =
        transcripts.iter().map(|t| t.instance_id.as_str()).collect();
    let missing: Vec<&str> = dataset
        .iter()
        .map(|i| i.id.as_str())
        .filter(|id| !covered.contains(id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!(
            "{} instance(s) have no transcript in {}: {}",
            missing.len(),
            args.transcripts.display(),
            list(&missing)
        )));
    }
    let no_truth: Vec<&str> = transcripts
        .iter()
        .map(|t| t.instance_id.as_str())
        .filter(|id| truth[id].is_none())
        .collect();
    if !no_truth.is_empty() {
        return Err(CliError::Io(format!(
            "{} instance(s) have no ground-truth table: {}",
            no_truth.len(),
            list(&no_truth)
        )));
    }

    let mut pairs = Vec::with_capacity(transcripts.len());
    let mut rows = Vec::with_capacity(transcripts.len());
    for t in &transcripts {
        let gold = *truth[t.instance_id.as_str()].expect("checked above");
        let row = match t.outcome.table() {
            Some(pred) => {
                let s = score_instance(pred, &gold);
                InstanceRow {
                    id: t.instance_id.clone(),
                    rmse: Some(s.rmse()),
                    error_rate: Some(s.error_rate()),
                    malformed: None,
                }
            }
            None => InstanceRow {
                id: t.instance_id.clone(),
                rmse: None,
                error_rate: None,
                malformed: Some(t.outcome.to_string()),
            },
        };
        rows.push(row);
        pairs.push((t.outcome.clone(), gold));
    }
    let report = report_with(&pairs, args.pooling.into());

    let mut modes: Vec<String> = transcripts.iter().map(|t| t.mode.to_string()).collect();
    modes.dedup();
    let mode = (modes.len() == 1).then(|| modes[0].clone());
    if let Some(m) = &mode {
        println!("mode: {m}");
    }
    println!("{}", report.to_text());
    if args.per_instance {
        for r in &rows {
            match (r.rmse, r.error_rate) {
                (Some(rmse), Some(er)) => {
                    println!("{:<24} rmse {rmse:.3} er {er:.2}%", r.id)
                }
                _ => println!("{:<24} {}", r.id, r.malformed.as_deref().unwrap_or("")),
            }
        }
    }
    if let Some(out) = &args.out {
        let json = serde_json::to_string_pretty(&EvalOutput {
            mode,
            report,
            instances: rows,
        })
        .expect("report serializes");
        write_file(out, json + "\n")?;
    }
    Ok(())
}

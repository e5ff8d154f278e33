use std::path::PathBuf;

use clap::Args;
use t3_core::evaluation::{diagnose, score_instance};
use t3_core::model::{EventType, TeamSide};
use t3_core::pipeline::{read_transcripts, RunTranscript};
use t3_core::synth::read_dataset;
use t3_core::table_io::to_markdown;
use t3_core::oracle_extract;

use crate::CliError;

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub transcripts: PathBuf,
    /// Instance to show; defaults to the first transcript.
    #[arg(long)]
    pub id: Option<String>,
    /// Dataset for the ground-truth diff and tuple taxonomy.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Print full prompts instead of the last user message only.
    #[arg(long)]
    pub full_prompts: bool,
}

fn indent(text: &str) -> String {
    text.lines().map(|l| format!("    {l}\n")).collect()
}

fn print_stages(t: &RunTranscript, full: bool) {
    println!(
        "instance {} | mode {} | model {} | templates {} | {} ms",
        t.instance_id, t.mode, t.model, t.template_version, t.latency_ms
    );
    for s in &t.stages {
        println!(
            "\n== stage {} ({:?}) attempts {} tokens {}+{}",
            s.stage, s.kind, s.attempts, s.usage.prompt_tokens, s.usage.completion_tokens
        );
        let shown = if full { &s.prompt[..] } else { &s.prompt[s.prompt.len().saturating_sub(1)..] };
        for m in shown {
            println!("-- {:?}", m.role);
            print!("{}", indent(&m.content));
        }
        match (&s.response, &s.error) {
            (Some(r), _) => {
                println!("-- response");
                print!("{}", indent(r));
            }
            (None, Some(e)) => println!("-- error: {e}"),
            (None, None) => {}
        }
    }
    if !t.rejected_lines.is_empty() || t.unknown_labels > 0 {
        println!(
            "\nrejected tuple lines: {}, unknown labels: {}",
            t.rejected_lines.len(),
            t.unknown_labels
        );
        for r in &t.rejected_lines {
            println!("    line {}: {:?} ({})", r.line_no, r.line, r.reason);
        }
    }
    println!("\noutcome: {}", t.outcome);
    if let Some(table) = t.outcome.table() {
        print!("{}", indent(&to_markdown(table)));
    }
}

pub fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let transcripts = read_transcripts(&args.transcripts)?;
    let t = match &args.id {
        Some(id) => transcripts
            .iter()
            .find(|t| &t.instance_id == id)
            .ok_or_else(|| CliError::Usage(format!("no transcript for instance {id:?}")))?,
        None => transcripts
            .first()
            .ok_or_else(|| CliError::Io(format!("{}: no transcripts", args.transcripts.display())))?,
    };
    print_stages(t, args.full_prompts);

    let Some(path) = &args.dataset else {
        return Ok(());
    };
    let dataset = read_dataset(path)?;
    let inst = dataset
        .iter()
        .find(|i| i.id == t.instance_id)
        .ok_or_else(|| CliError::Io(format!("{}: no instance {:?}", path.display(), t.instance_id)))?;

    if let (Some(pred), Some(truth)) = (t.outcome.table(), &inst.ground_truth) {
        let score = score_instance(pred, truth);
        println!(
            "\nrmse {:.3}, error rate {:.2}%; differing cells (predicted vs truth):",
            score.rmse(),
            score.error_rate()
        );
        let mut clean = true;
        for team in TeamSide::ALL {
            for e in EventType::ALL {
                let (p, g) = (pred.get(team, e), truth.get(team, e));
                if p != g {
                    clean = false;
                    println!("    {:<10} {:<13} {p:>3} vs {g:>3}", team.label(), e.header());
                }
            }
        }
        if clean {
            println!("    none");
        }
    }

    if t.tuples.is_some() {
        // Reference tuples come from the template oracle over the commentary.
        let reference = oracle_extract(&inst.commentary);
        let d = diagnose(t, &reference);
        println!(
            "\ntuple errors vs {} reference tuples: missing {}, wrong {}, spurious {}",
            reference.len(),
            d.total.missing,
            d.total.wrong,
            d.total.spurious
        );
        for (e, c) in &d.per_event {
            if !c.is_clean() {
                println!(
                    "    {:<13} missing {} wrong {} spurious {}",
                    e.header(),
                    c.missing,
                    c.wrong,
                    c.spurious
                );
            }
        }
        let u = d.unclassified;
        if !u.is_clean() {
            println!("    {:<13} missing {} wrong {} spurious {}", "(no column)", u.missing, u.wrong, u.spurious);
        }
    }
    Ok(())
}

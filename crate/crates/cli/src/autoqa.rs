use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use t3_core::evaluation::{
    autoqa_coverage, coverage_curve, curve_to_csv, default_grid, Answerer, AutoQaResult, CurvePoint,
    ExactMatchJudge, FixedQaGenerator, Judge, KeyValueAnswerer, QaGenerator, QaPair,
};
use t3_core::model::{EventType, SummaryTable, TeamSide};
use t3_core::pipeline::{
    call_with_retry, Backend, ChatMessage, LlmRequest, PipelineMode, RetryPolicy, RunTranscript,
};
use t3_core::table_io::{parse_model_table, to_markdown};
use t3_core::tuples::{integrate, parse_tuples, render_tuples};
use t3_core::{oracle_extract, Error};

use crate::backends::select;
use crate::{io_err, write_file, BackendArgs, BackendKind, CliError};

#[derive(Args, Debug)]
pub struct AutoqaArgs {
    /// Source documents: JSON lines with `id` and `text` or `commentary`.
    #[arg(long)]
    pub documents: PathBuf,
    /// Tables to score: run transcripts, or JSON lines with `id` and `render`.
    #[arg(long)]
    pub tables: PathBuf,
    /// Fixed QA pairs per document: JSON lines `{"id", "pairs": [{"question", "answer"}]}`.
    /// Answers are looked up as `key: value` lines and compared exactly.
    #[arg(long)]
    pub qa_fixtures: Option<PathBuf>,
    /// Coverage report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Coverage curve (CSV with `threshold,percent`).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Deserialize)]
struct DocRecord {
    id: String,
    #[serde(alias = "commentary")]
    text: String,
}

#[derive(Deserialize)]
struct RenderRecord {
    id: String,
    render: String,
}

#[derive(Deserialize)]
struct FixturePair {
    question: String,
    answer: String,
}

#[derive(Deserialize)]
struct FixtureRecord {
    id: String,
    pairs: Vec<FixturePair>,
}

#[derive(Serialize)]
struct DocCoverage {
    id: String,
    coverage: Option<f64>,
    surviving: usize,
    correct: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<AutoQaResult>,
}

#[derive(Serialize)]
struct Output {
    documents: Vec<DocCoverage>,
    excluded: usize,
    mean_coverage: Option<f64>,
    curve: Vec<CurvePoint>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// What a table-based run exposes to the answerer. T2 runs stop at tuples.
pub fn render_transcript(t: &RunTranscript) -> String {
    if t.mode == PipelineMode::T2 {
        return t.tuples.as_deref().map(render_tuples).unwrap_or_default();
    }
    t.outcome.table().map(to_markdown).unwrap_or_default()
}

fn read_renders(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let values: Vec<Value> = read_jsonl(path)?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let bad = |e: serde_json::Error| CliError::Io(format!("{}:{}: {e}", path.display(), i + 1));
            if v.get("instance_id").is_some() {
                let t: RunTranscript = serde_json::from_value(v).map_err(bad)?;
                Ok((t.instance_id.clone(), render_transcript(&t)))
            } else {
                let r: RenderRecord = serde_json::from_value(v).map_err(bad)?;
                Ok((r.id, r.render))
            }
        })
        .collect()
}

fn question(team: TeamSide, event: EventType) -> String {
    format!("How many {} did {} have?", event.header().to_lowercase(), team.label())
}

/// Offline Auto-QA over the count cells: one question per team and event,
/// answered by reading a table, integrating tuples, or extracting from text.
pub struct CountQa;

impl CountQa {
    fn table_from(context: &str) -> Option<SummaryTable> {
        if context.trim().is_empty() {
            return None;
        }
        if let Some(t) = parse_model_table(context).table() {
            return Some(*t);
        }
        let report = parse_tuples(context);
        if !report.tuples.is_empty() {
            return Some(integrate(&report.tuples));
        }
        Some(integrate(&oracle_extract(context)))
    }
}

impl QaGenerator for CountQa {
    fn generate(&self, doc: &str) -> Result<Vec<QaPair>, String> {
        let table = integrate(&oracle_extract(doc));
        Ok(TeamSide::ALL
            .into_iter()
            .flat_map(|team| EventType::ALL.into_iter().map(move |e| (team, e)))
            .map(|(team, e)| QaPair::new(question(team, e), table.get(team, e).to_string()))
            .collect())
    }
}

impl Answerer for CountQa {
    fn answer(&self, context: &str, q: &str) -> Result<String, String> {
        let Some(table) = Self::table_from(context) else {
            return Ok(String::new());
        };
        for team in TeamSide::ALL {
            for e in EventType::ALL {
                if question(team, e) == q {
                    return Ok(table.get(team, e).to_string());
                }
            }
        }
        Ok(String::new())
    }
}

/// Pairs requested per document; extra pairs in a reply are dropped.
pub const QA_PAIRS: usize = 20;

const QA_GEN_PROMPT: &str = "about the match report below. \
Each question must be answerable from the report alone with a short answer. \
Write each pair on two lines:\nQ: <question>\nA: <answer>";
const ANSWER_PROMPT: &str = "Answer the question using only the context. \
Reply with the short answer only, or `unknown` if the context does not say.";
const JUDGE_PROMPT: &str = "Does the candidate answer mean the same as the reference answer \
for this question? Reply `yes` or `no`.";

/// QA generation, answering and judging through a chat backend.
pub struct LlmQa<'a> {
    pub backend: &'a dyn Backend,
    pub model: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
}

impl LlmQa<'_> {
    fn ask(&self, prompt: String) -> Result<String, String> {
        let request = LlmRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::user(prompt)],
            temperature: self.temperature,
        };
        call_with_retry(self.backend, &request, &self.retry)
            .map(|(r, _)| r.text)
            .map_err(|f| format!("{} after {} attempt(s)", f.error, f.attempts))
    }
}

pub fn parse_qa_pairs(text: &str) -> Vec<QaPair> {
    let mut pairs = Vec::new();
    let mut pending: Option<String> = None;
    for line in text.lines().map(str::trim) {
        if let Some(q) = line.strip_prefix("Q:") {
            pending = Some(q.trim().to_string());
        } else if let Some(a) = line.strip_prefix("A:") {
            if let Some(q) = pending.take() {
                pairs.push(QaPair::new(q, a.trim()));
            }
        }
    }
    pairs
}

impl QaGenerator for LlmQa<'_> {
    fn generate(&self, doc: &str) -> Result<Vec<QaPair>, String> {
        let reply = self.ask(format!("Write {QA_PAIRS} question and answer pairs {QA_GEN_PROMPT}\n\n{doc}"))?;
        let mut pairs = parse_qa_pairs(&reply);
        pairs.truncate(QA_PAIRS);
        Ok(pairs)
    }
}

impl Answerer for LlmQa<'_> {
    fn answer(&self, context: &str, question: &str) -> Result<String, String> {
        let reply = self.ask(format!("{ANSWER_PROMPT}\n\nContext:\n{context}\n\nQuestion: {question}"))?;
        let reply = reply.trim();
        Ok(if reply.eq_ignore_ascii_case("unknown") {
            String::new()
        } else {
            reply.to_string()
        })
    }
}

impl Judge for LlmQa<'_> {
    fn equivalent(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, String> {
        if candidate.trim().is_empty() {
            return Ok(false);
        }
        let reply = self.ask(format!(
            "{JUDGE_PROMPT}\n\nQuestion: {question}\nReference: {reference}\nCandidate: {candidate}"
        ))?;
        Ok(reply.trim_start().to_lowercase().starts_with("yes"))
    }
}

/// Map over `items` on up to `workers` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                *slots[i].lock().unwrap() = Some(f(item));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

pub fn cmd_autoqa(args: AutoqaArgs) -> Result<(), CliError> {
    let docs: Vec<DocRecord> = read_jsonl(&args.documents)?;
    let renders: HashMap<String, String> = read_renders(&args.tables)?.into_iter().collect();
    let fixtures: Option<HashMap<String, Vec<QaPair>>> = match &args.qa_fixtures {
        Some(path) => Some(
            read_jsonl::<FixtureRecord>(path)?
                .into_iter()
                .map(|r| {
                    let pairs = r.pairs.into_iter().map(|p| QaPair::new(p.question, p.answer)).collect();
                    (r.id, pairs)
                })
                .collect(),
        ),
        None => None,
    };

    let missing: Vec<&str> = docs
        .iter()
        .map(|d| d.id.as_str())
        .filter(|id| !renders.contains_key(*id))
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!(
            "{} document(s) have no table in {}: {}",
            missing.len(),
            args.tables.display(),
            missing.join(", ")
        )));
    }

    let (cfg, key) = args.backend.resolve()?;
    let selected = match (&fixtures, args.backend.backend) {
        (None, BackendKind::Oracle) | (Some(_), _) => None,
        (None, kind) => Some(select(kind, &cfg, key)?),
    };
    let llm = selected.as_ref().map(|s| LlmQa {
        backend: s.backend(),
        model: cfg.model.clone(),
        temperature: cfg.temperature,
        retry: cfg.retry,
    });

    let score = |doc: &DocRecord| {
        let render = &renders[&doc.id];
        match (&fixtures, &llm) {
            (Some(fx), _) => {
                let gen = FixedQaGenerator {
                    pairs: fx.get(&doc.id).cloned().unwrap_or_default(),
                };
                autoqa_coverage(&doc.text, render, &gen, &KeyValueAnswerer, &ExactMatchJudge)
            }
            (None, Some(qa)) => autoqa_coverage(&doc.text, render, qa, qa, qa),
            (None, None) => autoqa_coverage(&doc.text, render, &CountQa, &CountQa, &ExactMatchJudge),
        }
    };
    let results = parallel_map(&docs, cfg.parallelism, score);

    let mut rows = Vec::with_capacity(docs.len());
    let mut backend_errors = 0;
    for (doc, result) in docs.iter().zip(results) {
        let row = match result {
            Ok(r) => DocCoverage {
                id: doc.id.clone(),
                coverage: Some(r.coverage),
                surviving: r.surviving,
                correct: r.correct,
                note: None,
                result: Some(r),
            },
            Err(e) => {
                if matches!(e, Error::NoValidQaPairs) {
                    eprintln!("t3: warning: {}: no valid QA pairs; excluded from the curve", doc.id);
                } else {
                    backend_errors += 1;
                    eprintln!("t3: warning: {}: {e}", doc.id);
                }
                DocCoverage {
                    id: doc.id.clone(),
                    coverage: None,
                    surviving: 0,
                    correct: 0,
                    note: Some(e.to_string()),
                    result: None,
                }
            }
        };
        rows.push(row);
    }

    let covs: Vec<f64> = rows.iter().filter_map(|r| r.coverage).collect();
    let excluded = rows.len() - covs.len();
    let curve = if covs.is_empty() {
        eprintln!("t3: warning: no document has valid QA pairs; the curve is empty");
        Vec::new()
    } else {
        coverage_curve(&covs, &default_grid())?
    };
    let mean = (!covs.is_empty()).then(|| covs.iter().sum::<f64>() / covs.len() as f64);

    println!("documents: {}, scored: {}, excluded: {excluded}", rows.len(), covs.len());
    if let Some(m) = mean {
        println!("mean coverage: {:.1}%", m * 100.0);
    }
    print!("{}", curve_to_csv(&curve));

    if let Some(path) = &args.curve {
        write_file(path, curve_to_csv(&curve))?;
    }
    let json = serde_json::to_string_pretty(&Output {
        documents: rows,
        excluded,
        mean_coverage: mean,
        curve,
    })
    .expect("coverage serializes");
    write_file(&args.out, json + "\n")?;

    if backend_errors > 0 {
        return Err(CliError::BackendExhausted(format!(
            "{backend_errors} document(s) failed on backend errors"
        )));
    }
    Ok(())
}

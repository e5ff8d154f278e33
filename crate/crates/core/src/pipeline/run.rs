use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{call_with_retry, Backend, LlmRequest, RetryPolicy, Usage};
use super::{build_instruction, build_prompt, select_exemplars, ChatMessage, Exemplar, PipelineMode, TEMPLATE_VERSION};
use crate::error::{Error, Result};
use crate::model::{EventTuple, MatchInstance};
use crate::table_io::{parse_model_table, MalformedCode, ParsedTableOutcome};
use crate::tuples::{integrate_with_tally, parse_tuples, render_count_tuples, render_tuples, RejectedLine};

/// How stage 2 of T3 turns tuples into counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Integrator {
    #[default]
    Native,
    /// Subprocess reading tuples on stdin and writing a CSV table on stdout.
    External(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub parallelism: usize,
    pub integrator: Integrator,
    pub exemplar_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "gpt-4-0613".to_string(),
            temperature: 0.0,
            retry: RetryPolicy::default(),
            parallelism: 1,
            integrator: Integrator::Native,
            exemplar_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_backend_config(cfg: &super::BackendConfig) -> Self {
        RunConfig {
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            retry: cfg.retry,
            parallelism: cfg.parallelism,
            integrator: cfg
                .integrator
                .clone()
                .map_or(Integrator::Native, Integrator::External),
            exemplar_seed: cfg.exemplar_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Llm,
    /// Computed in-process; the prompt is kept for reference only.
    Native,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u8,
    pub kind: StageKind,
    pub prompt: Vec<ChatMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
    pub attempts: u32,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// Everything one instance produced, enough to recompute the outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTranscript {
    pub instance_id: String,
    pub mode: PipelineMode,
    pub model: String,
    pub template_version: String,
    pub stages: Vec<StageRecord>,
    /// Stage-1 tuples for tuple-based modes.
    pub tuples: Option<Vec<EventTuple>>,
    #[serde(default)]
    pub rejected_lines: Vec<RejectedLine>,
    #[serde(default)]
    pub unknown_labels: usize,
    pub outcome: ParsedTableOutcome,
    /// True when a backend call failed after all retries.
    pub backend_failed: bool,
    /// Sum of backend-reported stage latencies.
    pub latency_ms: u64,
}

struct Runner<'a> {
    backend: &'a dyn Backend,
    cfg: &'a RunConfig,
    stages: Vec<StageRecord>,
}

enum StageFailure {
    Backend(String),
    Integrator(String),
}

impl Runner<'_> {
    fn llm(&mut self, mode: PipelineMode, stage: u8, payload: &str, exemplars: &[Exemplar]) -> std::result::Result<String, StageFailure> {
        let messages = build_prompt(mode, stage, build_instruction(), payload, exemplars)
            .expect("stage graph only visits valid stages");
        let request = LlmRequest {
            model: self.cfg.model.clone(),
            messages,
            temperature: self.cfg.temperature,
        };
        let mut record = StageRecord {
            stage,
            kind: StageKind::Llm,
            prompt: request.messages.clone(),
            response: None,
            error: None,
            attempts: 0,
            usage: Usage::default(),
            latency_ms: 0,
        };
        let result = match call_with_retry(self.backend, &request, &self.cfg.retry) {
            Ok((resp, attempts)) => {
                record.attempts = attempts;
                record.usage = resp.usage;
                record.latency_ms = resp.latency_ms;
                record.response = Some(resp.text.clone());
                Ok(resp.text)
            }
            Err(fail) => {
                let reason = format!("backend error: {} after {} attempt(s)", fail.error, fail.attempts);
                record.attempts = fail.attempts;
                record.error = Some(reason.clone());
                Err(StageFailure::Backend(reason))
            }
        };
        self.stages.push(record);
        result
    }

    fn integrate(&mut self, mode: PipelineMode, tuples: &[EventTuple]) -> std::result::Result<String, StageFailure> {
        let prompt = build_prompt(mode, 2, build_instruction(), &render_tuples(tuples), &[])
            .expect("stage 2 exists for T3");
        let mut record = StageRecord {
            stage: 2,
            kind: StageKind::Native,
            prompt,
            response: None,
            error: None,
            attempts: 0,
            usage: Usage::default(),
            latency_ms: 0,
        };
        let result = match &self.cfg.integrator {
            Integrator::Native => Ok(render_count_tuples(&integrate_with_tally(tuples).table)),
            Integrator::External(argv) => {
                record.kind = StageKind::External;
                run_external(argv, &render_tuples(tuples)).map_err(StageFailure::Integrator)
            }
        };
        match &result {
            Ok(text) => record.response = Some(text.clone()),
            Err(StageFailure::Integrator(e) | StageFailure::Backend(e)) => record.error = Some(e.clone()),
        }
        self.stages.push(record);
        result
    }
}

fn run_external(argv: &[String], input: &str) -> std::result::Result<String, String> {
    let (program, args) = argv.split_first().ok_or("empty integrator command")?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("integrator {program}: {e}"))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = input.to_string();
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let output = child.wait_with_output().map_err(|e| format!("integrator {program}: {e}"))?;
    let _ = writer.join();
    if !output.status.success() {
        return Err(format!(
            "integrator {program} exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
    match parse_model_table(&stdout) {
        ParsedTableOutcome::Ok(table) => Ok(render_count_tuples(&table)),
        malformed => Err(format!("integrator output unusable: {malformed}")),
    }
}

fn failure_outcome(f: StageFailure) -> ParsedTableOutcome {
    match f {
        StageFailure::Backend(r) => ParsedTableOutcome::malformed(MalformedCode::BackendError, r),
        StageFailure::Integrator(r) => ParsedTableOutcome::malformed(MalformedCode::Integrator, r),
    }
}

/// Execute the stage graph of `mode` for one instance. Never fails: backend
/// and integrator errors become a malformed outcome.
pub fn run_instance(
    inst: &MatchInstance,
    mode: PipelineMode,
    backend: &dyn Backend,
    cfg: &RunConfig,
    exemplars: &[Exemplar],
) -> RunTranscript {
    let mut runner = Runner {
        backend,
        cfg,
        stages: Vec::new(),
    };
    let mut tuples = None;
    let mut rejected = Vec::new();
    let mut unknown = 0;

    let outcome = (|| -> std::result::Result<ParsedTableOutcome, StageFailure> {
        match mode {
            PipelineMode::ZeroShot
            | PipelineMode::ZeroShotCoT
            | PipelineMode::FewShot { .. }
            | PipelineMode::T3Merged => {
                let text = runner.llm(mode, 1, &inst.commentary, exemplars)?;
                Ok(parse_model_table(&text))
            }
            PipelineMode::T2 | PipelineMode::T3 | PipelineMode::T3Direct => {
                let text = runner.llm(mode, 1, &inst.commentary, &[])?;
                let report = parse_tuples(&text);
                let integration = integrate_with_tally(&report.tuples);
                unknown = integration.unknown;
                rejected = report.rejected_lines;
                let extracted = report.tuples;
                tuples = Some(extracted.clone());
                let counts = match mode {
                    PipelineMode::T2 => return Ok(ParsedTableOutcome::Ok(integration.table)),
                    PipelineMode::T3 => runner.integrate(mode, &extracted)?,
                    _ => runner.llm(mode, 2, &render_tuples(&extracted), &[])?,
                };
                let table_text = runner.llm(mode, 3, &counts, &[])?;
                Ok(parse_model_table(&table_text))
            }
        }
    })()
    .unwrap_or_else(failure_outcome);

    let backend_failed = runner
        .stages
        .iter()
        .any(|s| s.kind == StageKind::Llm && s.error.is_some());
    RunTranscript {
        instance_id: inst.id.clone(),
        mode,
        model: cfg.model.clone(),
        template_version: TEMPLATE_VERSION.to_string(),
        latency_ms: runner.stages.iter().map(|s| s.latency_ms).sum(),
        stages: runner.stages,
        tuples,
        rejected_lines: rejected,
        unknown_labels: unknown,
        outcome,
        backend_failed,
    }
}

/// Recompute the final outcome from the recorded stage outputs alone.
pub fn replay_transcript(t: &RunTranscript) -> ParsedTableOutcome {
    if let Some(stage) = t.stages.iter().find(|s| s.error.is_some()) {
        let reason = stage.error.clone().unwrap_or_default();
        let code = match stage.kind {
            StageKind::Llm => MalformedCode::BackendError,
            StageKind::Native | StageKind::External => MalformedCode::Integrator,
        };
        return ParsedTableOutcome::malformed(code, reason);
    }
    let response = |stage: u8| {
        t.stages
            .iter()
            .find(|s| s.stage == stage)
            .and_then(|s| s.response.as_deref())
    };
    match t.mode {
        PipelineMode::T2 => match response(1) {
            Some(text) => ParsedTableOutcome::Ok(integrate_with_tally(&parse_tuples(text).tuples).table),
            None => ParsedTableOutcome::malformed(MalformedCode::NoTable, "transcript has no stage 1"),
        },
        mode => match response(mode.stage_count()) {
            Some(text) => parse_model_table(text),
            None => ParsedTableOutcome::malformed(MalformedCode::NoTable, "transcript has no final stage"),
        },
    }
}

/// Run every instance with at most `cfg.parallelism` in flight. Output is in
/// dataset order. Few-shot exemplars are drawn from `dataset` itself.
pub fn run_batch(
    dataset: &[MatchInstance],
    mode: PipelineMode,
    backend: &dyn Backend,
    cfg: &RunConfig,
) -> Result<Vec<RunTranscript>> {
    Pipeline::new(backend, cfg.clone()).run_batch(dataset, mode, &|_, _| {})
}

/// Batch runner with an optional separate exemplar pool.
pub struct Pipeline<'a> {
    backend: &'a dyn Backend,
    cfg: RunConfig,
    pool: Option<&'a [MatchInstance]>,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn Backend, cfg: RunConfig) -> Self {
        Pipeline {
            backend,
            cfg,
            pool: None,
        }
    }

    pub fn with_exemplar_pool(mut self, pool: &'a [MatchInstance]) -> Self {
        self.pool = Some(pool);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// `progress(done, total)` is called after each instance completes.
    pub fn run_batch(
        &self,
        dataset: &[MatchInstance],
        mode: PipelineMode,
        progress: &(dyn Fn(usize, usize) + Sync),
    ) -> Result<Vec<RunTranscript>> {
        let exemplars: Vec<Vec<Exemplar>> = match mode {
            PipelineMode::FewShot { k, .. } => {
                let pool = self.pool.unwrap_or(dataset);
                dataset
                    .iter()
                    .map(|inst| select_exemplars(pool, &inst.id, k, self.cfg.exemplar_seed))
                    .collect::<Result<_>>()?
            }
            _ => vec![Vec::new(); dataset.len()],
        };

        let workers = self.cfg.parallelism.max(1).min(dataset.len().max(1));
        let next = AtomicUsize::new(0);
        let done = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<RunTranscript>>> = Mutex::new(vec![None; dataset.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= dataset.len() {
                        break;
                    }
                    let t = run_instance(&dataset[i], mode, self.backend, &self.cfg, &exemplars[i]);
                    slots.lock().expect("no worker panics while holding the lock")[i] = Some(t);
                    progress(done.fetch_add(1, Ordering::SeqCst) + 1, dataset.len());
                });
            }
        });
        Ok(slots
            .into_inner()
            .expect("workers finished")
            .into_iter()
            .map(|t| t.expect("every slot filled"))
            .collect())
    }
}

pub fn write_transcripts_to(transcripts: &[RunTranscript], mut w: impl Write) -> std::io::Result<()> {
    for t in transcripts {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_transcripts(transcripts: &[RunTranscript], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_transcripts_to(transcripts, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_transcripts_from(r: impl Read) -> Result<Vec<RunTranscript>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_transcripts(path: impl AsRef<Path>) -> Result<Vec<RunTranscript>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_transcripts_from(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{BackendError, OracleBackend, StubBackend};
    use crate::synth::{generate, GeneratorConfig};

    fn cfg() -> RunConfig {
        RunConfig {
            retry: RetryPolicy::immediate(3),
            ..RunConfig::default()
        }
    }

    #[test]
    fn t3_with_oracle_reproduces_truth() {
        let data = generate(&GeneratorConfig::default().with_seed(2), 5);
        let oracle = OracleBackend::new();
        for inst in &data {
            for mode in [PipelineMode::T3, PipelineMode::T3Direct, PipelineMode::T3Merged, PipelineMode::ZeroShot, PipelineMode::ZeroShotCoT, PipelineMode::T2] {
                let t = run_instance(inst, mode, &oracle, &cfg(), &[]);
                assert_eq!(t.outcome.table(), inst.ground_truth.as_ref(), "{mode}");
                assert_eq!(replay_transcript(&t), t.outcome);
                assert_eq!(t.stages.len(), usize::from(mode.stage_count()));
            }
        }
    }

    #[test]
    fn t3_native_stage_is_not_sent() {
        let inst = &generate(&GeneratorConfig::default().with_seed(4), 1)[0];
        let oracle = OracleBackend::new();
        let t = run_instance(inst, PipelineMode::T3, &oracle, &cfg(), &[]);
        assert_eq!(oracle.calls(), 2);
        assert_eq!(t.stages[1].kind, StageKind::Native);
        assert!(t.tuples.is_some());
    }

    #[test]
    fn backend_failure_is_localized() {
        let data = generate(&GeneratorConfig::default().with_seed(3), 3);
        let bad = data[1].commentary.clone();
        let stub = StubBackend::new(move |req| {
            if req.last_user().contains(&bad) {
                Err(BackendError::Transient("boom".into()))
            } else {
                Ok("Team,Goals\nHome Team,1\nAway Team,2".into())
            }
        });
        let out = run_batch(&data, PipelineMode::ZeroShot, &stub, &cfg()).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out[1].backend_failed);
        assert!(matches!(
            out[1].outcome,
            ParsedTableOutcome::Malformed { code: MalformedCode::BackendError, .. }
        ));
        assert_eq!(replay_transcript(&out[1]), out[1].outcome);
        assert!(!out[0].backend_failed && !out[2].backend_failed);
    }

    #[test]
    fn few_shot_prompts_carry_exemplars() {
        let data = generate(&GeneratorConfig::default().with_seed(8), 6);
        let stub = StubBackend::fixed("nothing");
        let mode = PipelineMode::FewShot { k: 2, with_cot: false };
        let out = run_batch(&data, mode, &stub, &cfg()).unwrap();
        assert_eq!(out[0].stages[0].prompt.len(), 5);
        assert!(!out[0].stages[0].prompt[0].content.contains(&data[0].commentary));
        let too_many = PipelineMode::FewShot { k: 6, with_cot: false };
        assert!(matches!(
            run_batch(&data, too_many, &stub, &cfg()),
            Err(Error::MissingExemplars { .. })
        ));
    }

    #[test]
    fn transcripts_round_trip_as_jsonl() {
        let data = generate(&GeneratorConfig::default().with_seed(6), 2);
        let out = run_batch(&data, PipelineMode::T3, &OracleBackend::new(), &cfg()).unwrap();
        let mut buf = Vec::new();
        write_transcripts_to(&out, &mut buf).unwrap();
        assert_eq!(read_transcripts_from(&buf[..]).unwrap(), out);
    }
}

//! Table metrics (RMSE and error rate by difficulty group), Auto-QA
//! coverage, coverage curves, and the missing/wrong tuple taxonomy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DifficultyGroup, EventTuple, EventType, SummaryTable, TeamSide};
use crate::pipeline::RunTranscript;
use crate::table_io::ParsedTableOutcome;

pub const CELLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub team: TeamSide,
    pub event: EventType,
}

impl CellIndex {
    /// Row-major position in the flattened 16-cell table.
    pub fn flat(self) -> usize {
        self.team.index() * 8 + self.event.index()
    }

    pub fn all() -> impl Iterator<Item = CellIndex> {
        TeamSide::ALL.into_iter().flat_map(|team| {
            EventType::ALL
                .into_iter()
                .map(move |event| CellIndex { team, event })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceScore {
    pub squared_errors: [f64; CELLS],
    pub matches: [bool; CELLS],
}

impl InstanceScore {
    pub fn squared_error(&self, cell: CellIndex) -> f64 {
        self.squared_errors[cell.flat()]
    }

    pub fn is_match(&self, cell: CellIndex) -> bool {
        self.matches[cell.flat()]
    }

    pub fn rmse(&self) -> f64 {
        (self.squared_errors.iter().sum::<f64>() / CELLS as f64).sqrt()
    }

    /// Percentage of mismatched cells.
    pub fn error_rate(&self) -> f64 {
        100.0 * self.matches.iter().filter(|m| !**m).count() as f64 / CELLS as f64
    }
}

pub fn score_instance(pred: &SummaryTable, truth: &SummaryTable) -> InstanceScore {
    let mut score = InstanceScore {
        squared_errors: [0.0; CELLS],
        matches: [true; CELLS],
    };
    for cell in CellIndex::all() {
        let p = f64::from(pred.get(cell.team, cell.event));
        let t = f64::from(truth.get(cell.team, cell.event));
        score.squared_errors[cell.flat()] = (p - t) * (p - t);
        score.matches[cell.flat()] = p == t;
    }
    score
}

/// How instance-level cells combine into dataset metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Squared errors and mismatches pooled over every cell of every instance.
    #[default]
    Cells,
    /// Per-instance metrics averaged with equal instance weight.
    InstanceMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub rmse: f64,
    pub error_rate: f64,
    /// Cells pooled into this metric.
    pub cells: usize,
}

impl GroupMetrics {
    pub fn mse(&self) -> f64 {
        self.rmse * self.rmse
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub easy: Option<GroupMetrics>,
    pub medium: Option<GroupMetrics>,
    pub hard: Option<GroupMetrics>,
    pub average: Option<GroupMetrics>,
    pub n_instances: usize,
    pub n_filtered_malformed: usize,
    pub pooling: Pooling,
}

impl EvalReport {
    pub fn group(&self, group: DifficultyGroup) -> Option<&GroupMetrics> {
        match group {
            DifficultyGroup::Easy => self.easy.as_ref(),
            DifficultyGroup::Medium => self.medium.as_ref(),
            DifficultyGroup::Hard => self.hard.as_ref(),
        }
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10}{:>10}{:>12}{:>8}", "Group", "RMSE", "ER (%)", "Cells");
        let rows = [
            ("Easy", &self.easy),
            ("Medium", &self.medium),
            ("Hard", &self.hard),
            ("Average", &self.average),
        ];
        for (name, metrics) in rows {
            match metrics {
                Some(m) => {
                    let _ = writeln!(
                        out,
                        "{name:<10}{:>10.3}{:>12.2}{:>8}",
                        m.rmse, m.error_rate, m.cells
                    );
                }
                None => {
                    let _ = writeln!(out, "{name:<10}{:>10}{:>12}{:>8}", "-", "-", 0);
                }
            }
        }
        let _ = writeln!(out, "scored: {}", self.n_instances);
        let _ = write!(out, "filtered: {}", self.n_filtered_malformed);
        out
    }
}

fn cells_in(group: Option<DifficultyGroup>) -> Vec<CellIndex> {
    CellIndex::all()
        .filter(|c| group.is_none_or(|g| c.event.difficulty() == g))
        .collect()
}

fn pooled(scores: &[InstanceScore], cells: &[CellIndex], pooling: Pooling) -> Option<GroupMetrics> {
    if scores.is_empty() || cells.is_empty() {
        return None;
    }
    let total = scores.len() * cells.len();
    match pooling {
        Pooling::Cells => {
            let sse: f64 = scores
                .iter()
                .flat_map(|s| cells.iter().map(move |c| s.squared_error(*c)))
                .sum();
            let wrong = scores
                .iter()
                .flat_map(|s| cells.iter().map(move |c| s.is_match(*c)))
                .filter(|m| !m)
                .count();
            Some(GroupMetrics {
                rmse: (sse / total as f64).sqrt(),
                error_rate: 100.0 * wrong as f64 / total as f64,
                cells: total,
            })
        }
        Pooling::InstanceMean => {
            let n = scores.len() as f64;
            let per_cell = cells.len() as f64;
            let (rmse_sum, er_sum) = scores.iter().fold((0.0, 0.0), |(r, e), s| {
                let sse: f64 = cells.iter().map(|c| s.squared_error(*c)).sum();
                let wrong = cells.iter().filter(|c| !s.is_match(**c)).count() as f64;
                (r + (sse / per_cell).sqrt(), e + 100.0 * wrong / per_cell)
            });
            Some(GroupMetrics {
                rmse: rmse_sum / n,
                error_rate: er_sum / n,
                cells: total,
            })
        }
    }
}

pub fn report(pairs: &[(ParsedTableOutcome, SummaryTable)]) -> EvalReport {
    report_with(pairs, Pooling::Cells)
}

/// Malformed predictions are filtered out and counted, never scored.
pub fn report_with(pairs: &[(ParsedTableOutcome, SummaryTable)], pooling: Pooling) -> EvalReport {
    let mut scores = Vec::new();
    let mut filtered = 0;
    for (outcome, truth) in pairs {
        match outcome.table() {
            Some(pred) => scores.push(score_instance(pred, truth)),
            None => filtered += 1,
        }
    }
    let metrics = |g| pooled(&scores, &cells_in(g), pooling);
    EvalReport {
        easy: metrics(Some(DifficultyGroup::Easy)),
        medium: metrics(Some(DifficultyGroup::Medium)),
        hard: metrics(Some(DifficultyGroup::Hard)),
        average: metrics(None),
        n_instances: scores.len(),
        n_filtered_malformed: filtered,
        pooling,
    }
}

// ---------------------------------------------------------------------------
// Auto-QA coverage

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub reference_answer: String,
    #[serde(default)]
    pub prescreen_passed: bool,
}

impl QaPair {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        QaPair {
            question: question.into(),
            reference_answer: answer.into(),
            prescreen_passed: false,
        }
    }
}

/// Generates question/answer pairs from a source document.
pub trait QaGenerator {
    fn generate(&self, doc: &str) -> Result<Vec<QaPair>, String>;
}

/// Answers a question from a context (the document or a rendered table).
pub trait Answerer {
    fn answer(&self, context: &str, question: &str) -> Result<String, String>;
}

/// Decides whether a candidate answer is equivalent to the reference.
pub trait Judge {
    fn equivalent(&self, question: &str, reference: &str, candidate: &str) -> Result<bool, String>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedPair {
    pub pair: QaPair,
    pub table_answer: Option<String>,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoQaResult {
    pub coverage: f64,
    pub surviving: usize,
    pub correct: usize,
    pub pairs: Vec<JudgedPair>,
}

/// Coverage of a rendered table: the fraction of pre-screened QA pairs the
/// table answers correctly. A pair survives pre-screening when its question
/// is answered correctly from the source document itself.
pub fn autoqa_coverage(
    doc: &str,
    table_render: &str,
    qa_gen: &dyn QaGenerator,
    answerer: &dyn Answerer,
    judge: &dyn Judge,
) -> Result<AutoQaResult> {
    let backend = |e: String| Error::Backend(e);
    let mut pairs = Vec::new();
    for mut pair in qa_gen.generate(doc).map_err(backend)? {
        if pair.question.trim().is_empty() {
            continue;
        }
        let from_doc = answerer.answer(doc, &pair.question).map_err(backend)?;
        pair.prescreen_passed = judge
            .equivalent(&pair.question, &pair.reference_answer, &from_doc)
            .map_err(backend)?;
        if !pair.prescreen_passed {
            pairs.push(JudgedPair {
                pair,
                table_answer: None,
                correct: false,
            });
            continue;
        }
        let from_table = answerer.answer(table_render, &pair.question).map_err(backend)?;
        let correct = judge
            .equivalent(&pair.question, &pair.reference_answer, &from_table)
            .map_err(backend)?;
        pairs.push(JudgedPair {
            pair,
            table_answer: Some(from_table),
            correct,
        });
    }
    let surviving = pairs.iter().filter(|p| p.pair.prescreen_passed).count();
    if surviving == 0 {
        return Err(Error::NoValidQaPairs);
    }
    let correct = pairs.iter().filter(|p| p.correct).count();
    Ok(AutoQaResult {
        coverage: correct as f64 / surviving as f64,
        surviving,
        correct,
        pairs,
    })
}

/// Fixed pairs, for tests and offline fixtures.
#[derive(Debug, Clone, Default)]
pub struct FixedQaGenerator {
    pub pairs: Vec<QaPair>,
}

impl QaGenerator for FixedQaGenerator {
    fn generate(&self, _doc: &str) -> Result<Vec<QaPair>, String> {
        Ok(self.pairs.clone())
    }
}

/// Looks the question up as a key in `key: value`, `key = value`,
/// `key,value` or `| key | value |` lines of the context.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyValueAnswerer;

impl Answerer for KeyValueAnswerer {
    fn answer(&self, context: &str, question: &str) -> Result<String, String> {
        let key = question.trim().trim_end_matches('?').trim().to_lowercase();
        for line in context.lines() {
            let line = line.trim().trim_matches('|');
            for sep in [':', '=', ',', '|'] {
                if let Some((k, v)) = line.split_once(sep) {
                    if k.trim().to_lowercase() == key {
                        return Ok(v.trim().trim_matches('|').trim().to_string());
                    }
                }
            }
        }
        Ok(String::new())
    }
}

/// Exact string equality after trimming; an empty candidate never matches.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchJudge;

impl Judge for ExactMatchJudge {
    fn equivalent(&self, _q: &str, reference: &str, candidate: &str) -> Result<bool, String> {
        let c = candidate.trim();
        Ok(!c.is_empty() && c == reference.trim())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Coverage threshold C, in percent.
    pub threshold: f64,
    /// Percentage P of documents whose coverage is at least C.
    pub percent: f64,
}

pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) * 10.0).collect()
}

pub fn coverage_curve(covs: &[f64], grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if covs.is_empty() {
        return Err(Error::EmptyCoverage);
    }
    const EPS: f64 = 1e-9;
    Ok(grid
        .iter()
        .map(|&threshold| {
            let hits = covs.iter().filter(|c| **c * 100.0 >= threshold - EPS).count();
            CurvePoint {
                threshold,
                percent: 100.0 * hits as f64 / covs.len() as f64,
            }
        })
        .collect())
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("threshold,percent\n");
    for p in curve {
        let _ = writeln!(out, "{},{}", p.threshold, p.percent);
    }
    out
}

// ---------------------------------------------------------------------------
// Tuple error taxonomy

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyCounts {
    pub missing: usize,
    pub wrong: usize,
    pub spurious: usize,
}

impl TaxonomyCounts {
    pub fn is_clean(&self) -> bool {
        self.missing == 0 && self.wrong == 0 && self.spurious == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub per_event: BTreeMap<EventType, TaxonomyCounts>,
    /// Errors on tuples whose label maps to no column.
    pub unclassified: TaxonomyCounts,
    pub total: TaxonomyCounts,
}

impl Diagnosis {
    fn bucket(&mut self, event: Option<EventType>) -> &mut TaxonomyCounts {
        match event {
            Some(e) => self.per_event.entry(e).or_default(),
            None => &mut self.unclassified,
        }
    }
}

fn same_actor(a: &EventTuple, b: &EventTuple) -> bool {
    a.team == b.team
        && match (&a.player, &b.player) {
            (Some(x), Some(y)) => x == y,
            _ => true,
        }
}

/// Classify the multiset difference between extracted and true tuples.
///
/// Exact matches (including player) are removed first, then matches on
/// team and label alone. Leftovers are paired as *wrong* when they share an
/// actor (same team, and the same player when both name one); the remaining
/// truth tuples are *missing* and the remaining extracted ones *spurious*.
/// Wrong and missing errors are attributed to the true label's column.
pub fn diagnose_tuples(extracted: &[EventTuple], truth: &[EventTuple]) -> Diagnosis {
    let mut ext: Vec<Option<&EventTuple>> = extracted.iter().map(Some).collect();
    let mut left_truth: Vec<&EventTuple> = Vec::new();

    let mut unmatched: Vec<&EventTuple> = Vec::new();
    for t in truth {
        match ext.iter_mut().find(|e| e.is_some_and(|e| e == t)) {
            Some(slot) => *slot = None,
            None => unmatched.push(t),
        }
    }
    for t in unmatched {
        match ext
            .iter_mut()
            .find(|e| e.is_some_and(|e| e.team == t.team && e.label == t.label))
        {
            Some(slot) => *slot = None,
            None => left_truth.push(t),
        }
    }

    let mut diag = Diagnosis::default();
    for t in left_truth {
        let paired = ext.iter_mut().find(|e| e.is_some_and(|e| same_actor(e, t)));
        let event = t.label.primary_event();
        match paired {
            Some(slot) => {
                *slot = None;
                diag.bucket(event).wrong += 1;
                diag.total.wrong += 1;
            }
            None => {
                diag.bucket(event).missing += 1;
                diag.total.missing += 1;
            }
        }
    }
    for e in ext.into_iter().flatten() {
        diag.bucket(e.label.primary_event()).spurious += 1;
        diag.total.spurious += 1;
    }
    diag
}

/// Taxonomy for one run; runs without extracted tuples count every true
/// tuple as missing.
pub fn diagnose(transcript: &RunTranscript, truth: &[EventTuple]) -> Diagnosis {
    let extracted = transcript.tuples.as_deref().unwrap_or(&[]);
    diagnose_tuples(extracted, truth)
}

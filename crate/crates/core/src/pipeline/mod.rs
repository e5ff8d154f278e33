//! Prompt assembly for every pipeline mode, chat backends, and the stage
//! orchestration that turns commentary into a table.

mod backend;
mod config;
mod run;

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::MatchInstance;
use crate::table_io::to_csv;
use crate::tuples::render_count_tuples;

pub use backend::{
    call_with_retry, Backend, BackendError, BackendFailure, CacheRecord, CachedBackend,
    LlmRequest, LlmResponse, OracleBackend, RetryPolicy, StubBackend, Usage,
};
pub use config::BackendConfig;
pub use run::{
    read_transcripts, read_transcripts_from, replay_transcript, run_batch, run_instance,
    write_transcripts, write_transcripts_to, Integrator, Pipeline, RunConfig, RunTranscript,
    StageKind, StageRecord,
};

/// Templates are versioned as a set; bump when any asset changes.
pub const TEMPLATE_VERSION: &str = "v1";

const INSTRUCTION: &str = include_str!("../../templates/instruction.txt");
const T3_EXTRACT: &str = include_str!("../../templates/t3_extract.txt");
const T3_CODE: &str = include_str!("../../templates/t3_code.txt");
const T3_TABLE: &str = include_str!("../../templates/t3_table.txt");
const T3D_INTEGRATE: &str = include_str!("../../templates/t3d_integrate.txt");
const T3M: &str = include_str!("../../templates/t3m.txt");
const BASELINE: &str = include_str!("../../templates/baseline.txt");
const BASELINE_COT: &str = include_str!("../../templates/baseline_cot.txt");

fn asset(text: &'static str) -> &'static str {
    text.trim_end_matches('\n')
}

/// The task instruction shared by every prompt.
pub fn build_instruction() -> &'static str {
    asset(INSTRUCTION)
}

/// Hex sha256 of [`build_instruction`].
pub fn instruction_hash() -> String {
    hex::encode(Sha256::digest(build_instruction().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PipelineMode {
    ZeroShot,
    ZeroShotCoT,
    FewShot { k: usize, with_cot: bool },
    T3,
    T3Merged,
    T3Direct,
    T2,
}

impl PipelineMode {
    pub const NAMES: &'static str = "zero-shot, zero-shot-cot, few-shot:<k>, few-shot-cot:<k>, t3, t3m, t3d, t2";

    pub fn stage_count(self) -> u8 {
        match self {
            PipelineMode::T3 | PipelineMode::T3Direct => 3,
            _ => 1,
        }
    }

    pub fn is_cot(self) -> bool {
        matches!(
            self,
            PipelineMode::ZeroShotCoT | PipelineMode::FewShot { with_cot: true, .. }
        )
    }

    /// Body text of the template for `stage` (1-based).
    pub fn template(self, stage: u8) -> Result<&'static str> {
        use PipelineMode::*;
        let body = match (self, stage) {
            (ZeroShot, 1) | (FewShot { with_cot: false, .. }, 1) => BASELINE,
            (ZeroShotCoT, 1) | (FewShot { with_cot: true, .. }, 1) => BASELINE_COT,
            (T3 | T3Direct | T2, 1) => T3_EXTRACT,
            (T3, 2) => T3_CODE,
            (T3Direct, 2) => T3D_INTEGRATE,
            (T3 | T3Direct, 3) => T3_TABLE,
            (T3Merged, 1) => T3M,
            _ => {
                return Err(Error::InvalidStage {
                    mode: self.to_string(),
                    stage,
                })
            }
        };
        Ok(asset(body))
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineMode::ZeroShot => f.write_str("zero-shot"),
            PipelineMode::ZeroShotCoT => f.write_str("zero-shot-cot"),
            PipelineMode::FewShot { k, with_cot: false } => write!(f, "few-shot:{k}"),
            PipelineMode::FewShot { k, with_cot: true } => write!(f, "few-shot-cot:{k}"),
            PipelineMode::T3 => f.write_str("t3"),
            PipelineMode::T3Merged => f.write_str("t3m"),
            PipelineMode::T3Direct => f.write_str("t3d"),
            PipelineMode::T2 => f.write_str("t2"),
        }
    }
}

impl FromStr for PipelineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mode = match lower.as_str() {
            "zero-shot" => PipelineMode::ZeroShot,
            "zero-shot-cot" => PipelineMode::ZeroShotCoT,
            "t3" => PipelineMode::T3,
            "t3m" => PipelineMode::T3Merged,
            "t3d" => PipelineMode::T3Direct,
            "t2" => PipelineMode::T2,
            other => {
                let (with_cot, k) = if let Some(k) = other.strip_prefix("few-shot-cot:") {
                    (true, k)
                } else if let Some(k) = other.strip_prefix("few-shot:") {
                    (false, k)
                } else {
                    return Err(Error::UnknownMode(s.to_string()));
                };
                let k = k
                    .parse::<usize>()
                    .ok()
                    .filter(|k| *k > 0)
                    .ok_or_else(|| Error::UnknownMode(s.to_string()))?;
                PipelineMode::FewShot { k, with_cot }
            }
        };
        Ok(mode)
    }
}

impl Serialize for PipelineMode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PipelineMode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// One worked example shown before the real query in few-shot modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exemplar {
    pub commentary: String,
    pub table_csv: String,
    /// Count tuples spelled out before the table; shown only in CoT modes.
    pub reasoning: String,
}

impl Exemplar {
    /// Panics if the instance has no ground truth.
    pub fn from_instance(inst: &MatchInstance) -> Exemplar {
        let truth = inst
            .ground_truth
            .as_ref()
            .expect("exemplar instances carry ground truth");
        Exemplar {
            commentary: inst.commentary.clone(),
            table_csv: to_csv(truth),
            reasoning: format!(
                "Counting each event for both teams gives:\n{}",
                render_count_tuples(truth)
            ),
        }
    }

    fn answer(&self, with_cot: bool) -> String {
        if with_cot {
            format!("{}\nSo the table is:\n{}", self.reasoning, self.table_csv)
        } else {
            self.table_csv.clone()
        }
    }
}

fn fill(instruction: &str, body: &str, payload: &str) -> String {
    format!("{instruction}\n\n{body}\n\n{payload}")
}

/// Messages for one stage. Few-shot modes prepend one user/assistant pair
/// per exemplar; every other mode produces a single user message.
pub fn build_prompt(
    mode: PipelineMode,
    stage: u8,
    instruction: &str,
    payload: &str,
    exemplars: &[Exemplar],
) -> Result<Vec<ChatMessage>> {
    let body = mode.template(stage)?;
    let mut messages = Vec::new();
    if let PipelineMode::FewShot { k, with_cot } = mode {
        if exemplars.len() != k {
            return Err(Error::MissingExemplars {
                needed: k,
                got: exemplars.len(),
            });
        }
        for ex in exemplars {
            messages.push(ChatMessage::user(fill(instruction, body, &ex.commentary)));
            messages.push(ChatMessage::assistant(ex.answer(with_cot)));
        }
    }
    messages.push(ChatMessage::user(fill(instruction, body, payload)));
    Ok(messages)
}

/// Seeded choice of `k` exemplars for `target`, preferring instances where
/// every event type occurs and topping up with the busiest remaining ones.
pub fn select_exemplars(
    pool: &[MatchInstance],
    target_id: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<Exemplar>> {
    let candidates: Vec<&MatchInstance> = pool
        .iter()
        .filter(|i| i.id != target_id && i.ground_truth.is_some())
        .collect();
    if candidates.len() < k {
        return Err(Error::MissingExemplars {
            needed: k,
            got: candidates.len(),
        });
    }
    let key = Sha256::digest(format!("{seed}:{target_id}").as_bytes());
    let mut rng = ChaCha8Rng::from_seed(key.into());

    let (full, mut partial): (Vec<&MatchInstance>, Vec<&MatchInstance>) = candidates
        .into_iter()
        .partition(|i| i.ground_truth.as_ref().is_some_and(|t| t.all_events_occur()));
    let mut chosen: Vec<&MatchInstance> = full.choose_multiple(&mut rng, k).copied().collect();
    if chosen.len() < k {
        partial.sort_by_key(|i| {
            std::cmp::Reverse(i.ground_truth.as_ref().map_or(0, |t| t.events_occurring()))
        });
        chosen.extend(partial.into_iter().take(k - chosen.len()));
    }
    Ok(chosen.into_iter().map(Exemplar::from_instance).collect())
}

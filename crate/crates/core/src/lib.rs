//! Text-to-table toolkit for match commentary: tuple extraction and
//! integration, table parsing, prompt pipelines over chat backends,
//! metrics, and a seeded synthetic commentary generator.

pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod table_io;
pub mod synth;
pub mod tuples;

pub use error::{Error, Result};
pub use model::{
    difficulty_of, normalize_label, AnnotationSet, DifficultyGroup, EventTuple, EventType,
    MatchInstance, PlayerTag, RawEventLabel, SummaryTable, TeamSide,
};
pub use table_io::{parse_model_table, to_csv, MalformedCode, ParsedTableOutcome};
pub use tuples::{aggregate_majority, integrate, parse_tuples, TupleParseReport};
pub use evaluation::{
    autoqa_coverage, coverage_curve, diagnose, report, report_with, score_instance, EvalReport,
    Pooling,
};
pub use pipeline::{
    build_instruction, build_prompt, replay_transcript, run_batch, run_instance, Backend,
    PipelineMode, RunConfig, RunTranscript,
};
pub use synth::{anonymize, generate, oracle_extract, GeneratorConfig};

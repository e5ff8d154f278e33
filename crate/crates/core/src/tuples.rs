//! Stage-1 tuple parsing and deterministic integration into summary tables.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    normalize_label, AnnotationSet, EventTuple, EventType, PlayerTag, SummaryTable, TeamSide,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedLine {
    /// 1-based line number in the parsed text.
    pub line_no: usize,
    pub line: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleParseReport {
    pub tuples: Vec<EventTuple>,
    pub rejected_lines: Vec<RejectedLine>,
    pub unknown_label_count: usize,
}

fn player_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bplayer\s*0*([1-9][0-9]*)\b").unwrap())
}

/// Top-level parenthesized groups of a line, without the outer parens.
fn paren_groups(line: &str) -> Vec<&str> {
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in line.char_indices() {
        match c {
            '(' => {
                if depth == 0 {
                    start = i + 1;
                }
                depth += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push(&line[start..i]);
                }
            }
            _ => {}
        }
    }
    groups
}

/// Split on commas that are not nested inside parentheses.
fn split_fields(group: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in group.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => fields.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    fields.push(current);
    fields
        .into_iter()
        .map(|f| {
            f.trim()
                .trim_matches(|c: char| c == '\'' || c == '"' || c == '`' || c == '*')
                .trim()
                .to_string()
        })
        .collect()
}

fn parse_player(field: &str) -> Option<PlayerTag> {
    let caps = player_regex().captures(field)?;
    caps[1].parse::<u32>().ok().and_then(|n| PlayerTag::new(n).ok())
}

enum GroupParse {
    Tuple(EventTuple),
    Rejected(&'static str),
    NotATuple,
}

fn parse_group(group: &str) -> GroupParse {
    let fields = split_fields(group);
    if fields.iter().any(|f| f.is_empty()) {
        return GroupParse::NotATuple;
    }
    let (player, team_field, event_field) = match fields.as_slice() {
        [team, event] => (None, team.as_str(), event.as_str()),
        [player, team, event] => {
            // "(Home Team, goals, 3)" is an integrated count, not an event
            if TeamSide::resolve(player).is_some() && event.parse::<u64>().is_ok() {
                return GroupParse::Rejected("count tuple");
            }
            (parse_player(player), team.as_str(), event.as_str())
        }
        _ => return GroupParse::NotATuple,
    };
    let Some(team) = TeamSide::resolve(team_field) else {
        return GroupParse::Rejected("unresolvable team");
    };
    GroupParse::Tuple(EventTuple::new(player, team, normalize_label(event_field)))
}

/// Recover `(player, team, event)` / `(team, event)` tuples from free-form
/// model output. Numbering, bullets and surrounding prose are ignored.
pub fn parse_tuples(text: &str) -> TupleParseReport {
    let mut report = TupleParseReport::default();
    for (idx, line) in text.lines().enumerate() {
        for group in paren_groups(line) {
            match parse_group(group) {
                GroupParse::Tuple(t) => {
                    if t.label.is_unknown() {
                        report.unknown_label_count += 1;
                    }
                    report.tuples.push(t);
                }
                GroupParse::Rejected(reason) => report.rejected_lines.push(RejectedLine {
                    line_no: idx + 1,
                    line: line.to_string(),
                    reason: reason.to_string(),
                }),
                GroupParse::NotATuple => {}
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Integration {
    pub table: SummaryTable,
    /// Tuples whose label was `Unknown` and contributed nothing.
    pub unknown: usize,
}

/// Count tuples into a summary table. Goals also count as shots, and a
/// second yellow card counts as both a red and a yellow card.
pub fn integrate(tuples: &[EventTuple]) -> SummaryTable {
    integrate_with_tally(tuples).table
}

pub fn integrate_with_tally(tuples: &[EventTuple]) -> Integration {
    let mut out = Integration::default();
    for tuple in tuples {
        let increments = tuple.label.increments();
        if increments.is_empty() {
            out.unknown += 1;
        }
        for event in increments {
            out.table.increment(tuple.team, *event);
        }
    }
    out
}

/// Render an integrated table as count tuples, one per cell, the payload
/// format fed to the tuple-to-table stage.
pub fn render_count_tuples(table: &SummaryTable) -> String {
    let mut out = String::new();
    for (team, event, value) in table.cells() {
        out.push_str(&format!("({team}, {}, {value})\n", event.header().to_lowercase()));
    }
    out
}

/// Inverse of [`render_count_tuples`]; tolerant of missing cells (left at 0)
/// and unknown headers (ignored).
pub fn parse_count_tuples(text: &str) -> SummaryTable {
    let mut table = SummaryTable::zero();
    for line in text.lines() {
        for group in paren_groups(line) {
            let fields = split_fields(group);
            let [team, event, value] = fields.as_slice() else {
                continue;
            };
            let (Some(team), Ok(value)) = (TeamSide::resolve(team), value.parse::<u32>()) else {
                continue;
            };
            let key = crate::model::normalize_key(event).replace(' ', "");
            if let Some(event) = EventType::ALL
                .into_iter()
                .find(|e| e.header().to_lowercase().replace(' ', "") == key)
            {
                table.set(team, event, value);
            }
        }
    }
    table
}

/// Render raw tuples one per line, the payload for stage 2.
pub fn render_tuples(tuples: &[EventTuple]) -> String {
    let mut out = String::new();
    for t in tuples {
        out.push_str(&t.to_string());
        out.push('\n');
    }
    out
}

/// Cell-wise mode across annotators; ties resolve to the smallest value.
pub fn aggregate_majority(votes: &AnnotationSet) -> Result<SummaryTable> {
    if votes.tables.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let mut out = SummaryTable::zero();
    for team in TeamSide::ALL {
        for event in EventType::ALL {
            let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
            for table in &votes.tables {
                *counts.entry(table.get(team, event)).or_default() += 1;
            }
            // BTreeMap iterates ascending, so the first maximum is the smallest tied value
            let mut best = (0u32, 0usize);
            for (value, n) in counts {
                if n > best.1 {
                    best = (value, n);
                }
            }
            out.set(team, event, best.0);
        }
    }
    Ok(out)
}

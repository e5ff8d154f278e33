#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use t3_core::model::{EventTuple, EventType, PlayerTag, RawEventLabel, SummaryTable, TeamSide};

/// Ground truth of the worked match report.
pub fn report_truth() -> SummaryTable {
    SummaryTable::from_rows([0, 5, 6, 1, 0, 5, 6, 6], [3, 12, 6, 0, 0, 3, 6, 2])
}

pub struct CaseStudy {
    pub name: &'static str,
    pub table: SummaryTable,
    pub rmse: f64,
    pub error_rate: f64,
}

fn case(name: &'static str, away: [u32; 8], home: [u32; 8], rmse: f64, error_rate: f64) -> CaseStudy {
    CaseStudy {
        name,
        table: SummaryTable::from_rows(home, away),
        rmse,
        error_rate,
    }
}

/// The eight published case-study tables (rows printed away-first) with
/// their printed RMSE and error rate.
pub fn case_studies() -> Vec<CaseStudy> {
    vec![
        case("Claude 2.1 w/o T3", [3, 13, 10, 0, 0, 3, 5, 4], [0, 10, 7, 1, 0, 5, 6, 3], 1.888, 43.75),
        case("Claude 2.1 w/ T3", [3, 12, 4, 0, 0, 3, 6, 2], [0, 5, 7, 1, 0, 6, 6, 5], 0.661, 25.00),
        case("Mistral Large w/o T3", [3, 10, 7, 0, 0, 3, 10, 2], [0, 8, 7, 1, 0, 4, 7, 5], 1.458, 50.00),
        case("Mistral Large w/ T3", [3, 12, 6, 0, 0, 3, 4, 2], [0, 5, 5, 1, 0, 5, 5, 6], 0.612, 18.75),
        case("GPT-4 w/o T3", [3, 10, 6, 0, 0, 3, 5, 2], [0, 11, 9, 1, 0, 5, 7, 6], 1.785, 31.25),
        case("GPT-4 w/ T3", [3, 12, 5, 0, 0, 3, 5, 2], [0, 5, 6, 1, 0, 5, 5, 6], 0.433, 18.75),
        case("Claude 3 Opus w/o T3", [3, 18, 7, 0, 0, 2, 7, 3], [0, 9, 7, 1, 0, 5, 9, 5], 2.046, 56.25),
        case("Claude 3 Opus w/ T3", [3, 12, 6, 0, 0, 3, 6, 2], [0, 5, 6, 1, 0, 5, 6, 6], 0.000, 0.00),
    ]
}

/// Column increments written out directly from the counting rules in the
/// task instruction, independent of the library's label table.
pub fn naive_columns(canonical: &str) -> Vec<EventType> {
    use EventType::*;
    match canonical {
        "goal" => vec![Goals, Shots],
        "shot" | "saved_attempt" | "blocked_attempt" | "missed_attempt" => vec![Shots],
        "foul" | "handball" | "dangerous_play" => vec![Fouls],
        "yellow_card" => vec![YellowCards],
        "red_card" => vec![RedCards],
        "second_yellow_card" => vec![RedCards, YellowCards],
        "corner_kick" => vec![CornerKicks],
        "free_kick" | "penalty" => vec![FreeKicks],
        "offside" => vec![Offsides],
        _ => vec![],
    }
}

/// Recount from scratch with plain arrays.
pub fn naive_count(tuples: &[EventTuple]) -> [[u32; 8]; 2] {
    let mut grid = [[0u32; 8]; 2];
    for t in tuples {
        let row = if t.team == TeamSide::Home { 0 } else { 1 };
        for e in naive_columns(t.label.canonical()) {
            let col = EventType::ALL.iter().position(|x| *x == e).unwrap();
            grid[row][col] += 1;
        }
    }
    grid
}

pub fn random_tuple(rng: &mut impl Rng) -> EventTuple {
    let team = if rng.random_bool(0.5) { TeamSide::Home } else { TeamSide::Away };
    let label = if rng.random_ratio(1, 20) {
        RawEventLabel::Unknown("throw-in".into())
    } else {
        RawEventLabel::KNOWN[rng.random_range(0..RawEventLabel::KNOWN.len())].clone()
    };
    let player = rng
        .random_bool(0.7)
        .then(|| PlayerTag::new(rng.random_range(1..=40)).unwrap());
    EventTuple::new(player, team, label)
}

pub fn random_table(rng: &mut impl Rng, max: u32) -> SummaryTable {
    let mut rows = [[0u32; 8]; 2];
    for row in rows.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random_range(0..=max);
        }
    }
    SummaryTable::from_rows(rows[0], rows[1])
}

/// CSV rendering with shuffled columns and rows.
pub fn permuted_csv(table: &SummaryTable, rng: &mut impl Rng) -> String {
    let mut cols: Vec<EventType> = EventType::ALL.to_vec();
    cols.shuffle(rng);
    let mut teams = TeamSide::ALL.to_vec();
    teams.shuffle(rng);
    let mut lines = vec![std::iter::once("Team".to_string())
        .chain(cols.iter().map(|c| c.header().to_string()))
        .collect::<Vec<_>>()
        .join(",")];
    for team in teams {
        lines.push(
            std::iter::once(team.label().to_string())
                .chain(cols.iter().map(|c| table.get(team, *c).to_string()))
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    lines.join("\n")
}

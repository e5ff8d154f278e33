//! CSV rendering of summary tables and recovery of tables from free-form
//! model output (CSV, markdown pipe tables, tab-separated).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{EventType, SummaryTable, TeamSide};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedCode {
    NoTable,
    MissingColumns,
    MissingTeamRows,
    BadCell,
    BackendError,
    Integrator,
}

impl MalformedCode {
    pub fn as_str(self) -> &'static str {
        match self {
            MalformedCode::NoTable => "no_table",
            MalformedCode::MissingColumns => "missing_columns",
            MalformedCode::MissingTeamRows => "missing_team_rows",
            MalformedCode::BadCell => "bad_cell",
            MalformedCode::BackendError => "backend_error",
            MalformedCode::Integrator => "integrator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedTableOutcome {
    Ok(SummaryTable),
    Malformed { code: MalformedCode, reason: String },
}

impl ParsedTableOutcome {
    pub fn malformed(code: MalformedCode, reason: impl Into<String>) -> Self {
        ParsedTableOutcome::Malformed {
            code,
            reason: reason.into(),
        }
    }

    pub fn table(&self) -> Option<&SummaryTable> {
        match self {
            ParsedTableOutcome::Ok(t) => Some(t),
            ParsedTableOutcome::Malformed { .. } => None,
        }
    }

    pub fn is_malformed(&self) -> bool {
        self.table().is_none()
    }
}

impl fmt::Display for ParsedTableOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParsedTableOutcome::Ok(t) => f.write_str(&to_csv(t)),
            ParsedTableOutcome::Malformed { code, reason } => {
                write!(f, "malformed [{}]: {reason}", code.as_str())
            }
        }
    }
}

pub const CSV_HEADER: &str =
    "Team,Goals,Shots,Fouls,Yellow Cards,Red Cards,Corner Kicks,Free Kicks,Offsides";

/// Header line, then the Home Team row, then the Away Team row. LF line
/// endings, no trailing newline.
pub fn to_csv(table: &SummaryTable) -> String {
    let mut lines = vec![CSV_HEADER.to_string()];
    for team in TeamSide::ALL {
        let mut line = team.label().to_string();
        for value in table.row(team) {
            line.push(',');
            line.push_str(&value.to_string());
        }
        lines.push(line);
    }
    lines.join("\n")
}

/// Markdown pipe rendering, used for display and fixtures.
pub fn to_markdown(table: &SummaryTable) -> String {
    let mut out = String::from("| Team |");
    for e in EventType::ALL {
        out.push_str(&format!(" {} |", e.header()));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(8));
    for team in TeamSide::ALL {
        out.push_str(&format!("\n| {} |", team.label()));
        for v in table.row(team) {
            out.push_str(&format!(" {v} |"));
        }
    }
    out
}

/// Lowercase alphanumerics with everything else removed.
fn header_key(cell: &str) -> String {
    cell.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn event_for_header(cell: &str) -> Option<EventType> {
    let key = header_key(cell);
    if key.is_empty() {
        return None;
    }
    EventType::ALL.into_iter().find(|e| {
        let canon = header_key(e.header());
        key == canon || canon.strip_suffix('s') == Some(key.as_str())
    })
}

fn split_row(line: &str) -> Option<Vec<String>> {
    let trimmed = line.trim();
    let cells: Vec<&str> = if trimmed.contains('|') {
        let inner = trimmed.strip_prefix('|').unwrap_or(trimmed);
        let inner = inner.strip_suffix('|').unwrap_or(inner);
        inner.split('|').collect()
    } else if trimmed.contains('\t') {
        trimmed.split('\t').collect()
    } else if trimmed.contains(',') {
        trimmed.split(',').collect()
    } else {
        return None;
    };
    Some(
        cells
            .into_iter()
            .map(|c| c.trim().trim_matches('*').trim().to_string())
            .collect(),
    )
}

fn is_separator(cells: &[String]) -> bool {
    cells.iter().all(|c| {
        !c.is_empty() && c.chars().all(|ch| matches!(ch, '-' | ':' | '=' | ' '))
    })
}

/// Consecutive delimited lines form one candidate block.
fn candidate_blocks(text: &str) -> Vec<Vec<Vec<String>>> {
    let mut blocks = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        match split_row(line) {
            Some(cells) if !is_separator(&cells) => current.push(cells),
            Some(_) => {}
            None => {
                if !current.is_empty() {
                    blocks.push(std::mem::take(&mut current));
                }
            }
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    blocks
}

fn parse_cell(cell: &str) -> Option<u32> {
    let c = cell.trim();
    if c.is_empty() || !c.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    c.parse().ok()
}

fn parse_block(rows: &[Vec<String>]) -> ParsedTableOutcome {
    // header = first row with the most resolvable event columns
    let mut header: Option<(usize, [Option<usize>; 8], usize)> = None;
    for (ri, row) in rows.iter().enumerate() {
        let mut columns = [None; 8];
        for (ci, cell) in row.iter().enumerate() {
            if let Some(e) = event_for_header(cell) {
                columns[e.index()].get_or_insert(ci);
            }
        }
        let found = columns.iter().filter(|c| c.is_some()).count();
        if found > 0 && header.as_ref().is_none_or(|h| found > h.2) {
            header = Some((ri, columns, found));
        }
    }
    let Some((header_row, columns, found)) = header else {
        return ParsedTableOutcome::malformed(MalformedCode::NoTable, "no table found");
    };
    if found < 8 {
        let missing: Vec<&str> = EventType::ALL
            .iter()
            .filter(|e| columns[e.index()].is_none())
            .map(|e| e.header())
            .collect();
        return ParsedTableOutcome::malformed(
            MalformedCode::MissingColumns,
            format!("missing columns: {}", missing.join(", ")),
        );
    }
    let event_cols: Vec<usize> = columns.iter().flatten().copied().collect();

    let mut team_rows: [Option<&Vec<String>>; 2] = [None, None];
    for row in &rows[header_row + 1..] {
        let label: String = row
            .iter()
            .enumerate()
            .filter(|(ci, _)| !event_cols.contains(ci))
            .map(|(_, c)| c.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if let Some(team) = TeamSide::resolve(&label) {
            team_rows[team.index()].get_or_insert(row);
        }
    }
    let (Some(home), Some(away)) = (team_rows[0], team_rows[1]) else {
        return ParsedTableOutcome::malformed(
            MalformedCode::MissingTeamRows,
            "fewer than 2 team rows",
        );
    };

    let mut table = SummaryTable::zero();
    for (team, row) in [(TeamSide::Home, home), (TeamSide::Away, away)] {
        for event in EventType::ALL {
            let ci = columns[event.index()].expect("all columns resolved");
            let cell = row.get(ci).map(String::as_str).unwrap_or("");
            match parse_cell(cell) {
                Some(v) => table.set(team, event, v),
                None => {
                    return ParsedTableOutcome::malformed(
                        MalformedCode::BadCell,
                        format!("{team} / {}: {cell:?} is not a count", event.header()),
                    )
                }
            }
        }
    }
    ParsedTableOutcome::Ok(table)
}

/// Recover a summary table from raw model output. The first structurally
/// valid table wins; otherwise the first candidate's failure is reported.
pub fn parse_model_table(text: &str) -> ParsedTableOutcome {
    let mut first_failure = None;
    for block in candidate_blocks(text) {
        match parse_block(&block) {
            ok @ ParsedTableOutcome::Ok(_) => return ok,
            ParsedTableOutcome::Malformed { code: MalformedCode::NoTable, .. } => {}
            failure => {
                first_failure.get_or_insert(failure);
            }
        }
    }
    first_failure.unwrap_or_else(|| {
        ParsedTableOutcome::malformed(MalformedCode::NoTable, "no table found")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure5() -> SummaryTable {
        SummaryTable::from_rows([0, 5, 6, 1, 0, 5, 6, 6], [3, 12, 6, 0, 0, 3, 6, 2])
    }

    #[test]
    fn zero_table_csv() {
        assert_eq!(
            to_csv(&SummaryTable::zero()),
            format!("{CSV_HEADER}\nHome Team,0,0,0,0,0,0,0,0\nAway Team,0,0,0,0,0,0,0,0")
        );
    }

    #[test]
    fn figure5_csv_rows() {
        let csv = to_csv(&figure5());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "Home Team,0,5,6,1,0,5,6,6");
        assert_eq!(lines[2], "Away Team,3,12,6,0,0,3,6,2");
        assert!(!csv.contains('\r'));
        assert!(lines.iter().all(|l| l.trim_end() == *l));
    }

    #[test]
    fn markdown_matches_csv_parse() {
        let md = "Here is the summary:\n\n\
            | Team | Goals | Shots | Fouls | Yellow Cards | Red Cards | Corner Kicks | Free Kicks | Offsides |\n\
            |------|-------|-------|-------|--------------|-----------|--------------|------------|----------|\n\
            | Home Team | 0 | 5 | 6 | 1 | 0 | 5 | 6 | 6 |\n\
            | Away Team | 3 | 12 | 6 | 0 | 0 | 3 | 6 | 2 |\n";
        let from_md = parse_model_table(md);
        let from_csv = parse_model_table(&to_csv(&figure5()));
        assert_eq!(from_md, ParsedTableOutcome::Ok(figure5()));
        assert_eq!(from_md, from_csv);
        assert_eq!(parse_model_table(&to_markdown(&figure5())), from_csv);
    }

    #[test]
    fn prose_only_is_no_table() {
        assert_eq!(
            parse_model_table("I could not find any events in this match."),
            ParsedTableOutcome::malformed(MalformedCode::NoTable, "no table found")
        );
    }

    #[test]
    fn permuted_columns_and_rows() {
        let permuted = "Team,Offsides,Goals,Shots,Fouls,Yellow Cards,Red Cards,Corner Kicks,Free Kicks\n\
                        Away Team,2,3,12,6,0,0,3,6\n\
                        Home Team,6,0,5,6,1,0,5,6";
        assert_eq!(parse_model_table(permuted), parse_model_table(&to_csv(&figure5())));
    }

    #[test]
    fn fuzzy_headers_and_fences() {
        let text = "```csv\nteam,GOALS,shots,Fouls,yellowcards,Red_Cards,corner-kicks,Free Kicks,offside\n\
                    home team,0,5,6,1,0,5,6,6\naway team,3,12,6,0,0,3,6,2\n```";
        assert_eq!(parse_model_table(text), ParsedTableOutcome::Ok(figure5()));
    }

    #[test]
    fn filler_cells_are_malformed() {
        for filler in ["unknown", "not mentioned", "N/A", "-", "", "1.5", "-1"] {
            let text = format!(
                "{CSV_HEADER}\nHome Team,0,5,6,1,{filler},5,6,6\nAway Team,3,12,6,0,0,3,6,2"
            );
            let out = parse_model_table(&text);
            assert!(
                matches!(out, ParsedTableOutcome::Malformed { code: MalformedCode::BadCell, .. }),
                "{filler}: {out:?}"
            );
        }
    }

    #[test]
    fn missing_pieces() {
        let one_row = format!("{CSV_HEADER}\nHome Team,0,5,6,1,0,5,6,6");
        assert!(matches!(
            parse_model_table(&one_row),
            ParsedTableOutcome::Malformed { code: MalformedCode::MissingTeamRows, .. }
        ));
        let seven = "Team,Goals,Shots,Fouls,Yellow Cards,Red Cards,Corner Kicks,Free Kicks\n\
                     Home Team,0,5,6,1,0,5,6\nAway Team,3,12,6,0,0,3,6";
        let out = parse_model_table(seven);
        assert!(matches!(
            out,
            ParsedTableOutcome::Malformed { code: MalformedCode::MissingColumns, .. }
        ));
    }

    #[test]
    fn first_valid_table_wins() {
        let bad = format!("{CSV_HEADER}\nHome Team,x,5,6,1,0,5,6,6\nAway Team,3,12,6,0,0,3,6,2");
        let good = to_csv(&figure5());
        let other = to_csv(&SummaryTable::zero());
        let text = format!("{bad}\n\nCorrected:\n{good}\n\nAlternative:\n{other}");
        assert_eq!(parse_model_table(&text), ParsedTableOutcome::Ok(figure5()));
    }
}

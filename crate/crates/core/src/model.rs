//! Domain types shared across the crate: event taxonomy, team sides,
//! extracted tuples and the 2 x 8 summary table.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// The eight summary columns, in table-header order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    Goals,
    Shots,
    Fouls,
    YellowCards,
    RedCards,
    CornerKicks,
    FreeKicks,
    Offsides,
}

impl EventType {
    pub const ALL: [EventType; 8] = [
        EventType::Goals,
        EventType::Shots,
        EventType::Fouls,
        EventType::YellowCards,
        EventType::RedCards,
        EventType::CornerKicks,
        EventType::FreeKicks,
        EventType::Offsides,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column header as written in the CSV table.
    pub fn header(self) -> &'static str {
        match self {
            EventType::Goals => "Goals",
            EventType::Shots => "Shots",
            EventType::Fouls => "Fouls",
            EventType::YellowCards => "Yellow Cards",
            EventType::RedCards => "Red Cards",
            EventType::CornerKicks => "Corner Kicks",
            EventType::FreeKicks => "Free Kicks",
            EventType::Offsides => "Offsides",
        }
    }

    pub fn difficulty(self) -> DifficultyGroup {
        difficulty_of(self)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifficultyGroup {
    Easy,
    Medium,
    Hard,
}

impl DifficultyGroup {
    pub const ALL: [DifficultyGroup; 3] =
        [DifficultyGroup::Easy, DifficultyGroup::Medium, DifficultyGroup::Hard];

    pub fn members(self) -> impl Iterator<Item = EventType> {
        EventType::ALL
            .into_iter()
            .filter(move |e| difficulty_of(*e) == self)
    }
}

impl fmt::Display for DifficultyGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DifficultyGroup::Easy => "Easy",
            DifficultyGroup::Medium => "Medium",
            DifficultyGroup::Hard => "Hard",
        })
    }
}

/// Goals and red cards are easy, shots and fouls hard, the rest medium.
pub fn difficulty_of(event: EventType) -> DifficultyGroup {
    match event {
        EventType::Goals | EventType::RedCards => DifficultyGroup::Easy,
        EventType::Shots | EventType::Fouls => DifficultyGroup::Hard,
        EventType::YellowCards
        | EventType::CornerKicks
        | EventType::FreeKicks
        | EventType::Offsides => DifficultyGroup::Medium,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TeamSide {
    Home,
    Away,
}

impl TeamSide {
    pub const ALL: [TeamSide; 2] = [TeamSide::Home, TeamSide::Away];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            TeamSide::Home => "Home Team",
            TeamSide::Away => "Away Team",
        }
    }

    pub fn opponent(self) -> TeamSide {
        match self {
            TeamSide::Home => TeamSide::Away,
            TeamSide::Away => TeamSide::Home,
        }
    }

    /// Case-insensitive resolution on "home"/"away". Text mentioning both
    /// or neither is unresolvable.
    pub fn resolve(text: &str) -> Option<TeamSide> {
        let lower = text.to_ascii_lowercase();
        match (lower.contains("home"), lower.contains("away")) {
            (true, false) => Some(TeamSide::Home),
            (false, true) => Some(TeamSide::Away),
            _ => None,
        }
    }
}

impl fmt::Display for TeamSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for TeamSide {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for TeamSide {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "Home Team" => Ok(TeamSide::Home),
            "Away Team" => Ok(TeamSide::Away),
            other => Err(serde::de::Error::custom(format!("unknown team {other:?}"))),
        }
    }
}

/// Surface event labels that stage-1 extraction may emit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawEventLabel {
    Goal,
    Shot,
    SavedAttempt,
    BlockedAttempt,
    MissedAttempt,
    Foul,
    Handball,
    DangerousPlay,
    YellowCard,
    RedCard,
    SecondYellowCard,
    CornerKick,
    FreeKick,
    Penalty,
    Offside,
    Unknown(String),
}

impl RawEventLabel {
    /// The 15 known labels, in declaration order.
    pub const KNOWN: [RawEventLabel; 15] = [
        RawEventLabel::Goal,
        RawEventLabel::Shot,
        RawEventLabel::SavedAttempt,
        RawEventLabel::BlockedAttempt,
        RawEventLabel::MissedAttempt,
        RawEventLabel::Foul,
        RawEventLabel::Handball,
        RawEventLabel::DangerousPlay,
        RawEventLabel::YellowCard,
        RawEventLabel::RedCard,
        RawEventLabel::SecondYellowCard,
        RawEventLabel::CornerKick,
        RawEventLabel::FreeKick,
        RawEventLabel::Penalty,
        RawEventLabel::Offside,
    ];

    pub fn canonical(&self) -> &str {
        match self {
            RawEventLabel::Goal => "goal",
            RawEventLabel::Shot => "shot",
            RawEventLabel::SavedAttempt => "saved_attempt",
            RawEventLabel::BlockedAttempt => "blocked_attempt",
            RawEventLabel::MissedAttempt => "missed_attempt",
            RawEventLabel::Foul => "foul",
            RawEventLabel::Handball => "handball",
            RawEventLabel::DangerousPlay => "dangerous_play",
            RawEventLabel::YellowCard => "yellow_card",
            RawEventLabel::RedCard => "red_card",
            RawEventLabel::SecondYellowCard => "second_yellow_card",
            RawEventLabel::CornerKick => "corner_kick",
            RawEventLabel::FreeKick => "free_kick",
            RawEventLabel::Penalty => "penalty",
            RawEventLabel::Offside => "offside",
            RawEventLabel::Unknown(text) => text,
        }
    }

    /// Human phrasing used inside prompts and tuple lines ("saved attempt").
    pub fn phrase(&self) -> String {
        match self {
            RawEventLabel::Unknown(text) => text.clone(),
            known => known.canonical().replace('_', " "),
        }
    }

    pub fn is_unknown(&self) -> bool {
        matches!(self, RawEventLabel::Unknown(_))
    }

    /// Column increments applied by integration for one occurrence.
    pub fn increments(&self) -> &'static [EventType] {
        use EventType::*;
        match self {
            RawEventLabel::Goal => &[Goals, Shots],
            RawEventLabel::Shot
            | RawEventLabel::SavedAttempt
            | RawEventLabel::BlockedAttempt
            | RawEventLabel::MissedAttempt => &[Shots],
            RawEventLabel::Foul | RawEventLabel::Handball | RawEventLabel::DangerousPlay => {
                &[Fouls]
            }
            RawEventLabel::YellowCard => &[YellowCards],
            RawEventLabel::RedCard => &[RedCards],
            RawEventLabel::SecondYellowCard => &[RedCards, YellowCards],
            RawEventLabel::CornerKick => &[CornerKicks],
            RawEventLabel::FreeKick | RawEventLabel::Penalty => &[FreeKicks],
            RawEventLabel::Offside => &[Offsides],
            RawEventLabel::Unknown(_) => &[],
        }
    }

    /// The column this label is chiefly about, used for error taxonomy.
    pub fn primary_event(&self) -> Option<EventType> {
        self.increments().first().copied()
    }
}

impl fmt::Display for RawEventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

impl Serialize for RawEventLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.canonical())
    }
}

impl<'de> Deserialize<'de> for RawEventLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(normalize_label(&s))
    }
}

struct SynonymTable {
    exact: BTreeMap<String, RawEventLabel>,
    contains: Vec<(String, RawEventLabel)>,
}

static LABEL_DATA: &str = include_str!("../data/labels.txt");

fn synonyms() -> &'static SynonymTable {
    static TABLE: OnceLock<SynonymTable> = OnceLock::new();
    TABLE.get_or_init(|| parse_synonym_table(LABEL_DATA))
}

fn label_from_canonical(name: &str) -> Option<RawEventLabel> {
    RawEventLabel::KNOWN
        .iter()
        .find(|l| l.canonical() == name)
        .cloned()
}

fn parse_synonym_table(data: &str) -> SynonymTable {
    let mut exact = BTreeMap::new();
    let mut contains = Vec::new();
    let mut in_contains = false;
    for line in data.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line {
            "[exact]" => {
                in_contains = false;
                continue;
            }
            "[contains]" => {
                in_contains = true;
                continue;
            }
            _ => {}
        }
        let (name, phrases) = line
            .split_once(':')
            .unwrap_or_else(|| panic!("labels.txt: missing ':' in {line:?}"));
        let label = label_from_canonical(name.trim())
            .unwrap_or_else(|| panic!("labels.txt: unknown label {name:?}"));
        for phrase in phrases.split('|') {
            let key = normalize_key(phrase);
            if key.is_empty() {
                continue;
            }
            if in_contains {
                contains.push((key, label.clone()));
            } else {
                exact.insert(key, label.clone());
            }
        }
    }
    // canonical names always resolve to themselves
    for label in RawEventLabel::KNOWN {
        exact.insert(normalize_key(label.canonical()), label);
    }
    SynonymTable { exact, contains }
}

/// Lowercase, collapse non-alphanumeric runs to a single space, trim.
pub fn normalize_key(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(c.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

fn contains_phrase(haystack: &str, phrase: &str) -> bool {
    let padded = format!(" {haystack} ");
    padded.contains(&format!(" {phrase} "))
}

/// Map free text to a raw label. Text that matches nothing becomes
/// `Unknown` carrying the trimmed original.
pub fn normalize_label(text: &str) -> RawEventLabel {
    let key = normalize_key(text);
    let table = synonyms();
    if let Some(label) = table.exact.get(&key) {
        return label.clone();
    }
    if !key.is_empty() {
        if let Some((_, label)) = table
            .contains
            .iter()
            .find(|(phrase, _)| contains_phrase(&key, phrase))
        {
            return label.clone();
        }
    }
    RawEventLabel::Unknown(text.trim().to_string())
}

/// Every phrase in the exact synonym map, for inspection and tests.
pub fn synonym_phrases() -> impl Iterator<Item = (&'static str, &'static RawEventLabel)> {
    synonyms().exact.iter().map(|(k, v)| (k.as_str(), v))
}

/// Anonymized player tag of the form `Player<n>`, n >= 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlayerTag(u32);

impl PlayerTag {
    pub fn new(number: u32) -> Result<Self> {
        if number == 0 {
            return Err(Error::InvalidPlayerTag("Player0".into()));
        }
        Ok(PlayerTag(number))
    }

    pub fn number(&self) -> u32 {
        self.0
    }
}

impl FromStr for PlayerTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s
            .strip_prefix("Player")
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| Error::InvalidPlayerTag(s.to_string()))?;
        let number: u32 = digits
            .parse()
            .map_err(|_| Error::InvalidPlayerTag(s.to_string()))?;
        PlayerTag::new(number).map_err(|_| Error::InvalidPlayerTag(s.to_string()))
    }
}

impl fmt::Display for PlayerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Player{}", self.0)
    }
}

impl Serialize for PlayerTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlayerTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One extracted event: `(player, team, event)` or `(team, event)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventTuple {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub player: Option<PlayerTag>,
    pub team: TeamSide,
    pub label: RawEventLabel,
}

impl EventTuple {
    pub fn new(player: Option<PlayerTag>, team: TeamSide, label: RawEventLabel) -> Self {
        EventTuple { player, team, label }
    }

    pub fn team_event(team: TeamSide, label: RawEventLabel) -> Self {
        EventTuple::new(None, team, label)
    }
}

impl fmt::Display for EventTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.player {
            Some(p) => write!(f, "({p}, {}, {})", self.team, self.label.phrase()),
            None => write!(f, "({}, {})", self.team, self.label.phrase()),
        }
    }
}

/// Per-team event counts: rows by [`TeamSide`], columns by [`EventType`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SummaryTable {
    counts: [[u32; 8]; 2],
}

impl SummaryTable {
    pub fn zero() -> Self {
        SummaryTable::default()
    }

    pub fn from_rows(home: [u32; 8], away: [u32; 8]) -> Self {
        SummaryTable {
            counts: [home, away],
        }
    }

    pub fn get(&self, team: TeamSide, event: EventType) -> u32 {
        self.counts[team.index()][event.index()]
    }

    pub fn set(&mut self, team: TeamSide, event: EventType, value: u32) {
        self.counts[team.index()][event.index()] = value;
    }

    pub fn increment(&mut self, team: TeamSide, event: EventType) {
        self.counts[team.index()][event.index()] += 1;
    }

    pub fn row(&self, team: TeamSide) -> [u32; 8] {
        self.counts[team.index()]
    }

    pub fn rows(&self) -> &[[u32; 8]; 2] {
        &self.counts
    }

    /// Iterate all 16 cells in flattened order (Home row first).
    pub fn cells(&self) -> impl Iterator<Item = (TeamSide, EventType, u32)> + '_ {
        TeamSide::ALL.into_iter().flat_map(move |team| {
            EventType::ALL
                .into_iter()
                .map(move |event| (team, event, self.get(team, event)))
        })
    }

    pub fn total(&self) -> u64 {
        self.cells().map(|(_, _, v)| u64::from(v)).sum()
    }

    /// Cell-wise sum.
    pub fn add(&self, other: &SummaryTable) -> SummaryTable {
        let mut out = *self;
        for team in TeamSide::ALL {
            for event in EventType::ALL {
                out.set(team, event, self.get(team, event) + other.get(team, event));
            }
        }
        out
    }

    pub fn with_rows_swapped(&self) -> SummaryTable {
        SummaryTable::from_rows(self.counts[1], self.counts[0])
    }

    /// True when every event type is non-zero for at least one team.
    pub fn all_events_occur(&self) -> bool {
        self.events_occurring() == EventType::ALL.len()
    }

    pub fn events_occurring(&self) -> usize {
        EventType::ALL
            .iter()
            .filter(|e| TeamSide::ALL.iter().any(|t| self.get(*t, **e) > 0))
            .count()
    }
}

/// One commentary/table pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchInstance {
    pub id: String,
    pub commentary: String,
    #[serde(rename = "table")]
    pub ground_truth: Option<SummaryTable>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl MatchInstance {
    pub fn new(id: impl Into<String>, commentary: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let commentary = commentary.into();
        if commentary.trim().is_empty() {
            return Err(Error::EmptyCommentary(id));
        }
        Ok(MatchInstance {
            id,
            commentary,
            ground_truth: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_truth(mut self, table: SummaryTable) -> Self {
        self.ground_truth = Some(table);
        self
    }
}

/// Tables from independent annotators of the same instance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    pub tables: Vec<SummaryTable>,
}

impl AnnotationSet {
    pub fn new(tables: Vec<SummaryTable>) -> Self {
        AnnotationSet { tables }
    }
}

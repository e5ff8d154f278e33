//! Seeded synthetic commentary with known ground truth, the rule-based
//! oracle extractor that inverts it, roster anonymization, and the JSONL
//! dataset format.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    EventTuple, EventType, MatchInstance, PlayerTag, RawEventLabel, SummaryTable, TeamSide,
};
use crate::tuples::integrate;

pub const TEMPLATE_BANK_VERSION: &str = "commentary-v1";

static BANK_DATA: &str = include_str!("../data/commentary.txt");

// ---------------------------------------------------------------------------
// Template bank

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Player,
    Teammate,
    Opponent,
    Team,
    OpposingTeam,
}

impl Role {
    fn parse(s: &str) -> Option<Role> {
        Some(match s {
            "p" => Role::Player,
            "q" => Role::Teammate,
            "o" => Role::Opponent,
            "team" => Role::Team,
            "opp" => Role::OpposingTeam,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub id: usize,
    pub section: String,
    pub tuples: Vec<(RawEventLabel, Role)>,
    pub text: String,
    regex: Regex,
}

impl Template {
    /// Match one sentence, returning the tuples it carries.
    pub fn extract(&self, sentence: &str) -> Option<Vec<EventTuple>> {
        let caps = self.regex.captures(sentence)?;
        let player = |key: &str| -> Option<(PlayerTag, TeamSide)> {
            let n: u32 = caps.name(&format!("{key}_n"))?.as_str().parse().ok()?;
            let side = side_from(caps.name(&format!("{key}_t"))?.as_str());
            Some((PlayerTag::new(n).ok()?, side))
        };
        let team = caps.name("team").map(|m| side_from(m.as_str()));
        let mut out = Vec::with_capacity(self.tuples.len());
        for (label, role) in &self.tuples {
            let tuple = match role {
                Role::Player => player("p").map(|(t, s)| EventTuple::new(Some(t), s, label.clone())),
                Role::Teammate => player("q").map(|(t, s)| EventTuple::new(Some(t), s, label.clone())),
                Role::Opponent => player("o").map(|(t, s)| EventTuple::new(Some(t), s, label.clone())),
                Role::Team => team
                    .or_else(|| player("p").map(|(_, s)| s))
                    .map(|s| EventTuple::team_event(s, label.clone())),
                Role::OpposingTeam => team
                    .or_else(|| player("p").map(|(_, s)| s))
                    .map(|s| EventTuple::team_event(s.opponent(), label.clone())),
            }?;
            out.push(tuple);
        }
        Some(out)
    }
}

fn side_from(s: &str) -> TeamSide {
    if s == "Home" {
        TeamSide::Home
    } else {
        TeamSide::Away
    }
}

/// Parsed template bank, shared by the generator and the oracle.
#[derive(Debug)]
pub struct TemplateBank {
    templates: Vec<Template>,
}

impl TemplateBank {
    pub fn parse(data: &str) -> std::result::Result<TemplateBank, String> {
        let placeholder = Regex::new(r"\{([a-z]+)\}").unwrap();
        let mut templates = Vec::new();
        let mut section = String::new();
        for (ln, raw) in data.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_string();
                continue;
            }
            let (spec, text) = line
                .split_once(" | ")
                .ok_or_else(|| format!("line {}: expected `<tuples> | <sentence>`", ln + 1))?;
            let mut tuples = Vec::new();
            if spec.trim() != "-" {
                for item in spec.split_whitespace() {
                    let (label, role) = item
                        .split_once('@')
                        .ok_or_else(|| format!("line {}: bad tuple spec {item:?}", ln + 1))?;
                    let label = RawEventLabel::KNOWN
                        .iter()
                        .find(|l| l.canonical() == label)
                        .cloned()
                        .ok_or_else(|| format!("line {}: unknown label {label:?}", ln + 1))?;
                    let role = Role::parse(role)
                        .ok_or_else(|| format!("line {}: unknown role {role:?}", ln + 1))?;
                    tuples.push((label, role));
                }
            }

            let mut pattern = String::from("^");
            let mut last = 0;
            let mut seen = HashSet::new();
            for caps in placeholder.captures_iter(text) {
                let whole = caps.get(0).unwrap();
                pattern.push_str(&regex::escape(&text[last..whole.start()]));
                last = whole.end();
                let name = &caps[1];
                let first = seen.insert(name.to_string());
                let piece = match (name, first) {
                    ("p" | "q" | "o", true) => {
                        format!(r"Player(?P<{name}_n>\d+)\((?P<{name}_t>Home|Away) Team\)")
                    }
                    ("p" | "q" | "o", false) => r"Player\d+\((?:Home|Away) Team\)".to_string(),
                    ("team", true) => r"(?P<team>Home|Away) Team".to_string(),
                    ("team" | "opp", _) => r"(?:Home|Away) Team".to_string(),
                    ("score", _) => r"Home Team \d+, Away Team \d+".to_string(),
                    ("hs" | "as", _) => r"\d+".to_string(),
                    (other, _) => return Err(format!("line {}: unknown placeholder {{{other}}}", ln + 1)),
                };
                pattern.push_str(&piece);
            }
            pattern.push_str(&regex::escape(&text[last..]));
            pattern.push('$');
            for (_, role) in &tuples {
                let needed = match role {
                    Role::Player | Role::Team | Role::OpposingTeam => seen.contains("p") || seen.contains("team"),
                    Role::Teammate => seen.contains("q"),
                    Role::Opponent => seen.contains("o"),
                };
                if !needed {
                    return Err(format!("line {}: role {role:?} has no placeholder", ln + 1));
                }
            }
            let regex = Regex::new(&pattern).map_err(|e| format!("line {}: {e}", ln + 1))?;
            templates.push(Template {
                id: templates.len(),
                section: section.clone(),
                tuples,
                text: text.to_string(),
                regex,
            });
        }
        Ok(TemplateBank { templates })
    }

    pub fn builtin() -> &'static TemplateBank {
        static BANK: OnceLock<TemplateBank> = OnceLock::new();
        BANK.get_or_init(|| TemplateBank::parse(BANK_DATA).expect("built-in template bank"))
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn section(&self, name: &str) -> Vec<&Template> {
        self.templates.iter().filter(|t| t.section == name).collect()
    }

    /// First template matching the whole sentence.
    pub fn match_sentence(&self, sentence: &str) -> Option<(&Template, Vec<EventTuple>)> {
        self.templates
            .iter()
            .find_map(|t| t.extract(sentence).map(|tuples| (t, tuples)))
    }
}

/// Split after `.`, `!` or `?` followed by whitespace or end of text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.peek().is_none_or(|(_, next)| next.is_whitespace());
            if boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = end;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

// ---------------------------------------------------------------------------
// Generator

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    /// Mean count per team per match for each summary column.
    pub means: BTreeMap<EventType, f64>,
    /// Probability that a plain foul is reported together with the
    /// opponent's free kick.
    pub foul_free_kick_link: f64,
    /// Share of offsides phrased as a through ball to a caught-offside teammate.
    pub offside_through_ball: f64,
    /// Share of red cards issued as a second yellow.
    pub second_yellow_share: f64,
    pub handball_share: f64,
    pub dangerous_play_share: f64,
    /// Share of free kicks that are penalties.
    pub penalty_share: f64,
    /// Mean number of non-event sentences per match.
    pub filler_mean: f64,
    pub template_version: String,
}

impl GeneratorConfig {
    pub fn mean(&self, event: EventType) -> f64 {
        self.means.get(&event).copied().unwrap_or(0.0)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn all_zero(seed: u64) -> Self {
        let mut cfg = GeneratorConfig::default().with_seed(seed);
        for v in cfg.means.values_mut() {
            *v = 0.0;
        }
        cfg
    }
}

/// Per-team averages of the reference training split.
pub fn default_means() -> BTreeMap<EventType, f64> {
    use EventType::*;
    BTreeMap::from([
        (Goals, 1.38),
        (Shots, 12.71),
        (Fouls, 10.60),
        (YellowCards, 1.74),
        (RedCards, 0.04),
        (CornerKicks, 5.25),
        (FreeKicks, 10.34),
        (Offsides, 1.86),
    ])
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            means: default_means(),
            foul_free_kick_link: 0.6,
            offside_through_ball: 0.7,
            second_yellow_share: 0.5,
            handball_share: 0.05,
            dangerous_play_share: 0.05,
            penalty_share: 0.03,
            filler_mean: 6.0,
            template_version: TEMPLATE_BANK_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSentence {
    pub template_id: usize,
    pub text: String,
    pub tuples: Vec<EventTuple>,
}

/// Every sentence of one generated commentary, with the tuples it carries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventScript {
    pub sentences: Vec<ScriptedSentence>,
}

impl EventScript {
    pub fn tuples(&self) -> Vec<EventTuple> {
        self.sentences
            .iter()
            .flat_map(|s| s.tuples.iter().cloned())
            .collect()
    }

    pub fn commentary(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 || !mean.is_finite() {
        return 0;
    }
    let sample: f64 = Poisson::new(mean).expect("positive mean").sample(rng);
    sample as u32
}

/// Event units before rendering. Linked fouls carry the fouled opponent.
#[derive(Debug, Clone)]
enum Unit {
    Single { section: &'static str, team: TeamSide },
    FoulFreeKick { team: TeamSide, combined: bool },
    Filler,
}

struct Players {
    rosters: [Vec<u32>; 2],
}

impl Players {
    fn new() -> Self {
        Players {
            rosters: [(1..=18).collect(), (19..=36).collect()],
        }
    }

    fn pick(&self, rng: &mut ChaCha8Rng, team: TeamSide, not: Option<u32>) -> u32 {
        loop {
            let n = *self.rosters[team.index()].choose(rng).expect("non-empty roster");
            if Some(n) != not {
                return n;
            }
        }
    }
}

fn player_text(n: u32, team: TeamSide) -> String {
    format!("Player{n}({team})")
}

struct Renderer<'a> {
    bank: &'a TemplateBank,
    players: Players,
    score: [u32; 2],
}

impl Renderer<'_> {
    fn fill(&self, template: &Template, p: (u32, TeamSide), q: u32, o: u32) -> String {
        let (pn, team) = p;
        let score = format!(
            "Home Team {}, Away Team {}",
            self.score[0], self.score[1]
        );
        template
            .text
            .replace("{p}", &player_text(pn, team))
            .replace("{q}", &player_text(q, team))
            .replace("{o}", &player_text(o, team.opponent()))
            .replace("{team}", team.label())
            .replace("{opp}", team.opponent().label())
            .replace("{score}", &score)
            .replace("{hs}", &self.score[0].to_string())
            .replace("{as}", &self.score[1].to_string())
    }

    fn render(
        &mut self,
        rng: &mut ChaCha8Rng,
        section: &str,
        team: TeamSide,
    ) -> ScriptedSentence {
        let candidates = self.bank.section(section);
        let template = *candidates.choose(rng).expect("non-empty template section");
        let p = self.players.pick(rng, team, None);
        let q = self.players.pick(rng, team, Some(p));
        let o = self.players.pick(rng, team.opponent(), None);
        if section == "goal" {
            self.score[team.index()] += 1;
        }
        let text = self.fill(template, (p, team), q, o);
        let tuples = template
            .extract(&text)
            .expect("rendered template matches its own pattern");
        ScriptedSentence {
            template_id: template.id,
            text,
            tuples,
        }
    }

    fn fixed(&self, section: &str) -> Vec<ScriptedSentence> {
        self.bank
            .section(section)
            .into_iter()
            .map(|t| ScriptedSentence {
                template_id: t.id,
                text: self.fill(t, (1, TeamSide::Home), 2, 19),
                tuples: Vec::new(),
            })
            .collect()
    }
}

/// Script and render one match. The RNG stream is derived from
/// `(cfg.seed, index)`, so instances can be generated independently.
pub fn generate_script(cfg: &GeneratorConfig, index: u64) -> EventScript {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let bank = TemplateBank::builtin();

    let mut units: Vec<Unit> = Vec::new();
    for team in TeamSide::ALL {
        let goals = poisson(&mut rng, cfg.mean(EventType::Goals));
        let base_shots = poisson(
            &mut rng,
            (cfg.mean(EventType::Shots) - cfg.mean(EventType::Goals)).max(0.0),
        );
        let fouls = poisson(&mut rng, cfg.mean(EventType::Fouls));
        let reds = poisson(&mut rng, cfg.mean(EventType::RedCards));
        let base_yellows = poisson(
            &mut rng,
            (cfg.mean(EventType::YellowCards) - cfg.second_yellow_share * cfg.mean(EventType::RedCards))
                .max(0.0),
        );
        let corners = poisson(&mut rng, cfg.mean(EventType::CornerKicks));
        let free_kicks = poisson(&mut rng, cfg.mean(EventType::FreeKicks));
        let offsides = poisson(&mut rng, cfg.mean(EventType::Offsides));

        let single = |section: &'static str| Unit::Single { section, team };
        units.extend((0..goals).map(|_| single("goal")));
        for _ in 0..base_shots {
            let section = *["shot", "saved_attempt", "blocked_attempt", "missed_attempt"]
                .choose(&mut rng)
                .unwrap();
            units.push(single(section));
        }
        for _ in 0..reds {
            let second = rng.random_bool(cfg.second_yellow_share.clamp(0.0, 1.0));
            units.push(single(if second { "second_yellow_card" } else { "red_card" }));
        }
        units.extend((0..base_yellows).map(|_| single("yellow_card")));
        units.extend((0..corners).map(|_| single("corner_kick")));
        for _ in 0..offsides {
            let through = rng.random_bool(cfg.offside_through_ball.clamp(0.0, 1.0));
            units.push(single(if through { "offside_through" } else { "offside" }));
        }
        // Fouls come last per team so linking can consume the opponent's
        // free kicks below; free kicks are queued per team first.
        for _ in 0..free_kicks {
            let penalty = rng.random_bool(cfg.penalty_share.clamp(0.0, 1.0));
            units.push(single(if penalty { "penalty" } else { "free_kick" }));
        }
        for _ in 0..fouls {
            let r: f64 = rng.random();
            let section = if r < cfg.handball_share {
                "handball"
            } else if r < cfg.handball_share + cfg.dangerous_play_share {
                "dangerous_play"
            } else {
                "foul"
            };
            units.push(single(section));
        }
    }

    // Link plain fouls to an unlinked free kick of the fouled side.
    let mut linked = Vec::with_capacity(units.len());
    let mut free_kick_slots: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, u) in units.iter().enumerate() {
        if let Unit::Single { section: "free_kick", team } = u {
            free_kick_slots[team.index()].push(i);
        }
    }
    let mut consumed = vec![false; units.len()];
    for (i, u) in units.iter().enumerate() {
        if let Unit::Single { section: "foul", team } = u {
            if rng.random_bool(cfg.foul_free_kick_link.clamp(0.0, 1.0)) {
                if let Some(fk) = free_kick_slots[team.opponent().index()].pop() {
                    consumed[fk] = true;
                    consumed[i] = true;
                    linked.push(Unit::FoulFreeKick {
                        team: *team,
                        combined: rng.random_bool(0.5),
                    });
                }
            }
        }
    }
    linked.extend(
        units
            .into_iter()
            .zip(consumed)
            .filter(|(_, c)| !c)
            .map(|(u, _)| u),
    );
    let fillers = poisson(&mut rng, cfg.filler_mean);
    linked.extend((0..fillers).map(|_| Unit::Filler));
    linked.shuffle(&mut rng);

    let mut renderer = Renderer {
        bank,
        players: Players::new(),
        score: [0, 0],
    };
    let mut sentences = renderer.fixed("kickoff");
    let half = linked.len() / 2;
    for (i, unit) in linked.iter().enumerate() {
        if i == half {
            sentences.extend(renderer.fixed("half_time"));
        }
        match unit {
            Unit::Single { section, team } => {
                sentences.push(renderer.render(&mut rng, section, *team));
            }
            Unit::FoulFreeKick { team, combined } => {
                if *combined {
                    sentences.push(renderer.render(&mut rng, "foul_free_kick", *team));
                } else {
                    sentences.push(renderer.render(&mut rng, "foul", *team));
                    sentences.push(renderer.render(&mut rng, "free_kick", team.opponent()));
                }
            }
            Unit::Filler => {
                let team = if rng.random_bool(0.5) { TeamSide::Home } else { TeamSide::Away };
                sentences.push(renderer.render(&mut rng, "filler", team));
            }
        }
    }
    if linked.len() == half {
        sentences.extend(renderer.fixed("half_time"));
    }
    sentences.extend(renderer.fixed("full_time"));
    EventScript { sentences }
}

pub fn instance_from_script(cfg: &GeneratorConfig, index: u64, script: &EventScript) -> MatchInstance {
    let truth = integrate(&script.tuples());
    MatchInstance {
        id: format!("synth-{}-{index:05}", cfg.seed),
        commentary: script.commentary(),
        ground_truth: Some(truth),
        meta: BTreeMap::from([
            ("seed".to_string(), cfg.seed.to_string()),
            ("index".to_string(), index.to_string()),
            ("templates".to_string(), cfg.template_version.clone()),
        ]),
    }
}

/// Generate `n` instances; ground truth is the integration of the
/// scripted tuples.
pub fn generate(cfg: &GeneratorConfig, n: usize) -> Vec<MatchInstance> {
    (0..n as u64)
        .map(|i| instance_from_script(cfg, i, &generate_script(cfg, i)))
        .collect()
}

/// Instances together with their scripts, for oracle-tuple comparisons.
pub fn generate_with_scripts(cfg: &GeneratorConfig, n: usize) -> Vec<(MatchInstance, EventScript)> {
    (0..n as u64)
        .map(|i| {
            let script = generate_script(cfg, i);
            (instance_from_script(cfg, i, &script), script)
        })
        .collect()
}

/// Mean per-team count of each column across instances with ground truth.
pub fn empirical_means(instances: &[MatchInstance]) -> BTreeMap<EventType, f64> {
    let tables: Vec<&SummaryTable> = instances.iter().filter_map(|i| i.ground_truth.as_ref()).collect();
    let denom = (tables.len() * 2).max(1) as f64;
    EventType::ALL
        .into_iter()
        .map(|e| {
            let sum: u64 = tables
                .iter()
                .flat_map(|t| TeamSide::ALL.map(|s| u64::from(t.get(s, e))))
                .sum();
            (e, sum as f64 / denom)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Oracle extractor

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Player(\d+)\((Home|Away) Team\)").unwrap())
}

fn team_mention_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(Home|Away) Team\b").unwrap())
}

fn tags(sentence: &str) -> Vec<(PlayerTag, TeamSide)> {
    tag_regex()
        .captures_iter(sentence)
        .filter_map(|c| Some((PlayerTag::new(c[1].parse().ok()?).ok()?, side_from(&c[2]))))
        .collect()
}

/// Keyword heuristics for sentences outside the template bank.
fn fallback_extract(sentence: &str) -> Vec<EventTuple> {
    let lower = sentence.to_lowercase();
    let players = tags(sentence);
    let team_mention = team_mention_regex()
        .captures(&tag_regex().replace_all(sentence, ""))
        .map(|c| side_from(&c[1]));
    let first = players.first().cloned();
    let last = players.last().cloned();
    let actor = |who: Option<(PlayerTag, TeamSide)>, label: RawEventLabel| -> Option<EventTuple> {
        match who {
            Some((tag, side)) => Some(EventTuple::new(Some(tag), side, label)),
            None => team_mention.map(|side| EventTuple::team_event(side, label)),
        }
    };
    let has = |w: &str| lower.contains(w);
    let mut out = Vec::new();

    if has("delay") || has("injury") || has("lineup") || has("underway") || has("first half") || has("second half")
        || has("final score") || has("substitution") || has("replaces")
    {
        return out;
    }
    if has("second yellow") {
        out.extend(actor(first, RawEventLabel::SecondYellowCard));
    } else if has("red card") || has("sent off") {
        out.extend(actor(first, RawEventLabel::RedCard));
    } else if has("yellow card") || has("booked") {
        out.extend(actor(first, RawEventLabel::YellowCard));
    } else if has("corner kick") {
        out.extend(actor(first, RawEventLabel::CornerKick));
    } else if has("offside") {
        out.extend(actor(last, RawEventLabel::Offside));
    } else if has("handball") {
        out.extend(actor(first, RawEventLabel::Handball));
    } else if has("dangerous play") {
        out.extend(actor(first, RawEventLabel::DangerousPlay));
    } else if has("penalty") && (has("wins") || has("draws") || has("awarded")) {
        out.extend(actor(first, RawEventLabel::Penalty));
    } else if has("fouled by") {
        out.extend(actor(first, RawEventLabel::FreeKick));
        out.extend(actor(last, RawEventLabel::Foul));
    } else if has(" fouls ") || has("foul on") {
        out.extend(actor(first, RawEventLabel::Foul));
        if has("free kick") {
            out.extend(actor(last, RawEventLabel::FreeKick));
        }
    } else if has("commits a foul") || has("foul by") {
        out.extend(actor(first, RawEventLabel::Foul));
    } else if has("free kick") {
        out.extend(actor(first, RawEventLabel::FreeKick));
    } else if has("scores") || has("makes a goal") || has("goal!") {
        out.extend(actor(first, RawEventLabel::Goal));
    } else if has("saved") {
        out.extend(actor(first, RawEventLabel::SavedAttempt));
    } else if has("blocked") {
        out.extend(actor(first, RawEventLabel::BlockedAttempt));
    } else if has("miss") || has("too high") || has("wide") || has("over the bar") {
        out.extend(actor(first, RawEventLabel::MissedAttempt));
    } else if (has("shot") || has("header") || has("attempt")) && !has("through ball") {
        out.extend(actor(first, RawEventLabel::Shot));
    }
    out
}

/// Rule-based stage-1 stand-in. Exact on generated commentary; best effort
/// on anything else.
pub fn oracle_extract(commentary: &str) -> Vec<EventTuple> {
    let bank = TemplateBank::builtin();
    split_sentences(commentary)
        .into_iter()
        .flat_map(|s| match bank.match_sentence(s) {
            Some((_, tuples)) => tuples,
            None => fallback_extract(s),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Anonymization

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    /// Player name to (team, anonymized number).
    pub players: BTreeMap<String, (TeamSide, u32)>,
    /// Team name to side.
    pub teams: BTreeMap<String, TeamSide>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Anonymized {
    pub text: String,
    /// Capitalized words left intact that may be unrecognized names.
    pub unmatched: Vec<String>,
}

/// Replace roster names with `Player<n>(<side> Team)` and team names with
/// `Home Team` / `Away Team`. Longest name wins; whole words only; text that
/// is already anonymized is left untouched, so the operation is idempotent.
pub fn anonymize(text: &str, roster: &Roster) -> Anonymized {
    enum Target {
        Protected,
        Player(TeamSide, u32),
        Team(TeamSide),
    }
    let mut names: Vec<(&str, Target)> = roster
        .players
        .iter()
        .map(|(n, (side, num))| (n.as_str(), Target::Player(*side, *num)))
        .chain(roster.teams.iter().map(|(n, side)| (n.as_str(), Target::Team(*side))))
        .filter(|(n, _)| !n.trim().is_empty())
        .collect();
    names.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(b.0)));

    let mut alternatives = vec![
        r"Player\d+\((?:Home|Away) Team\)".to_string(),
        r"(?:Home|Away) Team".to_string(),
    ];
    let mut targets = vec![Target::Protected, Target::Protected];
    for (name, target) in names {
        alternatives.push(format!(r"\b{}\b", regex::escape(name)));
        targets.push(target);
    }
    let pattern = alternatives
        .iter()
        .enumerate()
        .map(|(i, a)| format!("(?P<g{i}>{a})"))
        .collect::<Vec<_>>()
        .join("|");
    let re = Regex::new(&pattern).expect("escaped roster pattern");

    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for caps in re.captures_iter(text) {
        let m = caps.get(0).unwrap();
        out.push_str(&text[last..m.start()]);
        let idx = (0..targets.len())
            .find(|i| caps.name(&format!("g{i}")).is_some())
            .expect("one group matched");
        match &targets[idx] {
            Target::Protected => out.push_str(m.as_str()),
            Target::Player(side, num) => out.push_str(&player_text(*num, *side)),
            Target::Team(side) => out.push_str(side.label()),
        }
        last = m.end();
    }
    out.push_str(&text[last..]);

    let mut unmatched = BTreeSet::new();
    let word = Regex::new(r"\b[A-Z][\p{L}'-]+").unwrap();
    for sentence in split_sentences(&out) {
        for (i, m) in word.find_iter(sentence).enumerate() {
            let w = m.as_str();
            let at_start = i == 0 && sentence[..m.start()].trim().is_empty();
            if at_start || matches!(w, "Home" | "Away" | "Team") || w.starts_with("Player") {
                continue;
            }
            unmatched.insert(w.to_string());
        }
    }
    Anonymized {
        text: out,
        unmatched: unmatched.into_iter().collect(),
    }
}

// ---------------------------------------------------------------------------
// Dataset files

#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    commentary: &'a str,
    table: Option<&'a SummaryTable>,
    meta: &'a BTreeMap<String, String>,
}

fn parse_table(value: &serde_json::Value, line: usize) -> Result<Option<SummaryTable>> {
    if value.is_null() {
        return Ok(None);
    }
    let rows = value.as_array().filter(|r| r.len() == 2).ok_or(Error::BadTableShape { line })?;
    let mut parsed = [[0u32; 8]; 2];
    for (r, row) in rows.iter().enumerate() {
        let cells = row.as_array().filter(|c| c.len() == 8).ok_or(Error::BadTableShape { line })?;
        for (c, cell) in cells.iter().enumerate() {
            parsed[r][c] = cell
                .as_u64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or(Error::BadTableShape { line })?;
        }
    }
    Ok(Some(SummaryTable::from_rows(parsed[0], parsed[1])))
}

fn parse_record(text: &str, line: usize) -> Result<MatchInstance> {
    let malformed = |message: String| Error::MalformedLine { line, message };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("expected a JSON object".into()))?;
    let id = obj
        .get("id")
        .and_then(|v| v.as_str())
        .ok_or_else(|| malformed("missing string field `id`".into()))?;
    let commentary = obj
        .get("commentary")
        .and_then(|v| v.as_str())
        .ok_or_else(|| malformed("missing string field `commentary`".into()))?;
    if commentary.trim().is_empty() {
        return Err(malformed("empty commentary".into()));
    }
    let table = parse_table(obj.get("table").unwrap_or(&serde_json::Value::Null), line)?;
    let meta = match obj.get("meta") {
        None | Some(serde_json::Value::Null) => BTreeMap::new(),
        Some(m) => serde_json::from_value(m.clone()).map_err(|e| malformed(format!("meta: {e}")))?,
    };
    Ok(MatchInstance {
        id: id.to_string(),
        commentary: commentary.to_string(),
        ground_truth: table,
        meta,
    })
}

pub fn read_dataset_from(reader: impl Read) -> Result<Vec<MatchInstance>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_record(&line, line_no)?;
        if !ids.insert(inst.id.clone()) {
            return Err(Error::DuplicateId {
                id: inst.id,
                line: line_no,
            });
        }
        out.push(inst);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<MatchInstance>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset_from(file)
}

pub fn write_dataset_to(instances: &[MatchInstance], mut writer: impl Write) -> std::io::Result<()> {
    for inst in instances {
        let record = RecordRef {
            id: &inst.id,
            commentary: &inst.commentary,
            table: inst.ground_truth.as_ref(),
            meta: &inst.meta,
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_dataset(instances: &[MatchInstance], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(instances, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

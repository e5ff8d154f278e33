use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

const REPORT: &str = include_str!("../../core/tests/fixtures/report_commentary.txt");

fn t3(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_t3"))
        .args(args)
        .env_remove("T3_API_KEY")
        .env_remove("T3_ENDPOINT")
        .env_remove("T3_MODEL")
        .output()
        .expect("spawn t3")
}

fn ok(args: &[&str]) -> String {
    let out = t3(args);
    assert!(
        out.status.success(),
        "t3 {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

fn table_json(home: [u32; 8], away: [u32; 8]) -> Value {
    json!([home, away])
}

fn csv(home: [u32; 8], away: [u32; 8]) -> String {
    let row = |name: &str, r: [u32; 8]| {
        std::iter::once(name.to_string())
            .chain(r.iter().map(u32::to_string))
            .collect::<Vec<_>>()
            .join(",")
    };
    format!(
        "Team,Goals,Shots,Fouls,Yellow Cards,Red Cards,Corner Kicks,Free Kicks,Offsides\n{}\n{}",
        row("Home Team", home),
        row("Away Team", away)
    )
}

const TRUTH_HOME: [u32; 8] = [0, 5, 6, 1, 0, 5, 6, 6];
const TRUTH_AWAY: [u32; 8] = [3, 12, 6, 0, 0, 3, 6, 2];

#[test]
fn gen_is_deterministic_and_rejects_zero() {
    let dir = TempDir::new().unwrap();
    ok(&["gen", "--n", "25", "--seed", "9", "--out", &p(&dir, "a.jsonl")]);
    ok(&["gen", "--n", "25", "--seed", "9", "--out", &p(&dir, "b.jsonl")]);
    ok(&["gen", "--n", "25", "--seed", "10", "--out", &p(&dir, "c.jsonl")]);
    let read = |n| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(t3(&["gen", "--n", "0", "--out", &p(&dir, "z.jsonl")]).status.code(), Some(2));
}

#[test]
fn gen_config_overrides_means() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("g.cfg"), "mean.red_cards = 0\nmean.goals = 0\n").unwrap();
    ok(&["gen", "--n", "30", "--config", &p(&dir, "g.cfg"), "--out", &p(&dir, "d.jsonl")]);
    let text = std::fs::read_to_string(dir.path().join("d.jsonl")).unwrap();
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        for row in v["table"].as_array().unwrap() {
            assert_eq!(row[0], 0);
            assert_eq!(row[4], 0);
        }
    }
    std::fs::write(dir.path().join("bad.cfg"), "mean.throw_ins = 2\n").unwrap();
    let out = t3(&["gen", "--n", "3", "--config", &p(&dir, "bad.cfg"), "--out", &p(&dir, "e.jsonl")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_round_trip_scores_zero_in_every_mode() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "15", "--seed", "3", "--out", &data]);
    for mode in ["zero-shot", "zero-shot-cot", "few-shot:2", "few-shot-cot:1", "t3", "t3m", "t3d", "t2"] {
        let tr = p(&dir, "t.jsonl");
        ok(&["run", "--dataset", &data, "--mode", mode, "--out", &tr, "--quiet"]);
        let report = ok(&["eval", "--transcripts", &tr, "--dataset", &data]);
        assert!(report.contains("Average        0.000        0.00"), "{mode}: {report}");
        assert!(report.contains("filtered: 0"), "{mode}");
    }
}

#[test]
fn unknown_mode_and_bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "2", "--out", &data]);
    let out = t3(&["run", "--dataset", &data, "--mode", "t4", "--out", &p(&dir, "t")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid modes"));
    let out = t3(&["run", "--dataset", &data, "--mode", "t3", "--parallelism", "0", "--out", &p(&dir, "t")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(t3(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = TempDir::new().unwrap();
    let out = t3(&["run", "--dataset", &p(&dir, "nope.jsonl"), "--mode", "t3", "--out", &p(&dir, "t")]);
    assert_eq!(out.status.code(), Some(3));
    std::fs::write(dir.path().join("bad.jsonl"), "{not json\n").unwrap();
    let out = t3(&["run", "--dataset", &p(&dir, "bad.jsonl"), "--mode", "t3", "--out", &p(&dir, "t")]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn replay_serves_a_warm_cache_without_backend_calls() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    let cache = p(&dir, "cache");
    ok(&["gen", "--n", "12", "--seed", "5", "--out", &data]);
    let first = ok(&[
        "run", "--dataset", &data, "--mode", "t3d", "--backend", "stub", "--cache-dir", &cache,
        "--out", &p(&dir, "a.jsonl"), "--quiet",
    ]);
    assert!(first.contains("cache hits 0, backend calls 36"), "{first}");
    let second = ok(&[
        "run", "--dataset", &data, "--mode", "t3d", "--backend", "replay", "--cache-dir", &cache,
        "--out", &p(&dir, "b.jsonl"), "--quiet",
    ]);
    assert!(second.contains("cache hits 36, backend calls 0"), "{second}");
    assert_eq!(
        std::fs::read(dir.path().join("a.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b.jsonl")).unwrap()
    );

    // A cold cache cannot replay another mode.
    let out = t3(&[
        "run", "--dataset", &data, "--mode", "zero-shot", "--backend", "replay", "--cache-dir", &cache,
        "--out", &p(&dir, "c.jsonl"), "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn merged_mode_makes_one_call_per_instance() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "7", "--out", &data]);
    let out = ok(&[
        "run", "--dataset", &data, "--mode", "t3m", "--backend", "stub", "--cache-dir", &p(&dir, "c"),
        "--out", &p(&dir, "t.jsonl"), "--quiet",
    ]);
    assert!(out.contains("backend calls 7"), "{out}");
}

/// The four single-pass case-study tables, replayed through stub rules,
/// score the printed per-instance RMSEs against the worked example.
#[test]
fn case_study_tables_reproduce_printed_rmse() {
    let dir = TempDir::new().unwrap();
    // (away row, home row, printed RMSE), rows printed away-first.
    let cases: [([u32; 8], [u32; 8], f64); 4] = [
        ([3, 13, 10, 0, 0, 3, 5, 4], [0, 10, 7, 1, 0, 5, 6, 3], 1.888),
        ([3, 10, 7, 0, 0, 3, 10, 2], [0, 8, 7, 1, 0, 4, 7, 5], 1.458),
        ([3, 10, 6, 0, 0, 3, 5, 2], [0, 11, 9, 1, 0, 5, 7, 6], 1.785),
        ([3, 18, 7, 0, 0, 2, 7, 3], [0, 9, 7, 1, 0, 5, 9, 5], 2.046),
    ];
    let mut data = Vec::new();
    let mut rules = Vec::new();
    for (i, (away, home, _)) in cases.iter().enumerate() {
        let marker = format!("Report copy {i}.");
        data.push(json!({
            "id": format!("case-{i}"),
            "commentary": format!("{}\n{marker}", REPORT.trim_end()),
            "table": table_json(TRUTH_HOME, TRUTH_AWAY),
        }));
        rules.push(json!({"match": marker, "response": csv(*home, *away)}));
    }
    write_jsonl(&dir.path().join("d.jsonl"), &data);
    write_jsonl(&dir.path().join("rules.jsonl"), &rules);
    std::fs::write(dir.path().join("b.cfg"), format!("stub_rules = {}\n", p(&dir, "rules.jsonl"))).unwrap();

    ok(&[
        "run", "--dataset", &p(&dir, "d.jsonl"), "--mode", "zero-shot", "--backend", "stub",
        "--config", &p(&dir, "b.cfg"), "--out", &p(&dir, "t.jsonl"), "--quiet",
    ]);
    ok(&[
        "eval", "--transcripts", &p(&dir, "t.jsonl"), "--dataset", &p(&dir, "d.jsonl"), "--out",
        &p(&dir, "e.json"),
    ]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
    for (row, (_, _, printed)) in report["instances"].as_array().unwrap().iter().zip(cases) {
        let rmse = row["rmse"].as_f64().unwrap();
        assert!((rmse - printed).abs() < 1e-3, "{} vs {printed}", row["id"]);
    }
}

#[test]
fn malformed_reply_is_filtered_and_counted() {
    let dir = TempDir::new().unwrap();
    let data = vec![
        json!({"id": "good", "commentary": "Goal! Player3(Home Team) scores.", "table": table_json([1, 1, 0, 0, 0, 0, 0, 0], [0; 8])}),
        json!({"id": "bad", "commentary": "Player2(Away Team) is caught offside.", "table": table_json([0; 8], [0, 0, 0, 0, 0, 0, 0, 1])}),
    ];
    write_jsonl(&dir.path().join("d.jsonl"), &data);
    let rules = vec![
        json!({"match": "scores.", "response": csv([1, 1, 0, 0, 0, 0, 0, 0], [0; 8])}),
        json!({"match": "offside.", "response": "Sorry, I cannot build that table."}),
    ];
    write_jsonl(&dir.path().join("rules.jsonl"), &rules);
    std::fs::write(dir.path().join("b.cfg"), format!("stub_rules = {}\n", p(&dir, "rules.jsonl"))).unwrap();
    let run = ok(&[
        "run", "--dataset", &p(&dir, "d.jsonl"), "--mode", "zero-shot", "--backend", "stub",
        "--config", &p(&dir, "b.cfg"), "--out", &p(&dir, "t.jsonl"), "--quiet",
    ]);
    assert!(run.contains("malformed 1"), "{run}");
    let report = ok(&["eval", "--transcripts", &p(&dir, "t.jsonl"), "--dataset", &p(&dir, "d.jsonl")]);
    assert!(report.contains("scored: 1"), "{report}");
    assert!(report.contains("filtered: 1"), "{report}");
    assert!(report.contains("Average        0.000"), "{report}");
}

#[test]
fn eval_reports_mismatched_ids() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "4", "--seed", "1", "--out", &data]);
    ok(&["run", "--dataset", &data, "--mode", "t3", "--out", &p(&dir, "t.jsonl"), "--quiet"]);
    ok(&["gen", "--n", "5", "--seed", "1", "--out", &p(&dir, "d5.jsonl")]);
    let out = t3(&["eval", "--transcripts", &p(&dir, "t.jsonl"), "--dataset", &p(&dir, "d5.jsonl")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("synth-1-00004"));
}

#[test]
fn exhausted_backend_exits_four_with_transcripts_written() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "2", "--out", &data]);
    // Nothing listens on the discard port, so every attempt is a transport error.
    std::fs::write(
        dir.path().join("b.cfg"),
        "endpoint = http://127.0.0.1:9/v1/chat/completions\nretry_attempts = 2\nretry_base_ms = 1\n",
    )
    .unwrap();
    let out = t3(&[
        "run", "--dataset", &data, "--mode", "zero-shot", "--backend", "http", "--config", &p(&dir, "b.cfg"),
        "--cache-dir", &p(&dir, "c"), "--out", &p(&dir, "t.jsonl"), "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let tr = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    assert_eq!(tr.lines().count(), 2);
    assert!(tr.contains("after 2 attempt(s)"));
}

#[test]
fn http_without_endpoint_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "1", "--out", &data]);
    let out = t3(&["run", "--dataset", &data, "--mode", "t3", "--backend", "http", "--out", &p(&dir, "t")]);
    assert_eq!(out.status.code(), Some(2));
}

fn coverage_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn autoqa_count_questions_cover_oracle_tables_and_tuples() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "6", "--seed", "2", "--out", &data]);
    for mode in ["t3", "t2"] {
        let tr = p(&dir, "t.jsonl");
        ok(&["run", "--dataset", &data, "--mode", mode, "--out", &tr, "--quiet"]);
        let out = ok(&[
            "autoqa", "--documents", &data, "--tables", &tr, "--out", &p(&dir, "q.json"), "--curve",
            &p(&dir, "q.csv"),
        ]);
        assert!(out.contains("mean coverage: 100.0%"), "{mode}: {out}");
        let csv = std::fs::read_to_string(dir.path().join("q.csv")).unwrap();
        assert!(csv.starts_with("threshold,percent\n0,100\n"));
        assert!(csv.trim_end().ends_with("100,100"));
    }
}

#[test]
fn autoqa_fixtures_exclude_documents_without_valid_pairs() {
    let dir = TempDir::new().unwrap();
    let docs = vec![
        json!({"id": "a", "text": "Home goals: 2\nAway goals: 1\nReferee: Smith"}),
        json!({"id": "b", "text": "Home goals: 0"}),
        json!({"id": "c", "text": "nothing to see"}),
    ];
    let tables = vec![
        json!({"id": "a", "render": "Home goals: 2\nAway goals: 3"}),
        json!({"id": "b", "render": "Home goals: 0"}),
        json!({"id": "c", "render": ""}),
    ];
    let qa = vec![
        json!({"id": "a", "pairs": [
            {"question": "Home goals", "answer": "2"},
            {"question": "Away goals", "answer": "1"},
            {"question": "Referee", "answer": "Smith"},
            {"question": "Stadium", "answer": "Anfield"},
        ]}),
        json!({"id": "b", "pairs": [{"question": "Home goals", "answer": "0"}]}),
        json!({"id": "c", "pairs": [{"question": "Home goals", "answer": "4"}]}),
    ];
    write_jsonl(&dir.path().join("docs.jsonl"), &docs);
    write_jsonl(&dir.path().join("tables.jsonl"), &tables);
    write_jsonl(&dir.path().join("qa.jsonl"), &qa);
    let out = t3(&[
        "autoqa", "--documents", &p(&dir, "docs.jsonl"), "--tables", &p(&dir, "tables.jsonl"),
        "--qa-fixtures", &p(&dir, "qa.jsonl"), "--out", &p(&dir, "q.json"),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("c: no valid QA pairs"));
    let v = coverage_json(dir.path().join("q.json"));
    assert_eq!(v["excluded"], 1);
    let docs = v["documents"].as_array().unwrap();
    // "a": three pairs survive pre-screening, one is answered by the table.
    assert_eq!(docs[0]["surviving"], 3);
    assert!((docs[0]["coverage"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(docs[1]["coverage"], 1.0);
    assert!(docs[2]["coverage"].is_null());
    let curve = v["curve"].as_array().unwrap();
    assert_eq!(curve[0]["percent"], 100.0);
    assert_eq!(curve[4]["percent"], 50.0);
    assert_eq!(curve[10]["percent"], 50.0);
}

#[test]
fn inspect_shows_stages_and_diff() {
    let dir = TempDir::new().unwrap();
    let data = p(&dir, "d.jsonl");
    ok(&["gen", "--n", "3", "--seed", "4", "--out", &data]);
    ok(&["run", "--dataset", &data, "--mode", "t3", "--out", &p(&dir, "t.jsonl"), "--quiet"]);
    let out = ok(&[
        "inspect", "--transcripts", &p(&dir, "t.jsonl"), "--dataset", &data, "--id", "synth-4-00001",
    ]);
    assert!(out.contains("instance synth-4-00001"));
    assert!(out.contains("== stage 3"));
    assert!(out.contains("missing 0, wrong 0, spurious 0"), "{out}");
    let out = t3(&["inspect", "--transcripts", &p(&dir, "t.jsonl"), "--id", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn autoqa_through_a_chat_backend() {
    let dir = TempDir::new().unwrap();
    write_jsonl(
        &dir.path().join("docs.jsonl"),
        &[json!({"id": "m", "text": "Goal! Player3(Home Team) scores. Player5(Away Team) is booked."})],
    );
    write_jsonl(&dir.path().join("tables.jsonl"), &[json!({"id": "m", "render": "Home Team goals: 1"})]);
    let rules = vec![
        json!({"match": "question and answer pairs", "response": "Q: Who scored?\nA: Player3\nQ: How many home goals?\nA: 1"}),
        json!({"match": "Candidate: ", "response": "yes"}),
        json!({"match": "Context:\nGoal!", "response": "Player3"}),
        json!({"match": "Context:\nHome Team goals: 1\n\nQuestion: How many home goals?", "response": "1"}),
        json!({"match": "Context:\nHome Team goals: 1", "response": "unknown"}),
    ];
    write_jsonl(&dir.path().join("rules.jsonl"), &rules);
    std::fs::write(dir.path().join("b.cfg"), format!("stub_rules = {}\n", p(&dir, "rules.jsonl"))).unwrap();
    let out = t3(&[
        "autoqa", "--documents", &p(&dir, "docs.jsonl"), "--tables", &p(&dir, "tables.jsonl"),
        "--backend", "stub", "--config", &p(&dir, "b.cfg"), "--out", &p(&dir, "q.json"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = coverage_json(dir.path().join("q.json"));
    let doc = &v["documents"][0];
    // The judge stub accepts any non-empty candidate, so both pairs survive
    // pre-screening; the table answers only the count question.
    assert_eq!(doc["surviving"], 2);
    assert_eq!(doc["correct"], 1);
    assert_eq!(doc["coverage"], 0.5);
}

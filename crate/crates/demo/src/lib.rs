//! Browser bindings for the static demo page in `www/`.
//!
//! Each export takes and returns plain strings; results are JSON.

use serde::Serialize;
use serde_json::json;
use t3_core::evaluation::{coverage_curve, default_grid, report, score_instance};
use t3_core::synth::{generate_script, instance_from_script, GeneratorConfig};
use t3_core::table_io::{parse_model_table, to_csv};
use t3_core::tuples::{integrate, render_tuples};
use t3_core::{oracle_extract, SummaryTable};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Generated {
    id: String,
    commentary: String,
    truth_csv: String,
    tuples: String,
    extracted_csv: String,
    extraction_matches: bool,
}

pub fn generate_impl(seed: u64, index: u64) -> String {
    let cfg = GeneratorConfig::default().with_seed(seed);
    let script = generate_script(&cfg, index);
    let inst = instance_from_script(&cfg, index, &script);
    let truth = inst.ground_truth.unwrap_or_default();
    let tuples = oracle_extract(&inst.commentary);
    let extracted = integrate(&tuples);
    serde_json::to_string(&Generated {
        id: inst.id,
        commentary: inst.commentary,
        truth_csv: to_csv(&truth),
        tuples: render_tuples(&tuples),
        extracted_csv: to_csv(&extracted),
        extraction_matches: extracted == truth,
    })
    .expect("serializes")
}

fn truth_from(text: &str) -> Result<SummaryTable, String> {
    parse_model_table(text)
        .table()
        .copied()
        .ok_or_else(|| "the reference table does not parse".to_string())
}

pub fn score_impl(predicted: &str, truth: &str) -> Result<String, String> {
    let truth = truth_from(truth)?;
    let outcome = parse_model_table(predicted);
    let Some(pred) = outcome.table() else {
        return Ok(json!({ "malformed": outcome.to_string() }).to_string());
    };
    let s = score_instance(pred, &truth);
    let groups = report(&[(outcome.clone(), truth)]);
    Ok(json!({
        "table_csv": to_csv(pred),
        "rmse": s.rmse(),
        "error_rate": s.error_rate(),
        "groups": groups,
    })
    .to_string())
}

/// `coverages` holds per-document coverage values in [0, 1], separated by
/// commas or whitespace.
pub fn curve_impl(coverages: &str) -> Result<String, String> {
    let covs = coverages
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| format!("{s:?} is not a coverage in [0, 1]"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let curve = coverage_curve(&covs, &default_grid()).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&curve).expect("serializes"))
}

#[wasm_bindgen]
pub fn generate(seed: u64, index: u64) -> String {
    generate_impl(seed, index)
}

#[wasm_bindgen]
pub fn score(predicted: &str, truth: &str) -> Result<String, JsValue> {
    score_impl(predicted, truth).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn curve(coverages: &str) -> Result<String, JsValue> {
    curve_impl(coverages).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn generated_instance_extracts_exactly() {
        let v: Value = serde_json::from_str(&generate_impl(11, 3)).unwrap();
        assert_eq!(v["id"], "synth-11-00003");
        assert_eq!(v["extraction_matches"], true);
        assert_eq!(v["truth_csv"], v["extracted_csv"]);
    }

    #[test]
    fn scoring_a_pasted_table() {
        let truth = "Team,Goals,Shots,Fouls,Yellow Cards,Red Cards,Corner Kicks,Free Kicks,Offsides\n\
                     Home Team,0,5,6,1,0,5,6,6\nAway Team,3,12,6,0,0,3,6,2";
        let pred = "| Team | Goals | Shots | Fouls | Yellow Cards | Red Cards | Corner Kicks | Free Kicks | Offsides |\n\
                    |---|---|---|---|---|---|---|---|---|\n\
                    | Home Team | 0 | 5 | 6 | 1 | 0 | 5 | 6 | 6 |\n\
                    | Away Team | 3 | 12 | 6 | 0 | 0 | 3 | 6 | 4 |";
        let v: Value = serde_json::from_str(&score_impl(pred, truth).unwrap()).unwrap();
        assert!((v["rmse"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(v["error_rate"], 6.25);
        let v: Value = serde_json::from_str(&score_impl("no table here", truth).unwrap()).unwrap();
        assert!(v["malformed"].is_string());
        assert!(score_impl(pred, "junk").is_err());
    }

    #[test]
    fn curve_from_typed_values() {
        let v: Value = serde_json::from_str(&curve_impl("1, 0.5\n0.25").unwrap()).unwrap();
        let pts = v.as_array().unwrap();
        assert_eq!(pts.len(), 11);
        assert!((pts[5]["percent"].as_f64().unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert!(curve_impl("").is_err());
        assert!(curve_impl("1.5").is_err());
    }
}

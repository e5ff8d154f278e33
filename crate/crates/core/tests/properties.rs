mod common;

use proptest::prelude::*;

use common::{naive_count, naive_columns};
use t3_core::evaluation::{
    coverage_curve, default_grid, diagnose_tuples, report, score_instance, Pooling,
};
use t3_core::model::{DifficultyGroup, EventTuple, EventType, PlayerTag, RawEventLabel, SummaryTable, TeamSide};
use t3_core::table_io::{parse_model_table, to_csv, to_markdown, ParsedTableOutcome};
use t3_core::tuples::{integrate, integrate_with_tally, parse_count_tuples, parse_tuples, render_count_tuples, render_tuples};

fn team() -> impl Strategy<Value = TeamSide> {
    prop_oneof![Just(TeamSide::Home), Just(TeamSide::Away)]
}

fn label() -> impl Strategy<Value = RawEventLabel> {
    prop_oneof![
        9 => (0..RawEventLabel::KNOWN.len()).prop_map(|i| RawEventLabel::KNOWN[i].clone()),
        1 => "[a-z]{3,8}".prop_map(|s| RawEventLabel::Unknown(format!("zz {s}"))),
    ]
}

fn tuple() -> impl Strategy<Value = EventTuple> {
    (proptest::option::of(1u32..60), team(), label())
        .prop_map(|(p, t, l)| EventTuple::new(p.map(|n| PlayerTag::new(n).unwrap()), t, l))
}

fn table(max: u32) -> impl Strategy<Value = SummaryTable> {
    (prop::array::uniform8(0..=max), prop::array::uniform8(0..=max))
        .prop_map(|(h, a)| SummaryTable::from_rows(h, a))
}

proptest! {
    #[test]
    fn integrate_matches_naive_recount(tuples in prop::collection::vec(tuple(), 0..30)) {
        prop_assert_eq!(*integrate(&tuples).rows(), naive_count(&tuples));
    }

    #[test]
    fn integrate_is_order_invariant(mut tuples in prop::collection::vec(tuple(), 0..30), seed in any::<u64>()) {
        let before = integrate(&tuples);
        let n = tuples.len().max(1);
        tuples.rotate_left(seed as usize % n);
        tuples.reverse();
        prop_assert_eq!(integrate(&tuples), before);
    }

    #[test]
    fn integrate_is_additive(a in prop::collection::vec(tuple(), 0..20), b in prop::collection::vec(tuple(), 0..20)) {
        let joined: Vec<_> = a.iter().chain(&b).cloned().collect();
        prop_assert_eq!(integrate(&joined), integrate(&a).add(&integrate(&b)));
    }

    #[test]
    fn integrate_conserves_increments(tuples in prop::collection::vec(tuple(), 0..30)) {
        let tally = integrate_with_tally(&tuples);
        let expected: usize = tuples.iter().map(|t| naive_columns(t.label.canonical()).len()).sum();
        prop_assert_eq!(tally.table.total() as usize, expected);
        prop_assert_eq!(tally.unknown, tuples.iter().filter(|t| t.label.is_unknown()).count());
    }

    #[test]
    fn rendered_tuples_parse_back(tuples in prop::collection::vec(tuple(), 0..30)) {
        let known: Vec<_> = tuples.into_iter().filter(|t| !t.label.is_unknown()).collect();
        let report = parse_tuples(&render_tuples(&known));
        prop_assert_eq!(report.tuples, known);
        prop_assert!(report.rejected_lines.is_empty());
    }

    #[test]
    fn count_tuples_round_trip(t in table(50)) {
        prop_assert_eq!(parse_count_tuples(&render_count_tuples(&t)), t);
    }

    #[test]
    fn csv_and_markdown_round_trip(t in table(99)) {
        prop_assert_eq!(parse_model_table(&to_csv(&t)), ParsedTableOutcome::Ok(t));
        prop_assert_eq!(parse_model_table(&to_markdown(&t)), ParsedTableOutcome::Ok(t));
        let chatty = format!("Sure, here it is:\n\n```csv\n{}\n```\nHope this helps.", to_csv(&t));
        prop_assert_eq!(parse_model_table(&chatty), ParsedTableOutcome::Ok(t));
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,200}") {
        let _ = parse_model_table(&s);
        let _ = parse_tuples(&s);
    }

    #[test]
    fn scores_are_row_swap_invariant(p in table(20), t in table(20)) {
        let a = score_instance(&p, &t);
        let b = score_instance(&p.with_rows_swapped(), &t.with_rows_swapped());
        prop_assert_eq!(a.rmse(), b.rmse());
        prop_assert_eq!(a.error_rate(), b.error_rate());
    }

    #[test]
    fn identical_tables_score_zero(t in table(30)) {
        let s = score_instance(&t, &t);
        prop_assert_eq!(s.rmse(), 0.0);
        prop_assert_eq!(s.error_rate(), 0.0);
    }

    #[test]
    fn group_mse_recombines(pairs in prop::collection::vec((table(15), table(15)), 1..6)) {
        let pairs: Vec<_> = pairs.into_iter().map(|(p, t)| (ParsedTableOutcome::Ok(p), t)).collect();
        let r = report(&pairs);
        let avg = r.average.unwrap();
        let weighted: f64 = DifficultyGroup::ALL.iter().map(|g| {
            let m = r.group(*g).unwrap();
            m.mse() * m.cells as f64
        }).sum::<f64>() / avg.cells as f64;
        prop_assert!((avg.mse() - weighted).abs() <= 1e-12);
    }

    #[test]
    fn instance_mean_pooling_averages_instances(pairs in prop::collection::vec((table(15), table(15)), 1..6)) {
        let outcomes: Vec<_> = pairs.iter().map(|(p, t)| (ParsedTableOutcome::Ok(*p), *t)).collect();
        let r = t3_core::evaluation::report_with(&outcomes, Pooling::InstanceMean);
        let mean_er = pairs.iter().map(|(p, t)| score_instance(p, t).error_rate()).sum::<f64>() / pairs.len() as f64;
        prop_assert!((r.average.unwrap().error_rate - mean_er).abs() < 1e-9);
    }

    #[test]
    fn coverage_curve_is_monotone(covs in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let curve = coverage_curve(&covs, &default_grid()).unwrap();
        prop_assert_eq!(curve[0].percent, 100.0);
        for w in curve.windows(2) {
            prop_assert!(w[1].percent <= w[0].percent);
        }
        for p in &curve {
            let direct = covs.iter().filter(|c| **c * 100.0 >= p.threshold - 1e-9).count();
            prop_assert_eq!(p.percent, 100.0 * direct as f64 / covs.len() as f64);
        }
    }

    #[test]
    fn taxonomy_counts_balance(
        truth in prop::collection::vec(tuple(), 0..20),
        extracted in prop::collection::vec(tuple(), 0..20),
    ) {
        let d = diagnose_tuples(&extracted, &truth);
        let exact = truth.len() - d.total.missing - d.total.wrong;
        prop_assert_eq!(exact + d.total.wrong + d.total.spurious, extracted.len());
        prop_assert!(d.total.wrong <= truth.len().min(extracted.len()));
        let per_event_sum: usize = d.per_event.values().map(|c| c.missing + c.wrong + c.spurious).sum();
        prop_assert_eq!(
            per_event_sum + d.unclassified.missing + d.unclassified.wrong + d.unclassified.spurious,
            d.total.missing + d.total.wrong + d.total.spurious
        );
        let clean = diagnose_tuples(&truth, &truth);
        prop_assert!(clean.total.is_clean());
    }
}

#[test]
fn difficulty_groups_cover_sixteen_cells() {
    let cells: usize = DifficultyGroup::ALL.iter().map(|g| g.members().count() * 2).sum();
    assert_eq!(cells, 16);
    assert_eq!(DifficultyGroup::Easy.members().collect::<Vec<_>>(), vec![EventType::Goals, EventType::RedCards]);
}

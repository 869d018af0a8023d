mod common;

use common::{metric_table, runs};
use proptest::prelude::*;
use segcond_core::eval::{edit_score, f1_at, frame_accuracy, score_videos, MetricsReport, F1_THRESHOLDS, F1_MATCHING_RULE};

#[test]
fn hand_computed_table() {
    let table = metric_table();
    assert!(table.len() >= 5);
    for case in &table {
        assert_eq!(edit_score(&case.pred, &case.gt).unwrap(), case.edit, "{}: edit", case.name);
        for (tau, expected) in F1_THRESHOLDS.iter().zip(case.f1) {
            assert_eq!(f1_at(&case.pred, &case.gt, *tau).unwrap(), expected, "{}: F1@{tau}", case.name);
        }
    }
}

#[test]
fn empty_inputs_are_rejected() {
    assert!(edit_score(&[], &[0]).is_err());
    assert!(f1_at(&[0], &[], 0.1).is_err());
    assert!(frame_accuracy(&[], &[]).is_err());
    assert!(score_videos(&[]).is_err());
}

#[test]
fn report_round_trips_through_json() {
    let gt = runs(&[(0, 3), (1, 4)]);
    let pred = runs(&[(0, 4), (1, 3)]);
    let report = MetricsReport {
        metrics: score_videos(&[(pred, gt.clone()), (gt.clone(), gt)]).unwrap(),
        videos: 2,
        f1_matching: F1_MATCHING_RULE.into(),
        smoothing_width: 15,
        storage: None,
        config: serde_json::json!({"seed": 3}),
    };
    let text = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<MetricsReport>(&text).unwrap(), report);
}

fn labelled_runs() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..4, 1usize..8), 1..10)
}

proptest! {
    #[test]
    fn scores_stay_in_range_and_f1_falls_with_tau(p in labelled_runs(), g in labelled_runs()) {
        let (pred, gt) = (runs(&p), runs(&g));
        let e = edit_score(&pred, &gt).unwrap();
        prop_assert!((0.0..=100.0).contains(&e));
        let taus = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0];
        let f: Vec<f64> = taus.iter().map(|t| f1_at(&pred, &gt, *t).unwrap()).collect();
        prop_assert!(f.iter().all(|v| (0.0..=100.0).contains(v)));
        prop_assert!(f.windows(2).all(|w| w[1] <= w[0]), "{:?}", f);
        if pred.len() == gt.len() {
            let acc = frame_accuracy(&pred, &gt).unwrap();
            prop_assert!((0.0..=100.0).contains(&acc));
        }
    }

    #[test]
    fn edit_is_invariant_to_uniform_stretching(p in labelled_runs(), g in labelled_runs(), s in 2usize..4) {
        let stretch = |r: &[(usize, usize)]| runs(&r.iter().map(|&(a, n)| (a, n * s)).collect::<Vec<_>>());
        prop_assert_eq!(edit_score(&runs(&p), &runs(&g)).unwrap(), edit_score(&stretch(&p), &stretch(&g)).unwrap());
    }

    #[test]
    fn perfect_f1_means_every_prediction_matched(g in labelled_runs()) {
        let gt = runs(&g);
        for tau in F1_THRESHOLDS {
            prop_assert_eq!(f1_at(&gt, &gt, tau).unwrap(), 100.0);
        }
    }
}

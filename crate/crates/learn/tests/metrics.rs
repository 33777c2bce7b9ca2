//! Metric implementations against brute-force oracles.

use proptest::prelude::*;
use tutorbot_learn::metrics::{accuracy, dialogue_accuracy, macro_f1};

/// Macro F1 straight from the definition: for every label in either list, count
/// true positives, false positives and false negatives by scanning.
fn oracle_macro_f1(gold: &[String], pred: &[String]) -> f64 {
    let mut labels: Vec<&String> = gold.iter().chain(pred).collect();
    labels.sort();
    labels.dedup();
    if labels.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for l in &labels {
        let tp = (0..gold.len()).filter(|&i| &gold[i] == *l && &pred[i] == *l).count() as f64;
        let fp = (0..gold.len()).filter(|&i| &gold[i] != *l && &pred[i] == *l).count() as f64;
        let fnn = (0..gold.len()).filter(|&i| &gold[i] == *l && &pred[i] != *l).count() as f64;
        // F1 = 2TP / (2TP + FP + FN)
        total += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fnn) };
    }
    total / labels.len() as f64
}

fn labels(n: usize) -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    let l = prop::sample::select(vec!["a", "b", "c", "d", "e"]).prop_map(String::from);
    (prop::collection::vec(l.clone(), n), prop::collection::vec(l, n))
}

proptest! {
    #[test]
    fn macro_f1_matches_the_definition((gold, pred) in (0usize..40).prop_flat_map(labels)) {
        let got = macro_f1(&gold, &pred);
        prop_assert!((got - oracle_macro_f1(&gold, &pred)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn perfect_prediction_scores_one(gold in prop::collection::vec("[a-e]", 1..40)) {
        prop_assert!((macro_f1(&gold, &gold) - 1.0).abs() < 1e-12);
        prop_assert_eq!(accuracy(&gold, &gold), 1.0);
    }

    #[test]
    fn dialogue_accuracy_is_the_mean_of_turn_shares(
        ds in prop::collection::vec((1usize..10).prop_flat_map(labels), 1..8)
    ) {
        let mut sum = 0.0;
        for (g, p) in &ds {
            let hits = g.iter().zip(p).filter(|(a, b)| a == b).count();
            sum += hits as f64 / g.len() as f64;
        }
        prop_assert!((dialogue_accuracy(&ds) - sum / ds.len() as f64).abs() < 1e-12);
    }
}

#[test]
fn constant_predictor_on_two_balanced_classes_scores_a_third() {
    let gold: Vec<&str> = ["A", "B"].repeat(50);
    let pred = vec!["A"; 100];
    assert!((macro_f1(&gold, &pred) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn classes_absent_from_both_lists_do_not_count() {
    let gold = ["A", "B"];
    assert_eq!(macro_f1(&gold, &gold), 1.0);
    assert_eq!(macro_f1::<&str>(&[], &[]), 0.0);
}

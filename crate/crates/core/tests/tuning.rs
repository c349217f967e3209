use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use recsmith::data::InteractionLog;
use recsmith::metrics::{GroundTruth, MetricSpec};
use recsmith::models::{Interactions, ModelConfig};
use recsmith::tuning::*;
use serde_json::{json, Value};

fn space(value: Value) -> SearchSpace {
    serde_json::from_value(value).unwrap()
}

#[test]
fn int_uniform_is_uniform() {
    let s = space(json!({"n": {"kind": "int_uniform", "low": 1, "high": 10}}));
    let mut counts: HashMap<i64, usize> = HashMap::new();
    let trials = 20_000;
    for t in 0..trials {
        let p = suggest(&s, 99, t).unwrap();
        *counts.entry(p["n"].as_i64().unwrap()).or_default() += 1;
    }
    assert_eq!(counts.len(), 10);
    for (v, c) in counts {
        let f = c as f64 / trials as f64;
        assert!((f - 0.1).abs() <= 0.02, "{v}: {f}");
    }
}

#[test]
fn log_uniform_median_is_geometric_mean() {
    let s = space(json!({"lr": {"kind": "log_uniform", "low": 0.001, "high": 10.0}}));
    let mut draws: Vec<f64> = (0..5001).map(|t| suggest(&s, 5, t).unwrap()["lr"].as_f64().unwrap()).collect();
    draws.sort_by(f64::total_cmp);
    let median = draws[draws.len() / 2];
    assert!(median > 0.1 / 1.3 && median < 0.1 * 1.3, "{median}");
    assert!(draws.iter().all(|&x| (0.001..=10.0).contains(&x)));
}

#[test]
fn invalid_spaces_are_rejected() {
    for bad in [
        json!({}),
        json!({"x": {"kind": "uniform", "low": 1.0, "high": 1.0}}),
        json!({"x": {"kind": "log_uniform", "low": 0.0, "high": 1.0}}),
        json!({"x": {"kind": "categorical", "choices": []}}),
    ] {
        let s: SearchSpace = serde_json::from_value(bad).unwrap();
        assert_eq!(s.validate().unwrap_err().code(), "InvalidSpace");
    }
    let s = space(json!({"x": {"kind": "uniform", "low": 0.0, "high": 1.0}}));
    assert_eq!(grid(&s).unwrap_err().code(), "NonFiniteSpace");
}

fn dims() -> impl Strategy<Value = Vec<(String, Value)>> {
    let dim = prop_oneof![
        (-5i64..5, 1i64..4).prop_map(|(lo, w)| json!({"kind": "int_uniform", "low": lo, "high": lo + w})),
        prop::collection::btree_set(0u8..9, 1..4)
            .prop_map(|c| json!({"kind": "categorical", "choices": c.into_iter().collect::<Vec<_>>()})),
    ];
    prop::collection::vec(dim, 1..4)
        .prop_map(|v| v.into_iter().enumerate().map(|(i, d)| (format!("p{i}"), d)).collect())
}

fn cardinality(d: &Value) -> usize {
    match d["kind"].as_str().unwrap() {
        "int_uniform" => (d["high"].as_i64().unwrap() - d["low"].as_i64().unwrap() + 1) as usize,
        _ => d["choices"].as_array().unwrap().len(),
    }
}

proptest! {
    #[test]
    fn grid_enumerates_the_product(dims in dims()) {
        let s = space(Value::Object(dims.iter().cloned().collect()));
        let points = grid(&s).unwrap();
        let want: usize = dims.iter().map(|(_, d)| cardinality(d)).product();
        prop_assert_eq!(points.len(), want);
        let distinct: HashSet<String> = points.iter().map(|p| serde_json::to_string(p).unwrap()).collect();
        prop_assert_eq!(distinct.len(), want);
        prop_assert!(points.iter().all(|p| s.contains(p)));
    }

    #[test]
    fn suggestions_lie_in_space_and_are_reproducible(dims in dims(), seed in any::<u64>(), t in 0u64..1000) {
        let mut all = dims.clone();
        all.push(("u".into(), json!({"kind": "uniform", "low": -1.0, "high": 2.0})));
        let s = space(Value::Object(all.into_iter().collect()));
        let p = suggest(&s, seed, t).unwrap();
        prop_assert!(s.contains(&p));
        prop_assert_eq!(p, suggest(&s, seed, t).unwrap());
    }
}

fn toy_problem() -> (Interactions, GroundTruth<u32>) {
    let mut rows = Vec::new();
    let mut holdout = Vec::new();
    for u in 0..20u32 {
        let block = (u % 2) * 5;
        for i in 0..4 {
            rows.push((u, block + (u + i) % 5, i as i64, 1.0));
        }
        holdout.push((u, HashSet::from([block + (u + 4) % 5])));
    }
    let log: InteractionLog<u32> = rows.into_iter().collect();
    (Interactions::new(log, 20, 10).unwrap(), GroundTruth::from_sets(holdout))
}

#[test]
fn budget_one_and_failures() {
    let (train, valid) = toy_problem();
    let metric: MetricSpec = "ndcg@5".parse().unwrap();
    let objective = Objective { train: &train, valid: &valid, metric: &metric, filter_seen: true };
    let base = ModelConfig::from_name("item_knn").unwrap();
    let s = space(json!({"num_neighbors": {"kind": "int_uniform", "low": 1, "high": 5}}));
    let r = optimize(config_factory(&base), &s, 1, &objective, 3).unwrap();
    assert_eq!(r.trials.len(), 1);
    assert_eq!(r.best, r.trials[0]);
    assert_eq!(optimize(config_factory(&base), &s, 0, &objective, 3).unwrap_err().code(), "InvalidParameter");

    // a negative shrink is rejected by the model, so every trial fails
    let s = space(json!({"shrink": {"kind": "uniform", "low": -5.0, "high": -1.0}}));
    let err = optimize(config_factory(&base), &s, 3, &objective, 3).unwrap_err();
    assert_eq!(err.code(), "AllTrialsFailed");
}

#[test]
fn grid_search_finds_the_best_point() {
    let (train, valid) = toy_problem();
    let metric: MetricSpec = "hitrate@3".parse().unwrap();
    let objective = Objective { train: &train, valid: &valid, metric: &metric, filter_seen: true };
    let base = ModelConfig::from_name("item_knn").unwrap();
    let s = space(json!({"num_neighbors": {"kind": "categorical", "choices": [1, 2, 8]}}));
    let r = optimize_grid(config_factory(&base), &s, &objective).unwrap();
    assert_eq!(r.trials.len(), 3);
    let max = r.trials.iter().filter_map(|t| t.metric_value).fold(f64::MIN, f64::max);
    assert_eq!(r.best.metric_value, Some(max));
    let first_best = r.trials.iter().position(|t| t.metric_value == Some(max)).unwrap();
    assert_eq!(r.best.index, first_best);
}

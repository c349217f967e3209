//! Seeded random search and grid search over model parameters.
//!
//! Trial `t` draws its parameters from a generator derived from
//! `(seed, t)` alone, so the trials of a budget-`B` run are a prefix of any
//! larger run with the same seed.

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::RecommendationList;
use crate::error::{Error, Result};
use crate::metrics::{GroundTruth, MetricSpec, OfflineMetrics, TrainStats};
use crate::models::{Interactions, Model, ModelConfig, Recommender};
use crate::rng::SplitMix64;

pub type Params = IndexMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dimension {
    Uniform {
        low: f64,
        high: f64,
    },
    LogUniform {
        low: f64,
        high: f64,
    },
    /// Inclusive on both ends.
    IntUniform {
        low: i64,
        high: i64,
    },
    Categorical {
        choices: Vec<Value>,
    },
}

impl Dimension {
    fn validate(&self, name: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidSpace(format!("{name}: {why}")));
        match self {
            Dimension::Uniform { low, high } | Dimension::LogUniform { low, high } => {
                if !low.is_finite() || !high.is_finite() || low >= high {
                    return bad("requires finite low < high");
                }
                if matches!(self, Dimension::LogUniform { .. }) && *low <= 0.0 {
                    return bad("log_uniform requires low > 0");
                }
            }
            Dimension::IntUniform { low, high } => {
                if low >= high {
                    return bad("requires low < high");
                }
            }
            Dimension::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("categorical needs at least one choice");
                }
                for (i, c) in choices.iter().enumerate() {
                    if choices[..i].contains(c) {
                        return bad("categorical choices must be unique");
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut SplitMix64) -> Value {
        match self {
            Dimension::Uniform { low, high } => {
                let v = low + rng.next_f64() * (high - low);
                Value::from(v.min(*high).max(*low))
            }
            Dimension::LogUniform { low, high } => {
                let (a, b) = (low.ln(), high.ln());
                Value::from((a + rng.next_f64() * (b - a)).exp().clamp(*low, *high))
            }
            Dimension::IntUniform { low, high } => {
                let offset = match high.abs_diff(*low).checked_add(1) {
                    Some(span) => rng.below(span),
                    None => rng.next(),
                };
                Value::from(low.wrapping_add(offset as i64))
            }
            Dimension::Categorical { choices } => choices[rng.below(choices.len() as u64) as usize].clone(),
        }
    }

    /// Whether `value` lies in this dimension.
    pub fn contains(&self, value: &Value) -> bool {
        match self {
            Dimension::Uniform { low, high } | Dimension::LogUniform { low, high } => {
                value.as_f64().is_some_and(|v| v >= *low && v <= *high)
            }
            Dimension::IntUniform { low, high } => value.as_i64().is_some_and(|v| v >= *low && v <= *high),
            Dimension::Categorical { choices } => choices.contains(value),
        }
    }

    fn finite_values(&self) -> Option<Vec<Value>> {
        match self {
            Dimension::IntUniform { low, high } => Some((*low..=*high).map(Value::from).collect()),
            Dimension::Categorical { choices } => Some(choices.clone()),
            _ => None,
        }
    }
}

/// Named dimensions in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    dims: IndexMap<String, Dimension>,
}

impl SearchSpace {
    pub fn new(dims: impl IntoIterator<Item = (String, Dimension)>) -> Result<Self> {
        let space = Self { dims: dims.into_iter().collect() };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidSpace("search space has no dimensions".into()));
        }
        for (name, dim) in &self.dims {
            dim.validate(name)?;
        }
        Ok(())
    }

    pub fn dimensions(&self) -> impl Iterator<Item = (&str, &Dimension)> + '_ {
        self.dims.iter().map(|(n, d)| (n.as_str(), d))
    }

    pub fn contains(&self, params: &Params) -> bool {
        params.len() == self.dims.len() && self.dims.iter().all(|(n, d)| params.get(n).is_some_and(|v| d.contains(v)))
    }
}

/// Parameters of trial `trial_index`; a pure function of its arguments.
pub fn suggest(space: &SearchSpace, seed: u64, trial_index: u64) -> Result<Params> {
    space.validate()?;
    let mut rng = SplitMix64::derive(seed, trial_index);
    Ok(space.dims.iter().map(|(name, dim)| (name.clone(), dim.sample(&mut rng))).collect())
}

/// Cartesian product in lexicographic order, first dimension slowest.
pub fn grid(space: &SearchSpace) -> Result<Vec<Params>> {
    space.validate()?;
    let mut axes = Vec::with_capacity(space.dims.len());
    for (name, dim) in &space.dims {
        axes.push((name, dim.finite_values().ok_or_else(|| Error::NonFiniteSpace(name.clone()))?));
    }
    let mut out: Vec<Params> = vec![Params::new()];
    for (name, values) in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.insert(name.clone(), v.clone());
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: Params,
    pub status: TrialStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: Trial,
    pub trials: Vec<Trial>,
}

/// What a trial is scored on: fit on `train`, predict top-K for the
/// validation queries, evaluate one `metric@k`.
pub struct Objective<'a> {
    pub train: &'a Interactions,
    pub valid: &'a GroundTruth<u32>,
    pub metric: &'a MetricSpec,
    pub filter_seen: bool,
}

impl Objective<'_> {
    fn k(&self) -> Result<usize> {
        match self.metric.k_values() {
            [k] => Ok(*k),
            _ => Err(Error::param("metric", "optimisation needs exactly one cutoff")),
        }
    }

    fn score(&self, model: &mut dyn Recommender, train_stats: &TrainStats<u32>) -> Result<f64> {
        let k = self.k()?;
        model.fit(self.train)?;
        let queries: Vec<u32> = self.valid.queries().copied().collect();
        let recs: RecommendationList<u32> = model.predict(&queries, k, self.filter_seen)?;
        let out = OfflineMetrics::new(vec![self.metric.clone()])
            .ground_truth(self.valid)
            .train(train_stats)
            .compute(&recs)?;
        let value = out.values().next().copied().unwrap_or(f64::NAN);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::param("metric", "evaluated to a non-finite value"))
        }
    }
}

fn run_trials<F, M>(factory: &F, points: Vec<Params>, objective: &Objective) -> Result<SearchResult>
where
    F: Fn(&Params) -> Result<M> + Sync,
    M: Recommender,
{
    objective.k()?;
    if objective.valid.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let train_stats = TrainStats::from_log(objective.train.log());
    let trials: Vec<Trial> = points
        .into_par_iter()
        .enumerate()
        .map(|(index, params)| {
            let outcome = factory(&params).and_then(|mut m| objective.score(&mut m, &train_stats));
            match outcome {
                Ok(v) => Trial { index, params, status: TrialStatus::Ok, metric_value: Some(v), error: None },
                Err(e) => {
                    log::warn!("trial {index} failed: {e}");
                    Trial { index, params, status: TrialStatus::Failed, metric_value: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let mut best: Option<&Trial> = None;
    for t in &trials {
        if let Some(v) = t.metric_value {
            if best.is_none_or(|b| v > b.metric_value.unwrap()) {
                best = Some(t);
            }
        }
    }
    let best = best.cloned().ok_or(Error::AllTrialsFailed(trials.len()))?;
    Ok(SearchResult { best, trials })
}

/// Random search with `budget` trials; failed trials count against the budget.
pub fn optimize<F, M>(
    factory: F,
    space: &SearchSpace,
    budget: usize,
    objective: &Objective,
    seed: u64,
) -> Result<SearchResult>
where
    F: Fn(&Params) -> Result<M> + Sync,
    M: Recommender,
{
    if budget == 0 {
        return Err(Error::param("budget", "must be at least 1"));
    }
    let points = (0..budget as u64).map(|t| suggest(space, seed, t)).collect::<Result<Vec<_>>>()?;
    run_trials(&factory, points, objective)
}

/// Evaluates every point of a finite space.
pub fn optimize_grid<F, M>(factory: F, space: &SearchSpace, objective: &Objective) -> Result<SearchResult>
where
    F: Fn(&Params) -> Result<M> + Sync,
    M: Recommender,
{
    run_trials(&factory, grid(space)?, objective)
}

/// Factory that overlays trial parameters on a base model config.
pub fn config_factory(base: &ModelConfig) -> impl Fn(&Params) -> Result<Model> + Sync + '_ {
    move |params| {
        let mut value = serde_json::to_value(base).expect("model config serialises");
        let obj = value.as_object_mut().expect("model config is an object");
        for (k, v) in params {
            if k == "name" {
                return Err(Error::InvalidSpace("the model name cannot be searched".into()));
            }
            obj.insert(k.clone(), v.clone());
        }
        Ok(ModelConfig::from_json(&value)?.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn space(v: Value) -> SearchSpace {
        let s: SearchSpace = serde_json::from_value(v).unwrap();
        s.validate().unwrap();
        s
    }

    #[test]
    fn parses_config_form() {
        let s = space(json!({"num_neighbors": {"kind": "int_uniform", "low": 10, "high": 500}}));
        let p = suggest(&s, 3, 0).unwrap();
        let v = p["num_neighbors"].as_i64().unwrap();
        assert!((10..=500).contains(&v));
    }

    #[test]
    fn invalid_spaces() {
        for bad in [
            json!({"a": {"kind": "uniform", "low": 1.0, "high": 1.0}}),
            json!({"a": {"kind": "log_uniform", "low": 0.0, "high": 1.0}}),
            json!({"a": {"kind": "categorical", "choices": []}}),
            json!({"a": {"kind": "categorical", "choices": [1, 1]}}),
            json!({"a": {"kind": "int_uniform", "low": 3, "high": 2}}),
        ] {
            let s: SearchSpace = serde_json::from_value(bad).unwrap();
            assert_eq!(s.validate().unwrap_err().code(), "InvalidSpace");
        }
    }

    #[test]
    fn single_choice_is_constant() {
        let s = space(json!({"m": {"kind": "categorical", "choices": ["x"]}}));
        for t in 0..20 {
            assert_eq!(suggest(&s, 9, t).unwrap()["m"], json!("x"));
        }
    }

    #[test]
    fn grid_order_and_errors() {
        let s = space(json!({
            "a": {"kind": "categorical", "choices": ["p", "q"]},
            "b": {"kind": "int_uniform", "low": 0, "high": 2}
        }));
        let g = grid(&s).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0]["a"], json!("p"));
        assert_eq!(g[2]["b"], json!(2));
        assert_eq!(g[3]["a"], json!("q"));
        let s = space(json!({"x": {"kind": "uniform", "low": 0.0, "high": 1.0}}));
        assert_eq!(grid(&s).unwrap_err().code(), "NonFiniteSpace");
    }

    #[test]
    fn factory_overlays_params() {
        let base = ModelConfig::from_name("item_knn").unwrap();
        let f = config_factory(&base);
        let mut p = Params::new();
        p.insert("num_neighbors".into(), json!(7));
        match f(&p).unwrap() {
            Model::ItemKnn(m) => assert_eq!(m.params.num_neighbors, 7),
            other => panic!("unexpected model {}", other.name()),
        }
        p.insert("bogus".into(), json!(1));
        assert!(f(&p).is_err());
    }
}

//! Ranking-quality and beyond-accuracy metrics.
//!
//! Accuracy metrics are averaged over queries that have a non-empty ground
//! truth set *and* appear in the recommendation input; a present query with
//! an empty list contributes 0. Beyond-accuracy metrics average over every
//! query in the recommendation input. Per-query values are reduced with a
//! compensated sum in input order, so results do not depend on the number of
//! worker threads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::{IndexMap, IndexSet};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{InteractionLog, RecommendationList, Token};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricName {
    Precision,
    Recall,
    Map,
    Mrr,
    Ndcg,
    HitRate,
    RocAuc,
    Coverage,
    Novelty,
    Surprisal,
    Unexpectedness,
    CategoricalDiversity,
}

impl MetricName {
    pub const ALL: [MetricName; 12] = [
        MetricName::Precision,
        MetricName::Recall,
        MetricName::Map,
        MetricName::Mrr,
        MetricName::Ndcg,
        MetricName::HitRate,
        MetricName::RocAuc,
        MetricName::Coverage,
        MetricName::Novelty,
        MetricName::Surprisal,
        MetricName::Unexpectedness,
        MetricName::CategoricalDiversity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::Map => "map",
            MetricName::Mrr => "mrr",
            MetricName::Ndcg => "ndcg",
            MetricName::HitRate => "hitrate",
            MetricName::RocAuc => "rocauc",
            MetricName::Coverage => "coverage",
            MetricName::Novelty => "novelty",
            MetricName::Surprisal => "surprisal",
            MetricName::Unexpectedness => "unexpectedness",
            MetricName::CategoricalDiversity => "categorical_diversity",
        }
    }

    /// Needs ground truth and averages over ground-truth queries.
    pub fn is_accuracy(self) -> bool {
        matches!(
            self,
            MetricName::Precision
                | MetricName::Recall
                | MetricName::Map
                | MetricName::Mrr
                | MetricName::Ndcg
                | MetricName::HitRate
                | MetricName::RocAuc
        )
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricName::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// A metric evaluated at one or more cutoffs; `k_values` is sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricSpec {
    name: MetricName,
    k_values: Vec<usize>,
}

impl MetricSpec {
    pub fn new(name: MetricName, k_values: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut k_values: Vec<usize> = k_values.into_iter().collect();
        if k_values.is_empty() {
            return Err(Error::param(name.as_str(), "needs at least one cutoff"));
        }
        if k_values.contains(&0) {
            return Err(Error::param(name.as_str(), "cutoffs must be positive"));
        }
        k_values.sort_unstable();
        k_values.dedup();
        Ok(Self { name, k_values })
    }

    pub fn name(&self) -> MetricName {
        self.name
    }

    pub fn k_values(&self) -> &[usize] {
        &self.k_values
    }

    /// Report keys, `name@k`, in ascending `k`.
    pub fn keys(&self) -> impl Iterator<Item = String> + '_ {
        self.k_values.iter().map(move |k| metric_key(self.name.as_str(), *k))
    }
}

pub fn metric_key(name: &str, k: usize) -> String {
    format!("{name}@{k}")
}

/// `"ndcg@10"` or `"ndcg@1,10"`.
impl FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, ks) = s.trim().split_once('@').ok_or_else(|| Error::UnknownMetric(s.to_string()))?;
        let name: MetricName = name.trim().parse()?;
        let ks = ks
            .split(',')
            .map(|k| k.trim().parse::<usize>().map_err(|_| Error::param(name.as_str(), format!("bad cutoff {k:?}"))))
            .collect::<Result<Vec<_>>>()?;
        MetricSpec::new(name, ks)
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ks: Vec<String> = self.k_values.iter().map(usize::to_string).collect();
        write!(f, "{}@{}", self.name, ks.join(","))
    }
}

impl Serialize for MetricSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Object { name: String, k: KValues },
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum KValues {
            One(usize),
            Many(Vec<usize>),
        }
        let spec = match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse(),
            Raw::Object { name, k } => {
                let ks = match k {
                    KValues::One(k) => vec![k],
                    KValues::Many(ks) => ks,
                };
                name.parse().and_then(|n| MetricSpec::new(n, ks))
            }
        };
        spec.map_err(serde::de::Error::custom)
    }
}

/// Parses a list such as `ndcg@10,map@10,coverage@100`. A bare number
/// continues the previous entry (`ndcg@1,10`); repeated names are merged.
pub fn parse_metric_list(s: &str) -> Result<Vec<MetricSpec>> {
    let mut raw: Vec<(MetricName, Vec<usize>)> = Vec::new();
    for token in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match token.split_once('@') {
            Some(_) => {
                let spec: MetricSpec = token.parse()?;
                raw.push((spec.name, spec.k_values));
            }
            None => {
                let k = token.parse::<usize>().map_err(|_| Error::UnknownMetric(token.to_string()))?;
                match raw.last_mut() {
                    Some((_, ks)) => ks.push(k),
                    None => return Err(Error::UnknownMetric(token.to_string())),
                }
            }
        }
    }
    merge_specs(raw.into_iter().map(|(n, ks)| MetricSpec { name: n, k_values: ks }))
}

/// Combines specs sharing a name, keeping first-appearance order.
pub fn merge_specs(specs: impl IntoIterator<Item = MetricSpec>) -> Result<Vec<MetricSpec>> {
    let mut merged: IndexMap<MetricName, Vec<usize>> = IndexMap::new();
    for spec in specs {
        merged.entry(spec.name).or_default().extend(spec.k_values);
    }
    merged.into_iter().map(|(n, ks)| MetricSpec::new(n, ks)).collect()
}

/// Relevant items per query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth<Id: Token = String> {
    sets: IndexMap<Id, HashSet<Id>>,
}

impl<Id: Token> GroundTruth<Id> {
    /// Queries with an empty set are dropped.
    pub fn from_sets(sets: impl IntoIterator<Item = (Id, HashSet<Id>)>) -> Self {
        Self { sets: sets.into_iter().filter(|(_, s)| !s.is_empty()).collect() }
    }

    /// Relevant items are the test rows with `rating >= min_rating` (all rows when `None`).
    pub fn from_log(test: &InteractionLog<Id>, min_rating: Option<f64>) -> Self {
        let mut sets: IndexMap<Id, HashSet<Id>> = IndexMap::new();
        for row in test.iter() {
            if min_rating.is_none_or(|m| row.rating >= m) {
                sets.entry(row.query.clone()).or_default().insert(row.item.clone());
            }
        }
        Self { sets }
    }

    pub fn get(&self, query: &Id) -> Option<&HashSet<Id>> {
        self.sets.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &Id> + '_ {
        self.sets.keys()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// Training-log statistics used by coverage, novelty and surprisal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats<Id: Token = String> {
    history: HashMap<Id, HashSet<Id>>,
    item_users: HashMap<Id, usize>,
}

impl<Id: Token> TrainStats<Id> {
    pub fn from_log(train: &InteractionLog<Id>) -> Self {
        let mut history: HashMap<Id, HashSet<Id>> = HashMap::new();
        for row in train.iter() {
            history.entry(row.query.clone()).or_default().insert(row.item.clone());
        }
        let mut item_users: HashMap<Id, usize> = HashMap::new();
        for items in history.values() {
            for item in items {
                *item_users.entry(item.clone()).or_default() += 1;
            }
        }
        Self { history, item_users }
    }

    pub fn n_queries(&self) -> usize {
        self.history.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_users.len()
    }

    pub fn has_seen(&self, query: &Id, item: &Id) -> bool {
        self.history.get(query).is_some_and(|h| h.contains(item))
    }

    /// `−log2(n_users(i) / n_queries) / log2(n_queries)`, and 1 for items absent from training.
    pub fn self_information(&self, item: &Id) -> f64 {
        match self.item_users.get(item) {
            None => 1.0,
            Some(_) if self.n_queries() < 2 => 0.0,
            Some(&n) => {
                let nq = self.n_queries() as f64;
                -(n as f64 / nq).log2() / nq.log2()
            }
        }
    }
}

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn top<Id>(recs: &[Id], k: usize) -> &[Id] {
    &recs[..recs.len().min(k)]
}

fn hits<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> usize {
    top(recs, k).iter().filter(|i| gt.contains(*i)).count()
}

pub fn precision<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> f64 {
    hits(recs, gt, k) as f64 / k as f64
}

pub fn recall<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> f64 {
    if gt.is_empty() {
        return 0.0;
    }
    hits(recs, gt, k) as f64 / gt.len() as f64
}

/// AP@K normalised by `min(K, |gt|)`, or by `|gt|` when `normalize_by_gt`.
pub fn average_precision<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize, normalize_by_gt: bool) -> f64 {
    let denom = if normalize_by_gt { gt.len() } else { k.min(gt.len()) };
    if denom == 0 {
        return 0.0;
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (r, item) in top(recs, k).iter().enumerate() {
        if gt.contains(item) {
            found += 1;
            sum += found as f64 / (r + 1) as f64;
        }
    }
    sum / denom as f64
}

pub fn reciprocal_rank<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> f64 {
    top(recs, k).iter().position(|i| gt.contains(i)).map_or(0.0, |p| 1.0 / (p + 1) as f64)
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-gain NDCG with discount `1 / log2(1 + rank)`.
pub fn ndcg<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> f64 {
    let ideal: f64 = (1..=k.min(gt.len())).map(discount).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = top(recs, k).iter().enumerate().filter(|(_, i)| gt.contains(*i)).map(|(r, _)| discount(r + 1)).sum();
    dcg / ideal
}

pub fn hit_rate<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> f64 {
    if top(recs, k).iter().any(|i| gt.contains(i)) {
        1.0
    } else {
        0.0
    }
}

/// Fraction of (relevant, non-relevant) pairs in the top-K list where the
/// relevant item is ranked higher; `None` when either class is absent.
pub fn roc_auc<Id: Token>(recs: &[Id], gt: &HashSet<Id>, k: usize) -> Option<f64> {
    let mut pos_seen = 0usize;
    let mut ordered = 0usize;
    let mut n_neg = 0usize;
    for item in top(recs, k) {
        if gt.contains(item) {
            pos_seen += 1;
        } else {
            n_neg += 1;
            ordered += pos_seen;
        }
    }
    (pos_seen > 0 && n_neg > 0).then(|| ordered as f64 / (pos_seen * n_neg) as f64)
}

/// Share of top-K slots holding items the query did not interact with in training.
pub fn novelty<Id: Token>(query: &Id, recs: &[Id], train: &TrainStats<Id>, k: usize) -> f64 {
    top(recs, k).iter().filter(|i| !train.has_seen(query, i)).count() as f64 / k as f64
}

/// Mean normalised self-information over the filled top-K slots; 0 for an empty list.
pub fn surprisal<Id: Token>(recs: &[Id], train: &TrainStats<Id>, k: usize) -> f64 {
    let slots = top(recs, k);
    if slots.is_empty() {
        return 0.0;
    }
    slots.iter().map(|i| train.self_information(i)).sum::<f64>() / slots.len() as f64
}

/// Share of top-K slots whose item is absent from the baseline's top-K.
pub fn unexpectedness<Id: Token>(recs: &[Id], baseline: &[Id], k: usize) -> f64 {
    let base: HashSet<&Id> = top(baseline, k).iter().collect();
    top(recs, k).iter().filter(|i| !base.contains(i)).count() as f64 / k as f64
}

/// Distinct categories in the top-K over `min(K, list length)`. Items with
/// no known category add no category but still occupy a slot.
pub fn categorical_diversity<Id: Token>(recs: &[Id], categories: &HashMap<Id, String>, k: usize) -> f64 {
    let slots = top(recs, k);
    if slots.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&String> = slots.iter().filter_map(|i| categories.get(i)).collect();
    distinct.len() as f64 / slots.len() as f64
}

/// A per-query metric supplied by the caller, averaged like the built-in
/// accuracy metrics.
pub trait UserMetric<Id>: Sync {
    fn compute(&self, recs: &[Id], ground_truth: &HashSet<Id>, k: usize) -> f64;
}

impl<Id, F> UserMetric<Id> for F
where
    F: Fn(&[Id], &HashSet<Id>, usize) -> f64 + Sync,
{
    fn compute(&self, recs: &[Id], ground_truth: &HashSet<Id>, k: usize) -> f64 {
        self(recs, ground_truth, k)
    }
}

struct QueryView<'a, Id> {
    query: &'a Id,
    items: Vec<Id>,
}

fn views<Id: Token>(recs: &RecommendationList<Id>) -> Vec<QueryView<'_, Id>> {
    recs.lists().iter().map(|l| QueryView { query: &l.query, items: l.item_ids().cloned().collect() }).collect()
}

/// Mean of `Some` values in order; `None` entries are skipped.
fn mean_of(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut n = 0usize;
    let kept: Vec<f64> = values.into_iter().flatten().inspect(|_| n += 1).collect();
    (n > 0).then(|| compensated_sum(kept) / n as f64)
}

fn accuracy_mean<Id: Token>(
    recs: &RecommendationList<Id>,
    gt: &GroundTruth<Id>,
    f: impl Fn(&[Id], &HashSet<Id>) -> Option<f64> + Sync,
) -> Result<f64> {
    let views = views(recs);
    let per_query: Vec<Option<Option<f64>>> =
        views.par_iter().map(|v| gt.get(v.query).map(|set| f(&v.items, set))).collect();
    if per_query.iter().all(Option::is_none) {
        return Err(Error::EmptyEvaluation);
    }
    Ok(mean_of(per_query.into_iter().flatten()).unwrap_or(0.0))
}

fn beyond_mean<Id: Token>(recs: &RecommendationList<Id>, f: impl Fn(&Id, &[Id]) -> f64 + Sync) -> Result<f64> {
    let views = views(recs);
    let per_query: Vec<Option<f64>> = views.par_iter().map(|v| Some(f(v.query, &v.items))).collect();
    mean_of(per_query).ok_or(Error::EmptyEvaluation)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::param("k", "must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn precision_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(precision(r, g, k)))
}

pub fn recall_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(recall(r, g, k)))
}

pub fn map_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(average_precision(r, g, k, false)))
}

pub fn mrr_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(reciprocal_rank(r, g, k)))
}

pub fn ndcg_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(ndcg(r, g, k)))
}

pub fn hitrate_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(hit_rate(r, g, k)))
}

/// Averages over queries with both relevant and non-relevant items in their
/// top-K; 0 when no query qualifies.
pub fn rocauc_at_k<Id: Token>(recs: &RecommendationList<Id>, gt: &GroundTruth<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| roc_auc(r, g, k))
}

pub fn custom_metric_at_k<Id: Token>(
    recs: &RecommendationList<Id>,
    gt: &GroundTruth<Id>,
    k: usize,
    metric: &dyn UserMetric<Id>,
) -> Result<f64> {
    check_k(k)?;
    accuracy_mean(recs, gt, |r, g| Some(metric.compute(r, g, k)))
}

/// Distinct recommended items in the top-K lists over distinct training items.
pub fn coverage_at_k<Id: Token>(recs: &RecommendationList<Id>, train: &TrainStats<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    if recs.lists().is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(coverage_value(recs, train, k))
}

fn coverage_value<Id: Token>(recs: &RecommendationList<Id>, train: &TrainStats<Id>, k: usize) -> f64 {
    if train.n_items() == 0 {
        return 0.0;
    }
    let distinct: HashSet<&Id> = recs.lists().iter().flat_map(|l| l.item_ids().take(k)).collect();
    distinct.len() as f64 / train.n_items() as f64
}

pub fn novelty_at_k<Id: Token>(recs: &RecommendationList<Id>, train: &TrainStats<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    beyond_mean(recs, |q, r| novelty(q, r, train, k))
}

pub fn surprisal_at_k<Id: Token>(recs: &RecommendationList<Id>, train: &TrainStats<Id>, k: usize) -> Result<f64> {
    check_k(k)?;
    beyond_mean(recs, |_, r| surprisal(r, train, k))
}

/// Queries missing from the baseline count as fully unexpected.
pub fn unexpectedness_at_k<Id: Token>(
    recs: &RecommendationList<Id>,
    baseline: &RecommendationList<Id>,
    k: usize,
) -> Result<f64> {
    check_k(k)?;
    let base = baseline_index(baseline);
    beyond_mean(recs, |q, r| unexpectedness(r, base.get(q).map_or(&[][..], Vec::as_slice), k))
}

fn baseline_index<Id: Token>(baseline: &RecommendationList<Id>) -> HashMap<Id, Vec<Id>> {
    baseline.lists().iter().map(|l| (l.query.clone(), l.item_ids().cloned().collect())).collect()
}

pub fn categorical_diversity_at_k<Id: Token>(
    recs: &RecommendationList<Id>,
    categories: &HashMap<Id, String>,
    k: usize,
) -> Result<f64> {
    check_k(k)?;
    beyond_mean(recs, |_, r| categorical_diversity(r, categories, k))
}

/// Batch evaluator: every requested metric at every cutoff from one pass
/// over the per-query lists. Values equal the standalone functions exactly.
pub struct OfflineMetrics<'a, Id: Token = String> {
    specs: Vec<MetricSpec>,
    ground_truth: Option<&'a GroundTruth<Id>>,
    train: Option<&'a TrainStats<Id>>,
    baseline: Option<&'a RecommendationList<Id>>,
    categories: Option<&'a HashMap<Id, String>>,
    map_normalize_by_gt: bool,
    custom: Vec<(String, &'a dyn UserMetric<Id>, Vec<usize>)>,
}

#[derive(Clone, Copy)]
enum Column {
    Builtin(MetricName, usize),
    /// Index into the custom metric list, cutoff.
    Custom(usize, usize),
}

impl<'a, Id: Token> OfflineMetrics<'a, Id> {
    pub fn new(specs: Vec<MetricSpec>) -> Self {
        Self {
            specs,
            ground_truth: None,
            train: None,
            baseline: None,
            categories: None,
            map_normalize_by_gt: false,
            custom: Vec::new(),
        }
    }

    pub fn ground_truth(mut self, gt: &'a GroundTruth<Id>) -> Self {
        self.ground_truth = Some(gt);
        self
    }

    pub fn train(mut self, train: &'a TrainStats<Id>) -> Self {
        self.train = Some(train);
        self
    }

    pub fn baseline(mut self, baseline: &'a RecommendationList<Id>) -> Self {
        self.baseline = Some(baseline);
        self
    }

    pub fn categories(mut self, categories: &'a HashMap<Id, String>) -> Self {
        self.categories = Some(categories);
        self
    }

    /// Normalise MAP by `|gt|` instead of `min(K, |gt|)`.
    pub fn map_normalize_by_gt(mut self, on: bool) -> Self {
        self.map_normalize_by_gt = on;
        self
    }

    /// Adds a caller-defined accuracy metric reported as `name@k`.
    pub fn custom(mut self, name: impl Into<String>, metric: &'a dyn UserMetric<Id>, k_values: Vec<usize>) -> Self {
        self.custom.push((name.into(), metric, k_values));
        self
    }

    fn check_inputs(&self) -> Result<()> {
        if self.specs.is_empty() && self.custom.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        let missing = |metric: MetricName, input: &str| Error::MissingInput {
            metric: metric.as_str().to_string(),
            input: input.to_string(),
        };
        for spec in &self.specs {
            let name = spec.name;
            match name {
                _ if name.is_accuracy() && self.ground_truth.is_none() => return Err(missing(name, "ground truth")),
                MetricName::Coverage | MetricName::Novelty | MetricName::Surprisal if self.train.is_none() => {
                    return Err(missing(name, "train log"))
                }
                MetricName::Unexpectedness if self.baseline.is_none() => {
                    return Err(missing(name, "baseline recommendations"))
                }
                MetricName::CategoricalDiversity if self.categories.is_none() => {
                    return Err(missing(name, "item categories"))
                }
                _ => {}
            }
        }
        for (name, _, ks) in &self.custom {
            if self.ground_truth.is_none() {
                return Err(Error::MissingInput { metric: name.clone(), input: "ground truth".into() });
            }
            if ks.is_empty() || ks.contains(&0) {
                return Err(Error::param(name, "cutoffs must be positive"));
            }
        }
        Ok(())
    }

    pub fn compute(&self, recs: &RecommendationList<Id>) -> Result<IndexMap<String, f64>> {
        self.check_inputs()?;
        let mut columns: Vec<Column> = Vec::new();
        let mut keys: Vec<String> = Vec::new();
        for spec in &self.specs {
            for &k in &spec.k_values {
                columns.push(Column::Builtin(spec.name, k));
                keys.push(metric_key(spec.name.as_str(), k));
            }
        }
        for (c, (name, _, ks)) in self.custom.iter().enumerate() {
            for &k in ks {
                columns.push(Column::Custom(c, k));
                keys.push(metric_key(name, k));
            }
        }

        let base = self.baseline.map(baseline_index);
        let views = views(recs);
        // rows[q][c]: outer None = query not averaged for that column
        let rows: Vec<Vec<Option<f64>>> = views
            .par_iter()
            .map(|v| {
                let gt = self.ground_truth.and_then(|g| g.get(v.query));
                columns.iter().map(|col| self.cell(*col, v, gt, base.as_ref())).collect()
            })
            .collect();

        let mut out = IndexMap::with_capacity(columns.len());
        for (c, (col, key)) in columns.iter().zip(keys).enumerate() {
            let value = match col {
                Column::Builtin(MetricName::Coverage, k) => {
                    if views.is_empty() {
                        return Err(Error::EmptyEvaluation);
                    }
                    coverage_value(recs, self.train.unwrap(), *k)
                }
                Column::Builtin(name, _) if !name.is_accuracy() => {
                    mean_of(rows.iter().map(|r| r[c])).ok_or(Error::EmptyEvaluation)?
                }
                _ => {
                    let eligible: Vec<&Vec<Option<f64>>> =
                        rows.iter().zip(&views).filter(|(_, v)| self.has_gt(v.query)).map(|(r, _)| r).collect();
                    if eligible.is_empty() {
                        return Err(Error::EmptyEvaluation);
                    }
                    mean_of(eligible.iter().map(|r| r[c])).unwrap_or(0.0)
                }
            };
            out.insert(key, value);
        }
        Ok(out)
    }

    fn has_gt(&self, query: &Id) -> bool {
        self.ground_truth.is_some_and(|g| g.get(query).is_some())
    }

    fn cell(
        &self,
        col: Column,
        v: &QueryView<Id>,
        gt: Option<&HashSet<Id>>,
        base: Option<&HashMap<Id, Vec<Id>>>,
    ) -> Option<f64> {
        let r = &v.items;
        match col {
            Column::Builtin(name, k) => match name {
                MetricName::Precision => gt.map(|g| precision(r, g, k)),
                MetricName::Recall => gt.map(|g| recall(r, g, k)),
                MetricName::Map => gt.map(|g| average_precision(r, g, k, self.map_normalize_by_gt)),
                MetricName::Mrr => gt.map(|g| reciprocal_rank(r, g, k)),
                MetricName::Ndcg => gt.map(|g| ndcg(r, g, k)),
                MetricName::HitRate => gt.map(|g| hit_rate(r, g, k)),
                MetricName::RocAuc => gt.and_then(|g| roc_auc(r, g, k)),
                MetricName::Coverage => None,
                MetricName::Novelty => Some(novelty(v.query, r, self.train?, k)),
                MetricName::Surprisal => Some(surprisal(r, self.train?, k)),
                MetricName::Unexpectedness => {
                    Some(unexpectedness(r, base?.get(v.query).map_or(&[][..], Vec::as_slice), k))
                }
                MetricName::CategoricalDiversity => Some(categorical_diversity(r, self.categories?, k)),
            },
            Column::Custom(c, k) => gt.map(|g| self.custom[c].1.compute(r, g, k)),
        }
    }
}

/// `offline_metrics(recs, gt, train, specs)` without the optional inputs.
pub fn offline_metrics<Id: Token>(
    recs: &RecommendationList<Id>,
    ground_truth: Option<&GroundTruth<Id>>,
    train: Option<&TrainStats<Id>>,
    specs: &[MetricSpec],
) -> Result<IndexMap<String, f64>> {
    let mut eval = OfflineMetrics::new(specs.to_vec());
    if let Some(gt) = ground_truth {
        eval = eval.ground_truth(gt);
    }
    if let Some(train) = train {
        eval = eval.train(train);
    }
    eval.compute(recs)
}

/// Runs × `metric@k` grid. Columns are the union of every added run's keys
/// in first-appearance order; re-adding a run replaces its row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentTable {
    columns: IndexSet<String>,
    rows: IndexMap<String, IndexMap<String, f64>>,
}

impl ExperimentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, run: impl Into<String>, metrics: &IndexMap<String, f64>) {
        for key in metrics.keys() {
            self.columns.insert(key.clone());
        }
        self.rows.insert(run.into(), metrics.clone());
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> + '_ {
        self.columns.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, run: &str, column: &str) -> Option<f64> {
        self.rows.get(run)?.get(column).copied()
    }

    /// Rows sorted by `sort_by` descending (absent cells last, ties in
    /// insertion order); insertion order when `sort_by` is `None`.
    pub fn render(&self, sort_by: Option<&str>) -> Vec<(String, Vec<Option<f64>>)> {
        let mut rows: Vec<(String, Vec<Option<f64>>)> = self
            .rows
            .iter()
            .map(|(run, m)| (run.clone(), self.columns.iter().map(|c| m.get(c).copied()).collect()))
            .collect();
        if let Some(idx) = sort_by.and_then(|c| self.columns.get_index_of(c)) {
            rows.sort_by(|a, b| match (a.1[idx], b.1[idx]) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            });
        }
        rows
    }

    pub fn to_csv(&self, sort_by: Option<&str>) -> String {
        let mut out = String::from("run");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (run, cells) in self.render(sort_by) {
            out.push_str(&run);
            for cell in cells {
                out.push(',');
                match cell {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// `{run: {metric@k: value | null}}` with every column present.
    pub fn to_json(&self, sort_by: Option<&str>) -> serde_json::Value {
        let mut runs = serde_json::Map::new();
        for (run, cells) in self.render(sort_by) {
            let row: serde_json::Map<String, serde_json::Value> =
                self.columns.iter().zip(cells).map(|(c, v)| (c.clone(), serde_json::json!(v))).collect();
            runs.insert(run, serde_json::Value::Object(row));
        }
        serde_json::Value::Object(runs)
    }

    /// Aligned plain-text table.
    pub fn to_text(&self, sort_by: Option<&str>) -> String {
        let rows = self.render(sort_by);
        let mut grid: Vec<Vec<String>> =
            vec![std::iter::once("run".to_string()).chain(self.columns.iter().cloned()).collect()];
        for (run, cells) in rows {
            let mut line = vec![run];
            line.extend(cells.into_iter().map(|c| c.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))));
            grid.push(line);
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for row in grid {
            let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

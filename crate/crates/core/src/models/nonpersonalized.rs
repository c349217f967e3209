//! Popularity and bandit recommenders scored from per-item counts.

use std::collections::HashSet;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{predict_parallel, rank_dense, take_ranked, top_k, Capabilities, History, Interactions, Recommender};
use crate::data::{RecommendationList, ScoredItem};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Per-item aggregate counts over a training log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ItemStats {
    /// Distinct queries that interacted with the item.
    pub n_users: Vec<u64>,
    /// Interactions with `rating > 0`.
    pub n_pos: Vec<u64>,
    /// All interactions.
    pub n_trials: Vec<u64>,
    pub n_queries: usize,
}

impl ItemStats {
    pub fn from_interactions(data: &Interactions) -> Self {
        let n = data.n_items();
        let mut stats =
            ItemStats { n_users: vec![0; n], n_pos: vec![0; n], n_trials: vec![0; n], n_queries: data.n_queries() };
        let mut pairs = HashSet::with_capacity(data.log().len());
        for row in data.log().iter() {
            let i = *row.item as usize;
            stats.n_trials[i] += 1;
            if row.rating > 0.0 {
                stats.n_pos[i] += 1;
            }
            if pairs.insert((*row.query, *row.item)) {
                stats.n_users[i] += 1;
            }
        }
        stats
    }

    pub fn n_items(&self) -> usize {
        self.n_trials.len()
    }

    pub fn total_trials(&self) -> u64 {
        self.n_trials.iter().sum()
    }
}

/// Lower end of the Wilson score interval for `n_pos` successes out of `n_trials`.
///
/// `(p + z²/2n − z·sqrt(p(1−p)/n + z²/4n²)) / (1 + z²/n)` with `p = n_pos / n`.
/// Zero trials score 0.
pub fn wilson_lower_bound(n_pos: u64, n_trials: u64, z: f64) -> f64 {
    if n_trials == 0 {
        return 0.0;
    }
    let n = n_trials as f64;
    let p = n_pos as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).clamp(0.0, 1.0)
}

/// UCB1 index `p + sqrt(c · ln(total) / n)`; unexplored arms get `+∞`.
pub fn ucb_score(n_pos: u64, n_trials: u64, total_trials: f64, c: f64) -> f64 {
    if n_trials == 0 {
        return f64::INFINITY;
    }
    let n = n_trials as f64;
    n_pos as f64 / n + (c * total_trials.max(1.0).ln() / n).sqrt()
}

/// Bernoulli KL divergence `KL(p ‖ q)` with the `0 · ln 0 = 0` convention.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }
    term(p, q) + term(1.0 - p, 1.0 - q)
}

pub const KLUCB_TOLERANCE: f64 = 1e-6;

/// KL-UCB index: the largest `q ∈ [p, 1)` with `n · KL(p, q) ≤ ln(total)`,
/// found by bisection to absolute width [`KLUCB_TOLERANCE`]. Unexplored arms
/// get `+∞`.
pub fn klucb_score(n_pos: u64, n_trials: u64, total_trials: f64) -> f64 {
    if n_trials == 0 {
        return f64::INFINITY;
    }
    let n = n_trials as f64;
    let p = n_pos as f64 / n;
    if p >= 1.0 {
        return 1.0;
    }
    let budget = total_trials.max(1.0).ln();
    let (mut lo, mut hi) = (p, 1.0);
    while hi - lo > KLUCB_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if n * bernoulli_kl(p, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// One draw from `Beta(1 + n_pos, 1 + n_fail)`.
pub fn thompson_sample(n_pos: u64, n_fail: u64, rng: &mut SplitMix64) -> f64 {
    let beta = Beta::new(1.0 + n_pos as f64, 1.0 + n_fail as f64).expect("shape parameters are >= 1");
    beta.sample(rng)
}

/// Global ranking shared by the query-independent models.
#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct GlobalScores {
    pub(crate) history: History,
    pub(crate) scores: Vec<f64>,
    order: Vec<ScoredItem<u32>>,
}

impl GlobalScores {
    pub(crate) fn new(history: History, scores: Vec<f64>) -> Self {
        let order = top_k(
            scores.iter().enumerate().map(|(i, &score)| ScoredItem { item: i as u32, score }).collect(),
            scores.len(),
        );
        Self { history, scores, order }
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> RecommendationList<u32> {
        predict_parallel(queries, k, |q| {
            let exclude = if filter_seen { self.history.items(q) } else { &[] };
            take_ranked(&self.order, exclude, k)
        })
    }
}

fn require_data(data: &Interactions) -> Result<()> {
    if data.is_empty() {
        Err(Error::EmptyDataset)
    } else {
        Ok(())
    }
}

macro_rules! global_predict {
    () => {
        fn is_fitted(&self) -> bool {
            self.state.is_some()
        }

        fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
            let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
            Ok(state.predict(queries, k, filter_seen))
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopRecParams {
    /// Rank by raw interaction count share instead of distinct-user share.
    pub use_interaction_count: bool,
}

/// Popularity: `score(i) = n_users(i) / n_queries`.
#[derive(Debug, Clone, Default)]
pub struct PopRec {
    pub params: PopRecParams,
    pub(crate) state: Option<GlobalScores>,
}

impl PopRec {
    pub fn new(params: PopRecParams) -> Self {
        Self { params, state: None }
    }

    pub fn item_scores(&self) -> Option<&[f64]> {
        self.state.as_ref().map(|s| s.scores.as_slice())
    }
}

impl Recommender for PopRec {
    fn name(&self) -> &'static str {
        "pop_rec"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        let stats = ItemStats::from_interactions(data);
        let scores = if self.params.use_interaction_count {
            let total = stats.total_trials() as f64;
            stats.n_trials.iter().map(|&c| c as f64 / total).collect()
        } else {
            let nq = data.n_queries() as f64;
            stats.n_users.iter().map(|&c| c as f64 / nq).collect()
        };
        self.state = Some(GlobalScores::new(History::from_interactions(data), scores));
        Ok(())
    }

    global_predict!();
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WilsonParams {
    pub z: f64,
}

impl Default for WilsonParams {
    fn default() -> Self {
        Self { z: 1.96 }
    }
}

impl WilsonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.z > 0.0) {
            return Err(Error::param("z", "must be positive"));
        }
        Ok(())
    }
}

/// Ranks items by the Wilson lower bound of their positive rate. Ratings must be 0/1.
#[derive(Debug, Clone, Default)]
pub struct Wilson {
    pub params: WilsonParams,
    pub(crate) state: Option<GlobalScores>,
}

impl Wilson {
    pub fn new(params: WilsonParams) -> Self {
        Self { params, state: None }
    }
}

impl Recommender for Wilson {
    fn name(&self) -> &'static str {
        "wilson"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { needs_binary_ratings: true, item_to_item: false }
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        self.params.validate()?;
        if let Some(&r) = data.log().ratings().iter().find(|&&r| r != 0.0 && r != 1.0) {
            return Err(Error::NonBinaryRatings(r));
        }
        let stats = ItemStats::from_interactions(data);
        let scores = (0..stats.n_items())
            .map(|i| wilson_lower_bound(stats.n_pos[i], stats.n_trials[i], self.params.z))
            .collect();
        self.state = Some(GlobalScores::new(History::from_interactions(data), scores));
        Ok(())
    }

    global_predict!();
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcbParams {
    pub c: f64,
}

impl Default for UcbParams {
    fn default() -> Self {
        Self { c: 2.0 }
    }
}

impl UcbParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::param("c", "must be positive"));
        }
        Ok(())
    }
}

/// UCB1 over items; rewards are `rating > 0`, trials are interactions.
#[derive(Debug, Clone, Default)]
pub struct Ucb {
    pub params: UcbParams,
    pub(crate) state: Option<GlobalScores>,
}

impl Ucb {
    pub fn new(params: UcbParams) -> Self {
        Self { params, state: None }
    }
}

impl Recommender for Ucb {
    fn name(&self) -> &'static str {
        "ucb"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        self.params.validate()?;
        let stats = ItemStats::from_interactions(data);
        let total = stats.total_trials() as f64;
        let scores =
            (0..stats.n_items()).map(|i| ucb_score(stats.n_pos[i], stats.n_trials[i], total, self.params.c)).collect();
        self.state = Some(GlobalScores::new(History::from_interactions(data), scores));
        Ok(())
    }

    global_predict!();
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlUcbParams {}

/// KL-UCB over items with Bernoulli rewards `rating > 0`.
#[derive(Debug, Clone, Default)]
pub struct KlUcb {
    pub params: KlUcbParams,
    pub(crate) state: Option<GlobalScores>,
}

impl KlUcb {
    pub fn new(params: KlUcbParams) -> Self {
        Self { params, state: None }
    }
}

impl Recommender for KlUcb {
    fn name(&self) -> &'static str {
        "klucb"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        let stats = ItemStats::from_interactions(data);
        let total = stats.total_trials() as f64;
        let scores = (0..stats.n_items()).map(|i| klucb_score(stats.n_pos[i], stats.n_trials[i], total)).collect();
        self.state = Some(GlobalScores::new(History::from_interactions(data), scores));
        Ok(())
    }

    global_predict!();
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThompsonParams {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct ThompsonState {
    pub(crate) history: History,
    pub(crate) n_pos: Vec<u64>,
    pub(crate) n_fail: Vec<u64>,
}

/// Beta-Bernoulli Thompson sampling. Each query draws its own scores from a
/// generator derived from `(seed, query)`, so predictions are reproducible
/// and independent of thread scheduling.
#[derive(Debug, Clone, Default)]
pub struct ThompsonSampling {
    pub params: ThompsonParams,
    pub(crate) state: Option<ThompsonState>,
}

impl ThompsonSampling {
    pub fn new(params: ThompsonParams) -> Self {
        Self { params, state: None }
    }
}

impl Recommender for ThompsonSampling {
    fn name(&self) -> &'static str {
        "thompson"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        let stats = ItemStats::from_interactions(data);
        let n_fail = stats.n_trials.iter().zip(&stats.n_pos).map(|(t, p)| t - p).collect();
        self.state = Some(ThompsonState { history: History::from_interactions(data), n_pos: stats.n_pos, n_fail });
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        let seed = self.params.seed;
        Ok(predict_parallel(queries, k, |q| {
            let mut rng = SplitMix64::derive(seed, q as u64);
            let scores: Vec<f64> =
                state.n_pos.iter().zip(&state.n_fail).map(|(&p, &f)| thompson_sample(p, f, &mut rng)).collect();
            let exclude = if filter_seen { state.history.items(q) } else { &[] };
            rank_dense(&scores, exclude, k)
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryPopRecParams {}

/// Per-query popularity over the query's own history:
/// `score(q, i) = n_qi / Σ_j n_qj`.
///
/// It only ever recommends already-seen items, so `filter_seen = true`
/// yields empty lists.
#[derive(Debug, Clone, Default)]
pub struct QueryPopRec {
    pub params: QueryPopRecParams,
    /// Row `q` holds normalised counts over the items `q` interacted with.
    pub(crate) state: Option<super::SparseInteractionMatrix>,
}

impl QueryPopRec {
    pub fn new(params: QueryPopRecParams) -> Self {
        Self { params, state: None }
    }
}

impl Recommender for QueryPopRec {
    fn name(&self) -> &'static str {
        "query_pop_rec"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        require_data(data)?;
        let log = data.log();
        let mut totals = vec![0u64; data.n_queries()];
        for q in log.queries() {
            totals[*q as usize] += 1;
        }
        let triplets = log.iter().map(|r| (*r.query, *r.item, 1.0 / totals[*r.query as usize] as f64));
        self.state =
            Some(super::SparseInteractionMatrix::from_triplets(data.n_queries(), data.n_items(), triplets, false));
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        if filter_seen {
            log::warn!("query_pop_rec only recommends seen items; filter_seen=true yields empty lists");
        }
        Ok(predict_parallel(queries, k, |q| {
            if filter_seen {
                return Vec::new();
            }
            let candidates = state.row_iter(q as usize).map(|(item, score)| ScoredItem { item, score }).collect();
            top_k(candidates, k)
        }))
    }
}

//! Recommenders behind a common fit/predict interface.
//!
//! Models work on dense ids (see [`crate::data::EncoderMapping`]). Every
//! prediction path ranks by score descending, breaking ties by ascending item
//! id, and with `filter_seen` never returns an item from the query's training
//! history.

mod als;
mod assoc_rules;
mod config;
mod item_knn;
mod nonpersonalized;
mod serialize;
mod slim;
mod sparse;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::{InteractionLog, RecommendationList, ScoredItem};
use crate::error::{Error, Result};

pub use als::{als_fit, als_objective, Als, AlsParams, FactorModel};
pub use assoc_rules::{AssociationRules, AssociationRulesParams, Rule, RuleMetric};
pub use config::{Model, ModelConfig};
pub use item_knn::{cosine_similarity_rows, ItemKnn, ItemKnnParams};
pub use nonpersonalized::{
    bernoulli_kl, klucb_score, thompson_sample, ucb_score, wilson_lower_bound, ItemStats, KlUcb, KlUcbParams, PopRec,
    PopRecParams, QueryPopRec, QueryPopRecParams, ThompsonParams, ThompsonSampling, Ucb, UcbParams, Wilson,
    WilsonParams,
};
pub use serialize::{from_bytes, load_model, save_model, to_bytes, MODEL_MAGIC};
pub use slim::{slim_objective, Gram, Slim, SlimColumnSolver, SlimParams};
pub use sparse::{SparseInteractionMatrix, ValueMode};

/// Encoded training interactions with the id space sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Interactions {
    log: InteractionLog<u32>,
    n_queries: usize,
    n_items: usize,
}

impl Interactions {
    /// Fails with `IndexOutOfRange` if any id falls outside the given sizes.
    pub fn new(log: InteractionLog<u32>, n_queries: usize, n_items: usize) -> Result<Self> {
        for (column, ids, size) in [("query", log.queries(), n_queries), ("item", log.items(), n_items)] {
            if let Some(&bad) = ids.iter().find(|&&id| id as usize >= size) {
                return Err(Error::IndexOutOfRange { column: column.into(), index: bad as usize, size });
            }
        }
        Ok(Self { log, n_queries, n_items })
    }

    /// Sizes inferred as `max id + 1`.
    pub fn from_log(log: InteractionLog<u32>) -> Self {
        let n_queries = log.queries().iter().max().map_or(0, |&m| m as usize + 1);
        let n_items = log.items().iter().max().map_or(0, |&m| m as usize + 1);
        Self { log, n_queries, n_items }
    }

    pub fn log(&self) -> &InteractionLog<u32> {
        &self.log
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub needs_binary_ratings: bool,
    pub item_to_item: bool,
}

pub trait Recommender: Send + Sync {
    fn name(&self) -> &'static str;

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }

    fn fit(&mut self, data: &Interactions) -> Result<()>;

    fn is_fitted(&self) -> bool;

    /// Up to `k` items per requested query, in request order.
    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>>;
}

/// Items each query interacted with during training.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    seen: SparseInteractionMatrix,
}

impl History {
    pub fn from_interactions(data: &Interactions) -> Self {
        Self { seen: SparseInteractionMatrix::from_interactions(data, ValueMode::Presence) }
    }

    pub(crate) fn from_matrix(seen: SparseInteractionMatrix) -> Self {
        Self { seen }
    }

    pub(crate) fn matrix(&self) -> &SparseInteractionMatrix {
        &self.seen
    }

    pub fn n_queries(&self) -> usize {
        self.seen.n_rows()
    }

    pub fn n_items(&self) -> usize {
        self.seen.n_cols()
    }

    /// Sorted item ids; empty for unknown queries.
    pub fn items(&self, query: u32) -> &[u32] {
        self.seen.row(query as usize).0
    }

    pub fn has_seen(&self, query: u32, item: u32) -> bool {
        self.seen.contains(query as usize, item)
    }
}

/// Score-descending, id-ascending order.
#[inline]
pub(crate) fn rank_order(a: &ScoredItem<u32>, b: &ScoredItem<u32>) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item))
}

/// Keeps the best `k` candidates and sorts them.
pub(crate) fn top_k(mut candidates: Vec<ScoredItem<u32>>, k: usize) -> Vec<ScoredItem<u32>> {
    if k == 0 {
        return Vec::new();
    }
    if candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    candidates
}

/// Ranks dense per-item scores for one query, skipping `exclude` (sorted).
pub(crate) fn rank_dense(scores: &[f64], exclude: &[u32], k: usize) -> Vec<ScoredItem<u32>> {
    let candidates = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| exclude.binary_search(&(*i as u32)).is_err())
        .map(|(i, &score)| ScoredItem { item: i as u32, score })
        .collect();
    top_k(candidates, k)
}

/// Walks a precomputed global ranking, skipping `exclude` (sorted).
pub(crate) fn take_ranked(order: &[ScoredItem<u32>], exclude: &[u32], k: usize) -> Vec<ScoredItem<u32>> {
    order.iter().filter(|s| exclude.binary_search(&s.item).is_err()).take(k).cloned().collect()
}

/// Runs `per_query` for every query in parallel and assembles the lists in
/// request order.
pub(crate) fn predict_parallel<F>(queries: &[u32], k: usize, per_query: F) -> RecommendationList<u32>
where
    F: Fn(u32) -> Vec<ScoredItem<u32>> + Sync,
{
    let lists: Vec<Vec<ScoredItem<u32>>> = queries.par_iter().map(|&q| per_query(q)).collect();
    let mut out = RecommendationList::new(k);
    for (&q, items) in queries.iter().zip(lists) {
        out.push(q, items);
    }
    out
}

/// Sparse accumulator reused across the queries of one worker.
pub(crate) struct ScoreAccumulator {
    scores: Vec<f64>,
    touched: Vec<u32>,
    mark: Vec<bool>,
}

impl ScoreAccumulator {
    pub(crate) fn new(n: usize) -> Self {
        Self { scores: vec![0.0; n], touched: Vec::new(), mark: vec![false; n] }
    }

    #[inline]
    pub(crate) fn add(&mut self, i: u32, v: f64) {
        let idx = i as usize;
        if !self.mark[idx] {
            self.mark[idx] = true;
            self.touched.push(i);
        }
        self.scores[idx] += v;
    }

    #[inline]
    pub(crate) fn max(&mut self, i: u32, v: f64) {
        let idx = i as usize;
        if !self.mark[idx] {
            self.mark[idx] = true;
            self.touched.push(i);
            self.scores[idx] = v;
        } else if v > self.scores[idx] {
            self.scores[idx] = v;
        }
    }

    /// Drains touched entries in ascending id order and resets the buffer.
    pub(crate) fn drain(&mut self) -> Vec<(u32, f64)> {
        self.touched.sort_unstable();
        let out = self.touched.iter().map(|&i| (i, self.scores[i as usize])).collect();
        for &i in &self.touched {
            self.scores[i as usize] = 0.0;
            self.mark[i as usize] = false;
        }
        self.touched.clear();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_breaks_ties_by_item_id() {
        let c = vec![
            ScoredItem { item: 3, score: 1.0 },
            ScoredItem { item: 1, score: 1.0 },
            ScoredItem { item: 2, score: 2.0 },
            ScoredItem { item: 0, score: 0.5 },
        ];
        let items: Vec<u32> = top_k(c, 3).into_iter().map(|s| s.item).collect();
        assert_eq!(items, vec![2, 1, 3]);
    }

    #[test]
    fn rank_dense_excludes() {
        let out = rank_dense(&[0.1, 0.9, 0.5], &[1], 5);
        assert_eq!(out.iter().map(|s| s.item).collect::<Vec<_>>(), vec![2, 0]);
    }

    #[test]
    fn interactions_reject_out_of_range_ids() {
        let log: InteractionLog<u32> = [(0, 3, 0, 1.0)].into_iter().collect();
        assert!(Interactions::new(log.clone(), 1, 3).is_err());
        assert_eq!(Interactions::from_log(log).n_items(), 4);
    }

    #[test]
    fn accumulator_resets() {
        let mut acc = ScoreAccumulator::new(4);
        acc.add(3, 1.0);
        acc.add(1, 2.0);
        acc.add(3, 0.5);
        assert_eq!(acc.drain(), vec![(1, 2.0), (3, 1.5)]);
        acc.max(2, -1.0);
        acc.max(2, -3.0);
        assert_eq!(acc.drain(), vec![(2, -1.0)]);
    }
}

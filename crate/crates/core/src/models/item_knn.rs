use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    top_k, Capabilities, History, Interactions, Recommender, ScoreAccumulator, SparseInteractionMatrix, ValueMode,
};
use crate::data::{RecommendationList, ScoredItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItemKnnParams {
    pub num_neighbors: usize,
    pub shrink: f64,
    /// Use summed ratings as matrix values instead of `rating > 0` indicators.
    pub use_ratings: bool,
}

impl Default for ItemKnnParams {
    fn default() -> Self {
        Self { num_neighbors: 10, shrink: 0.0, use_ratings: false }
    }
}

impl ItemKnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_neighbors == 0 {
            return Err(Error::param("num_neighbors", "must be at least 1"));
        }
        if !(self.shrink >= 0.0) {
            return Err(Error::param("shrink", "must be non-negative"));
        }
        Ok(())
    }
}

/// Item-based nearest neighbours with shrunk cosine similarity
/// `⟨c_i, c_j⟩ / (‖c_i‖ ‖c_j‖ + shrink)`.
///
/// Only co-occurring pairs (non-zero dot product) become neighbours.
/// Prediction sums, over the query's history items `j`, the value `a_qj`
/// times the weight of each neighbour of `j`.
#[derive(Debug, Clone, Default)]
pub struct ItemKnn {
    pub params: ItemKnnParams,
    pub(crate) state: Option<KnnState>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct KnnState {
    pub(crate) history: History,
    pub(crate) matrix: SparseInteractionMatrix,
    /// Neighbours per item, weight-descending, ties by id.
    pub(crate) neighbors: Vec<Vec<(u32, f64)>>,
}

impl ItemKnn {
    pub fn new(params: ItemKnnParams) -> Self {
        Self { params, state: None }
    }

    /// Truncated neighbour list of an item.
    pub fn neighbors(&self, item: u32) -> Option<&[(u32, f64)]> {
        self.state.as_ref()?.neighbors.get(item as usize).map(Vec::as_slice)
    }
}

/// Untruncated shrunk-cosine similarities: for every item, the non-zero
/// `(other, sim)` pairs in ascending id order, self excluded.
pub fn cosine_similarity_rows(user_item: &SparseInteractionMatrix, shrink: f64) -> Vec<Vec<(u32, f64)>> {
    let item_user = user_item.transpose();
    let sq_norms: Vec<f64> =
        (0..item_user.n_rows()).map(|i| item_user.row(i).1.iter().map(|v| v * v).sum::<f64>()).collect();
    (0..item_user.n_rows())
        .into_par_iter()
        .map_init(
            || ScoreAccumulator::new(item_user.n_rows()),
            |acc, i| {
                for (u, a_ui) in item_user.row_iter(i) {
                    for (j, a_uj) in user_item.row_iter(u as usize) {
                        if j as usize != i {
                            acc.add(j, a_ui * a_uj);
                        }
                    }
                }
                acc.drain()
                    .into_iter()
                    .filter(|&(_, dot)| dot != 0.0)
                    .filter_map(|(j, dot)| {
                        let denom = (sq_norms[i] * sq_norms[j as usize]).sqrt() + shrink;
                        (denom > 0.0).then(|| (j, dot / denom))
                    })
                    .collect()
            },
        )
        .collect()
}

impl Recommender for ItemKnn {
    fn name(&self) -> &'static str {
        "item_knn"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { needs_binary_ratings: false, item_to_item: true }
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.params.validate()?;
        let mode = if self.params.use_ratings { ValueMode::Ratings } else { ValueMode::Binary };
        let matrix = SparseInteractionMatrix::from_interactions(data, mode);
        let m = self.params.num_neighbors;
        let neighbors = cosine_similarity_rows(&matrix, self.params.shrink)
            .into_par_iter()
            .map(|row| {
                let scored = row.into_iter().map(|(item, score)| ScoredItem { item, score }).collect();
                top_k(scored, m).into_iter().map(|s| (s.item, s.score)).collect()
            })
            .collect();
        self.state = Some(KnnState { history: History::from_interactions(data), matrix, neighbors });
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        let n_items = state.history.n_items();
        Ok(predict_neighborhood(queries, k, filter_seen, &state.history, n_items, |q, acc| {
            for (j, a_qj) in state.matrix.row_iter(q as usize) {
                for &(i, w) in &state.neighbors[j as usize] {
                    acc.add(i, a_qj * w);
                }
            }
        }))
    }
}

/// Shared predict loop for models that accumulate sparse per-item scores.
pub(crate) fn predict_neighborhood<F>(
    queries: &[u32],
    k: usize,
    filter_seen: bool,
    history: &History,
    n_items: usize,
    accumulate: F,
) -> RecommendationList<u32>
where
    F: Fn(u32, &mut ScoreAccumulator) + Sync,
{
    let lists: Vec<Vec<ScoredItem<u32>>> = queries
        .par_iter()
        .map_init(
            || ScoreAccumulator::new(n_items),
            |acc, &q| {
                if q as usize >= history.n_queries() {
                    return Vec::new();
                }
                accumulate(q, acc);
                let seen = history.items(q);
                let candidates: Vec<ScoredItem<u32>> = acc
                    .drain()
                    .into_iter()
                    .filter(|(i, _)| !filter_seen || seen.binary_search(i).is_err())
                    .map(|(item, score)| ScoredItem { item, score })
                    .collect();
                top_k(candidates, k)
            },
        )
        .collect();
    let mut out = RecommendationList::new(k);
    for (&q, items) in queries.iter().zip(lists) {
        out.push(q, items);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionLog;

    fn data(rows: &[(u32, u32)]) -> Interactions {
        let log: InteractionLog<u32> = rows.iter().map(|&(q, i)| (q, i, 0, 1.0)).collect();
        Interactions::from_log(log)
    }

    #[test]
    fn half_overlap_cosine() {
        // c_0 = [1,1,0], c_1 = [0,1,1] over three users
        let d = data(&[(0, 0), (1, 0), (1, 1), (2, 1)]);
        let m = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
        let sims = cosine_similarity_rows(&m, 0.0);
        assert_eq!(sims[0], vec![(1, 0.5)]);
        assert_eq!(sims[1], vec![(0, 0.5)]);
    }

    #[test]
    fn identical_columns_have_unit_similarity() {
        let d = data(&[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let m = SparseInteractionMatrix::from_interactions(&d, ValueMode::Binary);
        let sims = cosine_similarity_rows(&m, 0.0);
        assert!((sims[0][0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_item_history_scores_equal_neighbor_weights() {
        let d = data(&[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 0), (3, 2)]);
        let mut knn = ItemKnn::new(ItemKnnParams { num_neighbors: 5, ..Default::default() });
        knn.fit(&d).unwrap();
        let recs = knn.predict(&[0], 5, true).unwrap();
        let got: Vec<(u32, f64)> = recs.lists()[0].items.iter().map(|s| (s.item, s.score)).collect();
        assert_eq!(got, knn.neighbors(0).unwrap().to_vec());
    }

    #[test]
    fn empty_history_and_cold_query_give_empty_lists() {
        let log: InteractionLog<u32> = [(0u32, 0u32, 0i64, 1.0), (0, 1, 0, 1.0)].into_iter().collect();
        let d = Interactions::new(log, 2, 2).unwrap();
        let mut knn = ItemKnn::default();
        knn.fit(&d).unwrap();
        let recs = knn.predict(&[1, 7], 3, true).unwrap();
        assert!(recs.lists().iter().all(|l| l.items.is_empty()));
    }

    #[test]
    fn neighbor_lists_truncate() {
        let d = data(&[(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1)]);
        let mut knn = ItemKnn::new(ItemKnnParams { num_neighbors: 1, ..Default::default() });
        knn.fit(&d).unwrap();
        assert_eq!(knn.neighbors(0).unwrap().len(), 1);
        assert_eq!(knn.neighbors(0).unwrap()[0].0, 1);
    }
}

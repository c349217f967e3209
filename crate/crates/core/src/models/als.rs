//! Implicit-feedback matrix factorisation by alternating least squares.
//!
//! Confidence `c = 1 + alpha · value`, preference `p = [value > 0]`; each
//! half-step solves the ridge systems
//! `(YᵀY + Yᵀ(C_u − I)Y + λI) x_u = Yᵀ C_u p_u` exactly, so the weighted
//! objective never increases.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{predict_parallel, rank_dense, History, Interactions, Recommender, SparseInteractionMatrix, ValueMode};
use crate::data::RecommendationList;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsParams {
    pub rank: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub seed: u64,
    pub use_ratings: bool,
}

impl Default for AlsParams {
    fn default() -> Self {
        Self { rank: 10, alpha: 1.0, lambda: 0.1, iterations: 10, seed: 0, use_ratings: false }
    }
}

impl AlsParams {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::param("rank", "must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::param("alpha", "must be positive"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Row-major user and item factor tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FactorModel {
    pub rank: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn n_users(&self) -> usize {
        self.user_factors.len() / self.rank.max(1)
    }

    pub fn n_items(&self) -> usize {
        self.item_factors.len() / self.rank.max(1)
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.rank..(u + 1) * self.rank]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.rank..(i + 1) * self.rank]
    }

    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gram(factors: &[f64], rank: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(rank, rank);
    for row in factors.chunks_exact(rank) {
        for a in 0..rank {
            for b in 0..rank {
                g[(a, b)] += row[a] * row[b];
            }
        }
    }
    g
}

/// Solves every row of `target` against the fixed `other` factors.
fn half_step(rows: &SparseInteractionMatrix, other: &[f64], rank: usize, alpha: f64, lambda: f64) -> Vec<f64> {
    let mut base = gram(other, rank);
    for d in 0..rank {
        base[(d, d)] += lambda;
    }
    let solved: Vec<Vec<f64>> = (0..rows.n_rows())
        .into_par_iter()
        .map(|r| {
            let mut a = base.clone();
            let mut b = DVector::zeros(rank);
            for (j, v) in rows.row_iter(r) {
                let y = &other[j as usize * rank..(j as usize + 1) * rank];
                let c = 1.0 + alpha * v;
                for p in 0..rank {
                    for q in 0..rank {
                        a[(p, q)] += (c - 1.0) * y[p] * y[q];
                    }
                }
                if v > 0.0 {
                    for p in 0..rank {
                        b[p] += c * y[p];
                    }
                }
            }
            let x = match a.clone().cholesky() {
                Some(ch) => ch.solve(&b),
                None => a.lu().solve(&b).unwrap_or_else(|| DVector::zeros(rank)),
            };
            x.iter().copied().collect()
        })
        .collect();
    solved.into_iter().flatten().collect()
}

/// `Σ_{u,i} c_ui (p_ui − x_uᵀy_i)² + λ(‖X‖² + ‖Y‖²)` over every cell.
///
/// The dense part is evaluated as `⟨XᵀX, YᵀY⟩` and corrected on observed cells.
pub fn als_objective(matrix: &SparseInteractionMatrix, model: &FactorModel, alpha: f64, lambda: f64) -> f64 {
    let r = model.rank;
    let gx = gram(&model.user_factors, r);
    let gy = gram(&model.item_factors, r);
    let mut total = gx.component_mul(&gy).sum();
    for u in 0..matrix.n_rows() {
        for (i, v) in matrix.row_iter(u) {
            let s = model.score(u, i as usize);
            let c = 1.0 + alpha * v;
            let p = if v > 0.0 { 1.0 } else { 0.0 };
            total += c * (p - s) * (p - s) - s * s;
        }
    }
    let reg: f64 =
        model.user_factors.iter().map(|x| x * x).sum::<f64>() + model.item_factors.iter().map(|x| x * x).sum::<f64>();
    total + lambda * reg
}

/// Runs ALS and returns the factors with the objective after
/// initialisation and after every half-step (`2 · iterations + 1` values).
pub fn als_fit(matrix: &SparseInteractionMatrix, params: &AlsParams) -> (FactorModel, Vec<f64>) {
    let rank = params.rank;
    if rank > matrix.n_rows().min(matrix.n_cols()) {
        log::warn!("als rank {} exceeds matrix dimensions {}x{}", rank, matrix.n_rows(), matrix.n_cols());
    }
    let mut rng = SplitMix64::new(params.seed);
    let mut init = |n: usize| -> Vec<f64> { (0..n * rank).map(|_| (rng.next_f64() * 2.0 - 1.0) * 0.01).collect() };
    let user_factors = init(matrix.n_rows());
    let item_factors = init(matrix.n_cols());
    let mut model = FactorModel { rank, user_factors, item_factors };
    let transposed = matrix.transpose();
    let mut trace = vec![als_objective(matrix, &model, params.alpha, params.lambda)];
    for _ in 0..params.iterations {
        model.user_factors = half_step(matrix, &model.item_factors, rank, params.alpha, params.lambda);
        trace.push(als_objective(matrix, &model, params.alpha, params.lambda));
        model.item_factors = half_step(&transposed, &model.user_factors, rank, params.alpha, params.lambda);
        trace.push(als_objective(matrix, &model, params.alpha, params.lambda));
    }
    (model, trace)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct AlsState {
    pub(crate) history: History,
    pub(crate) factors: FactorModel,
}

#[derive(Debug, Clone, Default)]
pub struct Als {
    pub params: AlsParams,
    pub(crate) state: Option<AlsState>,
    objective_trace: Vec<f64>,
}

impl Als {
    pub fn new(params: AlsParams) -> Self {
        Self { params, state: None, objective_trace: Vec::new() }
    }

    pub fn factors(&self) -> Option<&FactorModel> {
        self.state.as_ref().map(|s| &s.factors)
    }

    /// Objective after initialisation and after each half-step of the last fit.
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }
}

impl Recommender for Als {
    fn name(&self) -> &'static str {
        "als"
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.params.validate()?;
        let mode = if self.params.use_ratings { ValueMode::Ratings } else { ValueMode::Binary };
        let matrix = SparseInteractionMatrix::from_interactions(data, mode);
        let (factors, trace) = als_fit(&matrix, &self.params);
        self.objective_trace = trace;
        self.state = Some(AlsState { history: History::from_interactions(data), factors });
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        let f = &state.factors;
        Ok(predict_parallel(queries, k, |q| {
            if q as usize >= f.n_users() {
                return Vec::new();
            }
            let scores: Vec<f64> = (0..f.n_items()).map(|i| f.score(q as usize, i)).collect();
            let exclude = if filter_seen { state.history.items(q) } else { &[] };
            rank_dense(&scores, exclude, k)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionLog;

    #[test]
    fn single_cell_wins_after_training() {
        let log: InteractionLog<u32> = [(1u32, 2u32, 0i64, 1.0)].into_iter().collect();
        let d = Interactions::new(log, 3, 4).unwrap();
        let mut als = Als::new(AlsParams { rank: 1, iterations: 5, seed: 3, ..Default::default() });
        als.fit(&d).unwrap();
        let f = als.factors().unwrap();
        let target = f.score(1, 2);
        for u in 0..3 {
            for i in 0..4 {
                if (u, i) != (1, 2) {
                    assert!(target > f.score(u, i), "cell ({u},{i}) scores {} >= {target}", f.score(u, i));
                }
            }
        }
    }

    #[test]
    fn objective_matches_dense_sum() {
        let log: InteractionLog<u32> =
            [(0u32, 0u32, 0i64, 1.0), (0, 2, 0, 3.0), (1, 1, 0, 1.0), (2, 0, 0, 2.0)].into_iter().collect();
        let d = Interactions::new(log, 3, 3).unwrap();
        let m = SparseInteractionMatrix::from_interactions(&d, ValueMode::Ratings);
        let (model, _) =
            als_fit(&m, &AlsParams { rank: 2, iterations: 2, alpha: 2.0, lambda: 0.5, ..Default::default() });
        let dense = m.to_dense();
        let mut expected = 0.0;
        for u in 0..3 {
            for i in 0..3 {
                let v = dense[u][i];
                let c = 1.0 + 2.0 * v;
                let p = if v > 0.0 { 1.0 } else { 0.0 };
                let s = model.score(u, i);
                expected += c * (p - s) * (p - s);
            }
        }
        expected += 0.5
            * (model.user_factors.iter().map(|x| x * x).sum::<f64>()
                + model.item_factors.iter().map(|x| x * x).sum::<f64>());
        assert!((als_objective(&m, &model, 2.0, 0.5) - expected).abs() < 1e-10);
    }

    #[test]
    fn k_larger_than_catalog() {
        let log: InteractionLog<u32> = [(0u32, 0u32, 0i64, 1.0), (1, 1, 0, 1.0), (1, 2, 0, 1.0)].into_iter().collect();
        let d = Interactions::from_log(log);
        let mut als = Als::new(AlsParams { rank: 2, ..Default::default() });
        als.fit(&d).unwrap();
        let recs = als.predict(&[0, 1], 50, true).unwrap();
        assert_eq!(recs.lists()[0].items.len(), 2);
        assert_eq!(recs.lists()[1].items.len(), 1);
    }
}

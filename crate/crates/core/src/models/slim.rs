//! Sparse linear method: a non-negative, zero-diagonal item-item weight
//! matrix fitted column by column with elastic-net coordinate descent.
//!
//! For target item `j` the column `w` minimises
//!
//! ```text
//! ½‖a_j − A w‖² + (l2/2)‖w‖² + l1‖w‖₁   s.t. w ≥ 0, w_j = 0
//! ```
//!
//! The solver runs in covariance form on the Gram matrix `G = AᵀA`, keeping
//! `G w` up to date incrementally, so a sweep costs `O(n_items)` plus the
//! Gram rows of coordinates that actually moved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::item_knn::predict_neighborhood;
use super::{Capabilities, History, Interactions, Recommender, ScoreAccumulator, SparseInteractionMatrix, ValueMode};
use crate::data::RecommendationList;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlimParams {
    pub l1: f64,
    pub l2: f64,
    pub max_iters: usize,
    pub tol: f64,
    /// Enforce `w ≥ 0`.
    pub nonnegative: bool,
    pub use_ratings: bool,
}

impl Default for SlimParams {
    fn default() -> Self {
        Self { l1: 0.01, l2: 0.01, max_iters: 100, tol: 1e-4, nonnegative: true, use_ratings: false }
    }
}

impl SlimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0) {
            return Err(Error::param("l1", "must be non-negative"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::param("l2", "must be non-negative"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be positive"));
        }
        Ok(())
    }
}

/// Sparse symmetric `AᵀA`, rows in ascending column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    rows: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

impl Gram {
    pub fn from_matrix(user_item: &SparseInteractionMatrix) -> Self {
        let item_user = user_item.transpose();
        let rows: Vec<Vec<(u32, f64)>> = (0..item_user.n_rows())
            .into_par_iter()
            .map_init(
                || ScoreAccumulator::new(item_user.n_rows()),
                |acc, i| {
                    for (u, a_ui) in item_user.row_iter(i) {
                        for (j, a_uj) in user_item.row_iter(u as usize) {
                            acc.add(j, a_ui * a_uj);
                        }
                    }
                    acc.drain()
                },
            )
            .collect();
        let diag = rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.binary_search_by_key(&(i as u32), |&(j, _)| j).map_or(0.0, |p| row[p].1))
            .collect();
        Self { rows, diag }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }
}

/// Coordinate-descent solver for one target column.
pub struct SlimColumnSolver<'a> {
    gram: &'a Gram,
    params: SlimParams,
}

impl<'a> SlimColumnSolver<'a> {
    pub fn new(gram: &'a Gram, params: SlimParams) -> Self {
        Self { gram, params }
    }

    /// Returns the dense weight column and the number of sweeps run.
    /// `on_sweep` sees the weights after every sweep.
    pub fn solve(&self, target: usize, mut on_sweep: impl FnMut(usize, &[f64])) -> (Vec<f64>, usize) {
        let n = self.gram.n();
        let SlimParams { l1, l2, max_iters, tol, nonnegative, .. } = self.params;
        let mut g_target = vec![0.0; n];
        for &(k, g) in self.gram.row(target) {
            g_target[k as usize] = g;
        }
        let mut w = vec![0.0; n];
        // gw = G w, maintained incrementally
        let mut gw = vec![0.0; n];
        let mut sweeps = 0;
        while sweeps < max_iters {
            sweeps += 1;
            let mut max_delta: f64 = 0.0;
            for k in 0..n {
                if k == target {
                    continue;
                }
                let gkk = self.gram.diag[k];
                let denom = gkk + l2;
                if denom <= 0.0 {
                    continue;
                }
                let rho = g_target[k] - (gw[k] - gkk * w[k]);
                let new = if nonnegative { (rho - l1).max(0.0) / denom } else { soft_threshold(rho, l1) / denom };
                let delta = new - w[k];
                if delta != 0.0 {
                    for &(m, g) in self.gram.row(k) {
                        gw[m as usize] += g * delta;
                    }
                    w[k] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            on_sweep(sweeps, &w);
            if max_delta < tol {
                break;
            }
        }
        (w, sweeps)
    }
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Column objective `½‖a_j − A w‖² + (l2/2)‖w‖² + l1‖w‖₁`, evaluated directly on `A`.
pub fn slim_objective(user_item: &SparseInteractionMatrix, target: usize, w: &[f64], l1: f64, l2: f64) -> f64 {
    let mut loss = 0.0;
    for u in 0..user_item.n_rows() {
        let mut resid = 0.0;
        for (i, a) in user_item.row_iter(u) {
            if i as usize == target {
                resid += a;
            }
            resid -= a * w[i as usize];
        }
        loss += resid * resid;
    }
    0.5 * loss + 0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>() + l1 * w.iter().map(|x| x.abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct SlimState {
    pub(crate) history: History,
    pub(crate) matrix: SparseInteractionMatrix,
    /// Row `j` holds `(i, W[j, i])` for every non-zero weight.
    pub(crate) weights: Vec<Vec<(u32, f64)>>,
}

#[derive(Debug, Clone, Default)]
pub struct Slim {
    pub params: SlimParams,
    pub(crate) state: Option<SlimState>,
}

impl Slim {
    pub fn new(params: SlimParams) -> Self {
        Self { params, state: None }
    }

    /// `W[source, target]`, zero when not stored.
    pub fn weight(&self, source: u32, target: u32) -> Option<f64> {
        let row = self.state.as_ref()?.weights.get(source as usize)?;
        Some(row.binary_search_by_key(&target, |&(i, _)| i).map_or(0.0, |p| row[p].1))
    }

    pub fn nnz(&self) -> usize {
        self.state.as_ref().map_or(0, |s| s.weights.iter().map(Vec::len).sum())
    }
}

impl Recommender for Slim {
    fn name(&self) -> &'static str {
        "slim"
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
        let gram = Gram::from_matrix(&matrix);
        let solver = SlimColumnSolver::new(&gram, self.params);
        let columns: Vec<Vec<(u32, f64)>> = (0..gram.n())
            .into_par_iter()
            .map(|target| {
                let (w, _) = solver.solve(target, |_, _| {});
                w.into_iter().enumerate().filter(|&(_, v)| v != 0.0).map(|(j, v)| (j as u32, v)).collect()
            })
            .collect();
        let mut weights = vec![Vec::new(); gram.n()];
        for (target, col) in columns.into_iter().enumerate() {
            for (source, v) in col {
                weights[source as usize].push((target as u32, v));
            }
        }
        self.state = Some(SlimState { history: History::from_interactions(data), matrix, weights });
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        Ok(predict_neighborhood(queries, k, filter_seen, &state.history, state.history.n_items(), |q, acc| {
            for (j, a_qj) in state.matrix.row_iter(q as usize) {
                for &(i, w) in &state.weights[j as usize] {
                    acc.add(i, a_qj * w);
                }
            }
        }))
    }
}

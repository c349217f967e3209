//! Train/test splitting strategies.
//!
//! Every strategy first partitions the rows (train ⊎ test = input, both in
//! original order) and then optionally removes cold queries/items from test.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{InteractionLog, Token};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult<Id = String> {
    pub train: InteractionLog<Id>,
    pub test: InteractionLog<Id>,
    /// Input row index of every train row.
    pub train_rows: Vec<usize>,
    /// Input row index of every test row.
    pub test_rows: Vec<usize>,
}

impl<Id: Token> SplitResult<Id> {
    fn from_mask(log: &InteractionLog<Id>, is_test: &[bool]) -> Self {
        let (test_rows, train_rows): (Vec<usize>, Vec<usize>) = (0..log.len()).partition(|&r| is_test[r]);
        Self { train: log.select(&train_rows), test: log.select(&test_rows), train_rows, test_rows }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DropCold {
    #[serde(default)]
    pub drop_cold_users: bool,
    #[serde(default)]
    pub drop_cold_items: bool,
}

impl DropCold {
    pub const NONE: DropCold = DropCold { drop_cold_users: false, drop_cold_items: false };
    pub const BOTH: DropCold = DropCold { drop_cold_users: true, drop_cold_items: true };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeThreshold {
    Timestamp(i64),
    /// Fraction of rows that should fall before the threshold.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LastNUnit {
    #[default]
    Interactions,
    Seconds,
}

/// Strategy and parameters, as written in a pipeline config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SplitStrategy {
    Random {
        test_ratio: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    ColdUserRandom {
        test_ratio: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Time {
        #[serde(default)]
        timestamp: Option<i64>,
        #[serde(default)]
        quantile: Option<f64>,
    },
    LastN {
        n: u64,
        #[serde(default)]
        unit: LastNUnit,
    },
    NewUsers {
        test_ratio: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(flatten)]
    pub strategy: SplitStrategy,
    #[serde(flatten)]
    pub drop: DropCold,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            SplitStrategy::Random { test_ratio, .. }
            | SplitStrategy::ColdUserRandom { test_ratio, .. }
            | SplitStrategy::NewUsers { test_ratio } => check_ratio(test_ratio),
            SplitStrategy::Time { .. } => self.time_threshold().map(|_| ()),
            SplitStrategy::LastN { n: 0, .. } => Err(Error::InvalidThreshold("last_n requires n >= 1".into())),
            SplitStrategy::LastN { .. } => Ok(()),
        }
    }

    fn time_threshold(&self) -> Result<TimeThreshold> {
        match self.strategy {
            SplitStrategy::Time { timestamp: Some(t), quantile: None } => Ok(TimeThreshold::Timestamp(t)),
            SplitStrategy::Time { timestamp: None, quantile: Some(q) } => {
                if q > 0.0 && q < 1.0 {
                    Ok(TimeThreshold::Quantile(q))
                } else {
                    Err(Error::InvalidThreshold(format!("quantile {q} must lie in (0, 1)")))
                }
            }
            _ => Err(Error::InvalidThreshold("time split needs exactly one of timestamp or quantile".into())),
        }
    }

    /// Runs the configured strategy. `default_seed` is used when the
    /// strategy carries no seed of its own.
    pub fn split<Id: Token>(&self, log: &InteractionLog<Id>, default_seed: u64) -> Result<SplitResult<Id>> {
        self.validate()?;
        match self.strategy {
            SplitStrategy::Random { test_ratio, seed } => {
                random_split(log, test_ratio, seed.unwrap_or(default_seed), self.drop)
            }
            SplitStrategy::ColdUserRandom { test_ratio, seed } => {
                cold_user_random_split(log, test_ratio, seed.unwrap_or(default_seed), self.drop)
            }
            SplitStrategy::Time { .. } => time_split(log, self.time_threshold()?, self.drop),
            SplitStrategy::LastN { n, unit } => last_n_split(log, n, unit, self.drop),
            SplitStrategy::NewUsers { test_ratio } => new_users_split(log, test_ratio, self.drop),
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRatio(ratio))
    }
}

/// `⌈ratio · n⌉`, tolerant of representation error such as `0.3 * 10 = 3.0000000000000004`.
pub(crate) fn ceil_count(ratio: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let c = (ratio * n as f64 - 1e-9).ceil().max(1.0) as usize;
    c.min(n)
}

/// Sends each row to test independently with probability `test_ratio`.
pub fn random_split<Id: Token>(
    log: &InteractionLog<Id>,
    test_ratio: f64,
    seed: u64,
    drop: DropCold,
) -> Result<SplitResult<Id>> {
    check_ratio(test_ratio)?;
    let mut rng = SplitMix64::new(seed);
    let mask: Vec<bool> = (0..log.len()).map(|_| rng.next_f64() < test_ratio).collect();
    Ok(apply_drop_cold(SplitResult::from_mask(log, &mask), drop))
}

/// Picks `⌈test_ratio · n_queries⌉` queries uniformly at random and sends all
/// of their rows to test.
pub fn cold_user_random_split<Id: Token>(
    log: &InteractionLog<Id>,
    test_ratio: f64,
    seed: u64,
    drop: DropCold,
) -> Result<SplitResult<Id>> {
    check_ratio(test_ratio)?;
    let mut queries = log.distinct_queries();
    let m = ceil_count(test_ratio, queries.len());
    let mut rng = SplitMix64::new(seed);
    // partial Fisher-Yates: the first m slots are the sample
    for i in 0..m {
        let j = i + rng.below((queries.len() - i) as u64) as usize;
        queries.swap(i, j);
    }
    let chosen: HashSet<&Id> = queries[..m].iter().copied().collect();
    let mask: Vec<bool> = log.queries().iter().map(|q| chosen.contains(q)).collect();
    Ok(apply_drop_cold(SplitResult::from_mask(log, &mask), drop))
}

/// Resolves a quantile to the smallest integer timestamp `T` with at least
/// `⌈q · n⌉` rows strictly before it. `None` for an empty log.
pub fn resolve_quantile(timestamps: &[i64], q: f64) -> Option<i64> {
    if timestamps.is_empty() {
        return None;
    }
    let mut sorted = timestamps.to_vec();
    sorted.sort_unstable();
    let need = ceil_count(q, sorted.len());
    Some(sorted[need - 1].saturating_add(1))
}

/// Rows with `t < threshold` go to train, `t >= threshold` to test.
pub fn time_split<Id: Token>(
    log: &InteractionLog<Id>,
    threshold: TimeThreshold,
    drop: DropCold,
) -> Result<SplitResult<Id>> {
    let cut = match threshold {
        TimeThreshold::Timestamp(t) => t,
        TimeThreshold::Quantile(q) => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidThreshold(format!("quantile {q} must lie in (0, 1)")));
            }
            match resolve_quantile(log.timestamps(), q) {
                Some(t) => t,
                None => return Ok(SplitResult::from_mask(log, &[])),
            }
        }
    };
    let mask: Vec<bool> = log.timestamps().iter().map(|&t| t >= cut).collect();
    Ok(apply_drop_cold(SplitResult::from_mask(log, &mask), drop))
}

/// Per query, the last `n` interactions (or the last `n` seconds) go to test.
///
/// With `unit = interactions`, rows are ordered by `(timestamp, row index)`
/// and a query with at most `n` rows is entirely in test. With
/// `unit = seconds`, rows with `t > t_max(query) - n` go to test.
pub fn last_n_split<Id: Token>(
    log: &InteractionLog<Id>,
    n: u64,
    unit: LastNUnit,
    drop: DropCold,
) -> Result<SplitResult<Id>> {
    if n == 0 {
        return Err(Error::InvalidThreshold("last_n requires n >= 1".into()));
    }
    let ts = log.timestamps();
    let mut mask = vec![false; log.len()];
    for (_, mut rows) in log.rows_by_query() {
        match unit {
            LastNUnit::Interactions => {
                rows.sort_by_key(|&r| (ts[r], r));
                let take = (n.min(rows.len() as u64)) as usize;
                for &r in &rows[rows.len() - take..] {
                    mask[r] = true;
                }
            }
            LastNUnit::Seconds => {
                let t_max = rows.iter().map(|&r| ts[r]).max().expect("group is non-empty");
                let bound = t_max.saturating_sub(n.min(i64::MAX as u64) as i64);
                for &r in &rows {
                    mask[r] = ts[r] > bound;
                }
            }
        }
    }
    Ok(apply_drop_cold(SplitResult::from_mask(log, &mask), drop))
}

/// The `⌈test_ratio · n_queries⌉` queries that arrived last (by first
/// timestamp, then first row index) form the test set.
pub fn new_users_split<Id: Token>(
    log: &InteractionLog<Id>,
    test_ratio: f64,
    drop: DropCold,
) -> Result<SplitResult<Id>> {
    check_ratio(test_ratio)?;
    let ts = log.timestamps();
    let mut arrivals: Vec<(i64, usize, &Id)> = log
        .rows_by_query()
        .into_iter()
        .map(|(q, rows)| {
            let first_t = rows.iter().map(|&r| ts[r]).min().expect("group is non-empty");
            (first_t, rows[0], q)
        })
        .collect();
    arrivals.sort_by_key(|&(t, row, _)| (t, row));
    let m = ceil_count(test_ratio, arrivals.len());
    let chosen: HashSet<&Id> = arrivals[arrivals.len() - m..].iter().map(|&(_, _, q)| q).collect();
    let mask: Vec<bool> = log.queries().iter().map(|q| chosen.contains(q)).collect();
    Ok(apply_drop_cold(SplitResult::from_mask(log, &mask), drop))
}

/// Removes test rows whose query and/or item never occurs in train.
pub fn apply_drop_cold<Id: Token>(split: SplitResult<Id>, drop: DropCold) -> SplitResult<Id> {
    if !drop.drop_cold_users && !drop.drop_cold_items {
        return split;
    }
    let train_queries: HashSet<&Id> = split.train.queries().iter().collect();
    let train_items: HashSet<&Id> = split.train.items().iter().collect();
    let keep: Vec<usize> = (0..split.test.len())
        .filter(|&r| {
            let row = split.test.row(r);
            (!drop.drop_cold_users || train_queries.contains(row.query))
                && (!drop.drop_cold_items || train_items.contains(row.item))
        })
        .collect();
    let test = split.test.select(&keep);
    let test_rows = keep.iter().map(|&r| split.test_rows[r]).collect();
    SplitResult { train: split.train, test, train_rows: split.train_rows, test_rows }
}

/// Number of test rows per query; handy for leave-one-out sanity checks.
pub fn test_counts<Id: Token>(split: &SplitResult<Id>) -> HashMap<&Id, usize> {
    let mut counts = HashMap::new();
    for q in split.test.queries() {
        *counts.entry(q).or_default() += 1;
    }
    counts
}

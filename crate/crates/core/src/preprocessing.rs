//! Order-preserving filters over an [`InteractionLog`].
//!
//! Every filter returns a subsequence of its input. Where timestamps tie,
//! the original row index decides.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{InteractionLog, Token};
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Entity {
    Query,
    Item,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    PerQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keep {
    First,
    Last,
}

/// A filter as it appears in a pipeline config, e.g.
/// `{"kind": "min_count", "threshold": 5, "entity": "item"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterSpec {
    MinCount {
        threshold: usize,
        entity: Entity,
    },
    LowRating {
        threshold: f64,
    },
    TimePeriod {
        #[serde(default)]
        start: Option<i64>,
        #[serde(default)]
        end: Option<i64>,
    },
    NumInteractions {
        n: usize,
        scope: Scope,
        keep: Keep,
    },
    NumDays {
        days: i64,
        scope: Scope,
        keep: Keep,
    },
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::MinCount { threshold: 0, .. } => {
                Err(Error::InvalidThreshold("min_count threshold must be >= 1".into()))
            }
            FilterSpec::LowRating { threshold } if threshold.is_nan() => {
                Err(Error::InvalidThreshold("low_rating threshold is NaN".into()))
            }
            FilterSpec::TimePeriod { start: Some(start), end: Some(end) } if start >= end => {
                Err(Error::InvalidPeriod { start, end })
            }
            FilterSpec::NumDays { days, .. } if days < 1 => {
                Err(Error::InvalidThreshold("num_days must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn apply<Id: Token>(&self, log: &InteractionLog<Id>) -> Result<InteractionLog<Id>> {
        match *self {
            FilterSpec::MinCount { threshold, entity } => min_count_filter(log, threshold, entity),
            FilterSpec::LowRating { threshold } => Ok(low_rating_filter(log, threshold)),
            FilterSpec::TimePeriod { start, end } => time_period_filter(log, start, end),
            FilterSpec::NumInteractions { n, scope, keep } => Ok(take_num_interactions(log, n, scope, keep)),
            FilterSpec::NumDays { days, scope, keep } => take_num_days(log, days, scope, keep),
        }
    }
}

/// Applies filters in order.
pub fn apply_filters<Id: Token>(log: &InteractionLog<Id>, filters: &[FilterSpec]) -> Result<InteractionLog<Id>> {
    let mut current = log.clone();
    for f in filters {
        current = f.apply(&current)?;
    }
    Ok(current)
}

/// Keeps rows whose query (or item) occurs at least `threshold` times in the
/// input. Single pass: survivors of the other entity are not re-counted.
pub fn min_count_filter<Id: Token>(
    log: &InteractionLog<Id>,
    threshold: usize,
    entity: Entity,
) -> Result<InteractionLog<Id>> {
    if threshold == 0 {
        return Err(Error::InvalidThreshold("min_count threshold must be >= 1".into()));
    }
    let column = match entity {
        Entity::Query => log.queries(),
        Entity::Item => log.items(),
    };
    let mut counts: HashMap<&Id, usize> = HashMap::new();
    for id in column {
        *counts.entry(id).or_default() += 1;
    }
    Ok(log.retain_rows(|r| counts[&column[r]] >= threshold))
}

/// Keeps rows with `rating >= threshold`.
pub fn low_rating_filter<Id: Token>(log: &InteractionLog<Id>, threshold: f64) -> InteractionLog<Id> {
    let ratings = log.ratings();
    log.retain_rows(|r| ratings[r] >= threshold)
}

/// Keeps rows with `start <= t < end`; a missing bound is open.
pub fn time_period_filter<Id: Token>(
    log: &InteractionLog<Id>,
    start: Option<i64>,
    end: Option<i64>,
) -> Result<InteractionLog<Id>> {
    if let (Some(s), Some(e)) = (start, end) {
        if s >= e {
            return Err(Error::InvalidPeriod { start: s, end: e });
        }
    }
    let ts = log.timestamps();
    Ok(log.retain_rows(|r| start.is_none_or(|s| ts[r] >= s) && end.is_none_or(|e| ts[r] < e)))
}

/// Row groups the scope operates on: one group for global, one per query otherwise.
fn scope_groups<Id: Token>(log: &InteractionLog<Id>, scope: Scope) -> Vec<Vec<usize>> {
    match scope {
        Scope::Global => vec![(0..log.len()).collect()],
        Scope::PerQuery => log.rows_by_query().into_iter().map(|(_, rows)| rows).collect(),
    }
}

/// Keeps the `n` earliest (or latest) rows globally or per query, ordering
/// by `(timestamp, row index)`.
pub fn take_num_interactions<Id: Token>(
    log: &InteractionLog<Id>,
    n: usize,
    scope: Scope,
    keep: Keep,
) -> InteractionLog<Id> {
    let ts = log.timestamps();
    let mut selected = vec![false; log.len()];
    for mut rows in scope_groups(log, scope) {
        rows.sort_by_key(|&r| (ts[r], r));
        let take = n.min(rows.len());
        let chosen = match keep {
            Keep::First => &rows[..take],
            Keep::Last => &rows[rows.len() - take..],
        };
        for &r in chosen {
            selected[r] = true;
        }
    }
    log.retain_rows(|r| selected[r])
}

/// Keeps a window of `days` days at the start or end of each scope's time span.
///
/// `keep = last` retains `t >= t_max - days * 86400`; `keep = first` retains
/// `t < t_min + days * 86400`.
pub fn take_num_days<Id: Token>(
    log: &InteractionLog<Id>,
    days: i64,
    scope: Scope,
    keep: Keep,
) -> Result<InteractionLog<Id>> {
    if days < 1 {
        return Err(Error::InvalidThreshold("num_days must be >= 1".into()));
    }
    let window = days.saturating_mul(SECONDS_PER_DAY);
    let ts = log.timestamps();
    let mut selected = vec![false; log.len()];
    for rows in scope_groups(log, scope) {
        let Some(bound) = (match keep {
            Keep::Last => rows.iter().map(|&r| ts[r]).max().map(|m| m.saturating_sub(window)),
            Keep::First => rows.iter().map(|&r| ts[r]).min().map(|m| m.saturating_add(window)),
        }) else {
            continue;
        };
        for &r in &rows {
            selected[r] = match keep {
                Keep::Last => ts[r] >= bound,
                Keep::First => ts[r] < bound,
            };
        }
    }
    Ok(log.retain_rows(|r| selected[r]))
}

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

/// Bound for anything usable as a query or item identifier: raw string
/// tokens before encoding, dense `u32` indices after.
pub trait Token: Clone + Eq + Hash + Ord + Debug + Send + Sync {}

impl<T: Clone + Eq + Hash + Ord + Debug + Send + Sync> Token for T {}

/// One row of an [`InteractionLog`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction<'a, Id> {
    pub query: &'a Id,
    pub item: &'a Id,
    pub timestamp: i64,
    pub rating: f64,
}

/// Columnar table of `(query, item, timestamp, rating)` events.
///
/// Every filter and splitter produces a new log whose rows are a
/// subsequence of the input, so row order is meaningful and stable.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog<Id = String> {
    queries: Vec<Id>,
    items: Vec<Id>,
    timestamps: Vec<i64>,
    ratings: Vec<f64>,
}

impl<Id> Default for InteractionLog<Id> {
    fn default() -> Self {
        Self { queries: Vec::new(), items: Vec::new(), timestamps: Vec::new(), ratings: Vec::new() }
    }
}

impl<Id: Token> InteractionLog<Id> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            queries: Vec::with_capacity(n),
            items: Vec::with_capacity(n),
            timestamps: Vec::with_capacity(n),
            ratings: Vec::with_capacity(n),
        }
    }

    /// Builds a log from parallel columns. Panics if the lengths differ.
    pub fn from_columns(queries: Vec<Id>, items: Vec<Id>, timestamps: Vec<i64>, ratings: Vec<f64>) -> Self {
        assert!(
            queries.len() == items.len() && items.len() == timestamps.len() && timestamps.len() == ratings.len(),
            "interaction columns must have equal lengths"
        );
        Self { queries, items, timestamps, ratings }
    }

    pub fn push(&mut self, query: Id, item: Id, timestamp: i64, rating: f64) {
        self.queries.push(query);
        self.items.push(item);
        self.timestamps.push(timestamp);
        self.ratings.push(rating);
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[Id] {
        &self.queries
    }

    pub fn items(&self) -> &[Id] {
        &self.items
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }

    pub fn row(&self, i: usize) -> Interaction<'_, Id> {
        Interaction {
            query: &self.queries[i],
            item: &self.items[i],
            timestamp: self.timestamps[i],
            rating: self.ratings[i],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Interaction<'_, Id>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    /// New log holding the given rows, in the order given.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self::with_capacity(rows.len());
        for &r in rows {
            out.push(self.queries[r].clone(), self.items[r].clone(), self.timestamps[r], self.ratings[r]);
        }
        out
    }

    /// Keeps the rows for which `keep(row_index)` is true, preserving order.
    pub fn retain_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        self.select(&rows)
    }

    /// Row indices grouped by query, groups in order of first appearance.
    pub fn rows_by_query(&self) -> Vec<(&Id, Vec<usize>)> {
        group_rows(&self.queries)
    }

    pub fn rows_by_item(&self) -> Vec<(&Id, Vec<usize>)> {
        group_rows(&self.items)
    }

    /// Distinct queries in order of first appearance.
    pub fn distinct_queries(&self) -> Vec<&Id> {
        distinct(&self.queries)
    }

    pub fn distinct_items(&self) -> Vec<&Id> {
        distinct(&self.items)
    }

    /// Replaces identifiers through `f`, keeping everything else.
    pub fn map_ids<T: Token>(&self, mut f: impl FnMut(&Id) -> T) -> InteractionLog<T> {
        InteractionLog {
            queries: self.queries.iter().map(&mut f).collect(),
            items: self.items.iter().map(&mut f).collect(),
            timestamps: self.timestamps.clone(),
            ratings: self.ratings.clone(),
        }
    }
}

fn group_rows<Id: Token>(column: &[Id]) -> Vec<(&Id, Vec<usize>)> {
    let mut slot: HashMap<&Id, usize> = HashMap::new();
    let mut groups: Vec<(&Id, Vec<usize>)> = Vec::new();
    for (row, id) in column.iter().enumerate() {
        let g = *slot.entry(id).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(row);
    }
    groups
}

fn distinct<Id: Token>(column: &[Id]) -> Vec<&Id> {
    let mut seen = std::collections::HashSet::new();
    column.iter().filter(|id| seen.insert(*id)).collect()
}

impl<Id: Token> FromIterator<(Id, Id, i64, f64)> for InteractionLog<Id> {
    fn from_iter<T: IntoIterator<Item = (Id, Id, i64, f64)>>(iter: T) -> Self {
        let mut log = Self::new();
        for (q, i, t, r) in iter {
            log.push(q, i, t, r);
        }
        log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> InteractionLog<&'static str> {
        [("u1", "a", 3, 1.0), ("u2", "b", 1, 2.0), ("u1", "c", 2, 3.0)].into_iter().collect()
    }

    #[test]
    fn groups_follow_first_appearance() {
        let log = sample();
        let groups = log.rows_by_query();
        assert_eq!(groups.len(), 2);
        assert_eq!(*groups[0].0, "u1");
        assert_eq!(groups[0].1, vec![0, 2]);
        assert_eq!(groups[1].1, vec![1]);
        assert_eq!(log.distinct_items(), vec![&"a", &"b", &"c"]);
    }

    #[test]
    fn select_keeps_given_order() {
        let log = sample();
        let sub = log.select(&[2, 0]);
        assert_eq!(sub.items(), &["c", "a"]);
        assert_eq!(sub.timestamps(), &[2, 3]);
    }
}

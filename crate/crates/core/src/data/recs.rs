use std::collections::HashSet;

use super::log::Token;

/// An item with its rank, as read from a flat recs file.
type RankedItem<Id> = (usize, ScoredItem<Id>);

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem<Id> {
    pub item: Id,
    pub score: f64,
}

/// Ranked recommendations for one query; rank is position + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<Id> {
    pub query: Id,
    pub items: Vec<ScoredItem<Id>>,
}

impl<Id: Token> RankedList<Id> {
    pub fn item_ids(&self) -> impl Iterator<Item = &Id> + '_ {
        self.items.iter().map(|s| &s.item)
    }
}

/// Flat `(query, item, rank, score)` view of a recommendation list.
#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation<Id> {
    pub query: Id,
    pub item: Id,
    pub rank: usize,
    pub score: f64,
}

/// Per-query ranked lists of at most `k` items, queries in insertion order.
///
/// A query may carry an empty list; metrics count such queries as misses.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList<Id = String> {
    k: usize,
    lists: Vec<RankedList<Id>>,
}

impl<Id: Token> RecommendationList<Id> {
    pub fn new(k: usize) -> Self {
        Self { k, lists: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Appends a list, truncating to `k`. Items must already be ranked.
    pub fn push(&mut self, query: Id, mut items: Vec<ScoredItem<Id>>) {
        items.truncate(self.k);
        self.lists.push(RankedList { query, items });
    }

    pub fn lists(&self) -> &[RankedList<Id>] {
        &self.lists
    }

    pub fn into_lists(self) -> Vec<RankedList<Id>> {
        self.lists
    }

    pub fn get(&self, query: &Id) -> Option<&RankedList<Id>> {
        self.lists.iter().find(|l| &l.query == query)
    }

    pub fn is_empty(&self) -> bool {
        self.lists.iter().all(|l| l.items.is_empty())
    }

    /// Total number of `(query, item)` entries.
    pub fn len(&self) -> usize {
        self.lists.iter().map(|l| l.items.len()).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = Recommendation<Id>> + '_ {
        self.lists.iter().flat_map(|l| {
            l.items.iter().enumerate().map(move |(pos, s)| Recommendation {
                query: l.query.clone(),
                item: s.item.clone(),
                rank: pos + 1,
                score: s.score,
            })
        })
    }

    /// Regroups flat entries by query (first-appearance order), ordering each
    /// query's items by rank.
    pub fn from_entries(k: usize, entries: impl IntoIterator<Item = Recommendation<Id>>) -> Self {
        let mut index = std::collections::HashMap::new();
        let mut grouped: Vec<(Id, Vec<RankedItem<Id>>)> = Vec::new();
        for e in entries {
            let slot = *index.entry(e.query.clone()).or_insert_with(|| {
                grouped.push((e.query.clone(), Vec::new()));
                grouped.len() - 1
            });
            grouped[slot].1.push((e.rank, ScoredItem { item: e.item, score: e.score }));
        }
        let mut out = Self::new(k);
        for (query, mut items) in grouped {
            items.sort_by_key(|(rank, _)| *rank);
            out.push(query, items.into_iter().map(|(_, s)| s).collect());
        }
        out
    }

    /// Checks list invariants: at most `k` items, scores non-increasing,
    /// no repeated item within a query, no repeated query.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut queries = HashSet::new();
        for list in &self.lists {
            if !queries.insert(&list.query) {
                return Err(format!("query {:?} listed twice", list.query));
            }
            if list.items.len() > self.k {
                return Err(format!("query {:?} has {} > k items", list.query, list.items.len()));
            }
            let mut items = HashSet::new();
            for (pos, s) in list.items.iter().enumerate() {
                if !items.insert(&s.item) {
                    return Err(format!("item {:?} repeated for query {:?}", s.item, list.query));
                }
                if s.score.is_nan() {
                    return Err(format!("NaN score for query {:?}", list.query));
                }
                if pos > 0 && list.items[pos - 1].score < s.score {
                    return Err(format!("scores increase at rank {} for query {:?}", pos + 1, list.query));
                }
            }
        }
        Ok(())
    }
}

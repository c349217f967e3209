use std::collections::HashSet;

use indexmap::IndexMap;

use super::log::InteractionLog;
use super::schema::{FeatureHint, FeatureSchema, FeatureSource, FeatureType};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Categorical(Vec<String>),
    Numerical(Vec<f64>),
}

impl FeatureColumn {
    fn len(&self) -> usize {
        match self {
            FeatureColumn::Categorical(v) => v.len(),
            FeatureColumn::Numerical(v) => v.len(),
        }
    }

    fn feature_type(&self) -> FeatureType {
        match self {
            FeatureColumn::Categorical(_) => FeatureType::Categorical,
            FeatureColumn::Numerical(_) => FeatureType::Numerical,
        }
    }
}

/// Side table of user or item features, one row per key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    keys: Vec<String>,
    columns: IndexMap<String, FeatureColumn>,
}

impl FeatureTable {
    pub fn new(keys: Vec<String>) -> Self {
        Self { keys, columns: IndexMap::new() }
    }

    /// Adds a column; panics if its length differs from the key count.
    pub fn with_column(mut self, name: impl Into<String>, column: FeatureColumn) -> Self {
        assert_eq!(column.len(), self.keys.len(), "feature column length must match key count");
        self.columns.insert(name.into(), column);
        self
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn column(&self, name: &str) -> Option<&FeatureColumn> {
        self.columns.get(name)
    }

    /// Key → categorical value lookup for one column.
    pub fn categorical_map(&self, name: &str) -> Option<std::collections::HashMap<String, String>> {
        match self.columns.get(name)? {
            FeatureColumn::Categorical(values) => Some(self.keys.iter().cloned().zip(values.iter().cloned()).collect()),
            FeatureColumn::Numerical(_) => None,
        }
    }
}

/// Immutable bundle of interactions, optional feature tables and the schema
/// with cardinalities filled in.
#[derive(Debug, Clone)]
pub struct Dataset {
    interactions: InteractionLog,
    user_features: Option<FeatureTable>,
    item_features: Option<FeatureTable>,
    schema: FeatureSchema,
    n_queries: usize,
    n_items: usize,
}

impl Dataset {
    pub fn interactions(&self) -> &InteractionLog {
        &self.interactions
    }

    pub fn user_features(&self) -> Option<&FeatureTable> {
        self.user_features.as_ref()
    }

    pub fn item_features(&self) -> Option<&FeatureTable> {
        self.item_features.as_ref()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub(crate) fn table(&self, source: FeatureSource) -> Option<&FeatureTable> {
        match source {
            FeatureSource::Interactions => None,
            FeatureSource::UserFeatures => self.user_features.as_ref(),
            FeatureSource::ItemFeatures => self.item_features.as_ref(),
        }
    }
}

/// Validates the inputs against `schema` and computes cardinalities.
///
/// Query and item counts are taken over the union of the interaction log and
/// the corresponding feature table keys.
pub fn build_dataset(
    interactions: InteractionLog,
    user_features: Option<FeatureTable>,
    item_features: Option<FeatureTable>,
    mut schema: FeatureSchema,
) -> Result<Dataset> {
    schema.validate()?;

    for (row, r) in interactions.ratings().iter().enumerate() {
        if !r.is_finite() {
            return Err(Error::NonFiniteRating { row });
        }
    }
    for (label, table) in [("user", &user_features), ("item", &item_features)] {
        if let Some(table) = table {
            let mut seen = HashSet::new();
            for key in table.keys() {
                if !seen.insert(key) {
                    return Err(Error::DuplicateFeatureKey { table: label.to_string(), key: key.clone() });
                }
            }
        }
    }

    for col in schema.columns() {
        let table = match col.source {
            FeatureSource::Interactions => {
                if col.hint.is_none() {
                    // the interaction log only carries the four role columns
                    return Err(Error::MissingColumn(format!("{} (interactions)", col.name)));
                }
                continue;
            }
            FeatureSource::UserFeatures => user_features.as_ref(),
            FeatureSource::ItemFeatures => item_features.as_ref(),
        };
        let found = table.and_then(|t| t.column(&col.name));
        match found {
            None => return Err(Error::MissingColumn(format!("{} ({:?})", col.name, col.source))),
            Some(c) if c.feature_type() != col.feature_type => {
                return Err(Error::InvalidSchema(format!(
                    "column {} declared {:?} but holds {:?} data",
                    col.name,
                    col.feature_type,
                    c.feature_type()
                )))
            }
            Some(_) => {}
        }
    }

    let n_queries = union_count(interactions.queries(), user_features.as_ref());
    let n_items = union_count(interactions.items(), item_features.as_ref());

    for col in schema.columns_mut() {
        col.cardinality = match (col.hint, col.feature_type) {
            (Some(FeatureHint::QueryId), _) => Some(n_queries),
            (Some(FeatureHint::ItemId), _) => Some(n_items),
            (None, FeatureType::Categorical) => {
                let table = match col.source {
                    FeatureSource::UserFeatures => user_features.as_ref(),
                    FeatureSource::ItemFeatures => item_features.as_ref(),
                    FeatureSource::Interactions => None,
                };
                match table.and_then(|t| t.column(&col.name)) {
                    Some(FeatureColumn::Categorical(values)) => Some(values.iter().collect::<HashSet<_>>().len()),
                    _ => None,
                }
            }
            _ => None,
        };
    }

    Ok(Dataset { interactions, user_features, item_features, schema, n_queries, n_items })
}

fn union_count(ids: &[String], table: Option<&FeatureTable>) -> usize {
    let mut set: HashSet<&str> = ids.iter().map(String::as_str).collect();
    if let Some(t) = table {
        set.extend(t.keys().iter().map(String::as_str));
    }
    set.len()
}

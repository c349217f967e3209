use std::collections::HashMap;

use indexmap::IndexMap;

use super::dataset::{Dataset, FeatureColumn};
use super::log::InteractionLog;
use super::recs::{RecommendationList, ScoredItem};
use super::schema::{FeatureSource, FeatureType};
use crate::error::{Error, Result};

/// What [`EncoderMapping::encode`] does with tokens it has not seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnseenPolicy {
    #[default]
    Error,
    Drop,
}

/// Dense, gap-free index for one categorical column. Indices are handed out
/// in order of first appearance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColumnEncoder {
    column: String,
    forward: HashMap<String, u32>,
    inverse: Vec<String>,
}

impl ColumnEncoder {
    pub fn fit<'a>(column: impl Into<String>, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut enc = Self { column: column.into(), ..Default::default() };
        for t in tokens {
            enc.insert(t);
        }
        enc
    }

    /// Rebuilds an encoder from its inverse table. Fails on duplicates.
    pub fn from_inverse(column: impl Into<String>, inverse: Vec<String>) -> Result<Self> {
        let column = column.into();
        let mut forward = HashMap::with_capacity(inverse.len());
        for (i, t) in inverse.iter().enumerate() {
            if forward.insert(t.clone(), i as u32).is_some() {
                return Err(Error::InvalidSchema(format!("token {t} repeated in {column} mapping")));
            }
        }
        Ok(Self { column, forward, inverse })
    }

    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&i) = self.forward.get(token) {
            return i;
        }
        let i = self.inverse.len() as u32;
        self.forward.insert(token.to_string(), i);
        self.inverse.push(token.to_string());
        i
    }

    pub fn column(&self) -> &str {
        &self.column
    }

    pub fn size(&self) -> usize {
        self.inverse.len()
    }

    pub fn encode(&self, token: &str) -> Option<u32> {
        self.forward.get(token).copied()
    }

    pub fn decode(&self, index: u32) -> Result<&str> {
        self.inverse.get(index as usize).map(String::as_str).ok_or_else(|| Error::IndexOutOfRange {
            column: self.column.clone(),
            index: index as usize,
            size: self.size(),
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.inverse
    }
}

/// Encoders for a set of columns, with the query and item columns singled out.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EncoderMapping {
    columns: IndexMap<String, ColumnEncoder>,
    query_column: Option<String>,
    item_column: Option<String>,
}

impl EncoderMapping {
    /// Mapping holding just a query and an item encoder.
    pub fn from_query_item(queries: ColumnEncoder, items: ColumnEncoder) -> Self {
        let mut columns = IndexMap::new();
        let query_column = Some(queries.column.clone());
        let item_column = Some(items.column.clone());
        columns.insert(queries.column.clone(), queries);
        columns.insert(items.column.clone(), items);
        Self { columns, query_column, item_column }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnEncoder> {
        self.columns.get(name)
    }

    pub fn queries(&self) -> Result<&ColumnEncoder> {
        self.query_column
            .as_deref()
            .and_then(|c| self.columns.get(c))
            .ok_or_else(|| Error::UnknownColumn("query column not encoded".into()))
    }

    pub fn items(&self) -> Result<&ColumnEncoder> {
        self.item_column
            .as_deref()
            .and_then(|c| self.columns.get(c))
            .ok_or_else(|| Error::UnknownColumn("item column not encoded".into()))
    }

    /// Replaces query and item tokens by dense indices.
    pub fn encode(&self, log: &InteractionLog, policy: UnseenPolicy) -> Result<InteractionLog<u32>> {
        let queries = self.queries()?;
        let items = self.items()?;
        let mut out = InteractionLog::with_capacity(log.len());
        for row in log.iter() {
            let q = queries.encode(row.query);
            let i = items.encode(row.item);
            match (q, i) {
                (Some(q), Some(i)) => out.push(q, i, row.timestamp, row.rating),
                _ if policy == UnseenPolicy::Drop => {}
                (None, _) => {
                    return Err(Error::UnseenToken { column: queries.column.clone(), token: row.query.clone() })
                }
                (_, None) => return Err(Error::UnseenToken { column: items.column.clone(), token: row.item.clone() }),
            }
        }
        Ok(out)
    }

    /// Maps dense ids in a recommendation list back to raw tokens.
    pub fn decode(&self, recs: &RecommendationList<u32>) -> Result<RecommendationList<String>> {
        let queries = self.queries()?;
        let items = self.items()?;
        let mut out = RecommendationList::new(recs.k());
        for list in recs.lists() {
            let decoded = list
                .items
                .iter()
                .map(|s| Ok(ScoredItem { item: items.decode(s.item)?.to_string(), score: s.score }))
                .collect::<Result<Vec<_>>>()?;
            out.push(queries.decode(list.query)?.to_string(), decoded);
        }
        Ok(out)
    }

    pub fn decode_log(&self, log: &InteractionLog<u32>) -> Result<InteractionLog> {
        let queries = self.queries()?;
        let items = self.items()?;
        let mut out = InteractionLog::with_capacity(log.len());
        for row in log.iter() {
            out.push(
                queries.decode(*row.query)?.to_string(),
                items.decode(*row.item)?.to_string(),
                row.timestamp,
                row.rating,
            );
        }
        Ok(out)
    }
}

/// Fits encoders for the named categorical columns of `dataset`.
///
/// Query and item tokens come from the interaction log first, then from the
/// matching feature table keys, so the sizes equal the dataset cardinalities.
pub fn fit_encoder(dataset: &Dataset, columns: &[&str]) -> Result<EncoderMapping> {
    let schema = dataset.schema();
    let query_name = schema.query_column().name.clone();
    let item_name = schema.item_column().name.clone();
    let mut mapping = EncoderMapping::default();
    for &name in columns {
        let spec = schema.column(name).ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if spec.feature_type != FeatureType::Categorical {
            return Err(Error::NonCategoricalColumn(name.to_string()));
        }
        let log = dataset.interactions();
        let encoder = if name == query_name {
            mapping.query_column = Some(name.to_string());
            let keys = dataset.user_features().map(|t| t.keys()).unwrap_or_default();
            ColumnEncoder::fit(name, log.queries().iter().chain(keys).map(String::as_str))
        } else if name == item_name {
            mapping.item_column = Some(name.to_string());
            let keys = dataset.item_features().map(|t| t.keys()).unwrap_or_default();
            ColumnEncoder::fit(name, log.items().iter().chain(keys).map(String::as_str))
        } else {
            let table = dataset.table(spec.source).filter(|_| spec.source != FeatureSource::Interactions);
            match table.and_then(|t| t.column(name)) {
                Some(FeatureColumn::Categorical(values)) => ColumnEncoder::fit(name, values.iter().map(String::as_str)),
                _ => return Err(Error::UnknownColumn(name.to_string())),
            }
        };
        mapping.columns.insert(name.to_string(), encoder);
    }
    Ok(mapping)
}

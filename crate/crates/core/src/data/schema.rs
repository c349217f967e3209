use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureType {
    Categorical,
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Interactions,
    UserFeatures,
    ItemFeatures,
}

/// Role a column plays in the interaction table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureHint {
    QueryId,
    ItemId,
    Timestamp,
    Rating,
}

impl FeatureHint {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureHint::QueryId => "query_id",
            FeatureHint::ItemId => "item_id",
            FeatureHint::Timestamp => "timestamp",
            FeatureHint::Rating => "rating",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub feature_type: FeatureType,
    pub source: FeatureSource,
    #[serde(default)]
    pub hint: Option<FeatureHint>,
    #[serde(default)]
    pub cardinality: Option<usize>,
}

impl ColumnSpec {
    pub fn categorical(name: impl Into<String>, source: FeatureSource) -> Self {
        Self { name: name.into(), feature_type: FeatureType::Categorical, source, hint: None, cardinality: None }
    }

    pub fn numerical(name: impl Into<String>, source: FeatureSource) -> Self {
        Self { name: name.into(), feature_type: FeatureType::Numerical, source, hint: None, cardinality: None }
    }

    pub fn with_hint(mut self, hint: FeatureHint) -> Self {
        self.hint = Some(hint);
        self
    }
}

/// Column metadata: names, types, source tables and role hints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureSchema {
    columns: Vec<ColumnSpec>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let schema = Self { columns };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema for a plain interaction table with the four standard roles.
    pub fn interactions(query: &str, item: &str, timestamp: &str, rating: Option<&str>) -> Self {
        use FeatureSource::Interactions;
        let mut columns = vec![
            ColumnSpec::categorical(query, Interactions).with_hint(FeatureHint::QueryId),
            ColumnSpec::categorical(item, Interactions).with_hint(FeatureHint::ItemId),
            ColumnSpec::numerical(timestamp, Interactions).with_hint(FeatureHint::Timestamp),
        ];
        if let Some(r) = rating {
            columns.push(ColumnSpec::numerical(r, Interactions).with_hint(FeatureHint::Rating));
        }
        Self::new(columns).expect("standard interaction schema is valid")
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn hinted(&self, hint: FeatureHint) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.hint == Some(hint))
    }

    pub fn query_column(&self) -> &ColumnSpec {
        self.hinted(FeatureHint::QueryId).expect("validated schema has a query column")
    }

    pub fn item_column(&self) -> &ColumnSpec {
        self.hinted(FeatureHint::ItemId).expect("validated schema has an item column")
    }

    pub(crate) fn columns_mut(&mut self) -> &mut [ColumnSpec] {
        &mut self.columns
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen_hints: Vec<(FeatureHint, &str)> = Vec::new();
        for (idx, col) in self.columns.iter().enumerate() {
            if self.columns[..idx].iter().any(|c| c.source == col.source && c.name == col.name) {
                return Err(Error::InvalidSchema(format!("column {} declared twice in {:?}", col.name, col.source)));
            }
            let Some(hint) = col.hint else { continue };
            if let Some((_, first)) = seen_hints.iter().find(|(h, _)| *h == hint) {
                return Err(Error::DuplicateHint {
                    hint: hint.as_str().to_string(),
                    first: first.to_string(),
                    second: col.name.clone(),
                });
            }
            seen_hints.push((hint, &col.name));
            if col.source != FeatureSource::Interactions {
                return Err(Error::InvalidSchema(format!("hinted column {} must come from interactions", col.name)));
            }
            let expected = match hint {
                FeatureHint::QueryId | FeatureHint::ItemId => FeatureType::Categorical,
                FeatureHint::Timestamp | FeatureHint::Rating => FeatureType::Numerical,
            };
            if col.feature_type != expected {
                return Err(Error::InvalidSchema(format!(
                    "column {} with hint {} must be {:?}",
                    col.name,
                    hint.as_str(),
                    expected
                )));
            }
        }
        for required in [FeatureHint::QueryId, FeatureHint::ItemId] {
            if !seen_hints.iter().any(|(h, _)| *h == required) {
                return Err(Error::MissingColumn(format!("no column carries the {} hint", required.as_str())));
            }
        }
        Ok(())
    }
}

impl<'de> Deserialize<'de> for FeatureSchema {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            columns: Vec<ColumnSpec>,
        }
        let raw = Raw::deserialize(deserializer)?;
        FeatureSchema::new(raw.columns).map_err(serde::de::Error::custom)
    }
}

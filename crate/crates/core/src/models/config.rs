use serde::{Deserialize, Serialize};

use super::*;

/// Model choice plus parameters, as written in a config file:
/// `{"name": "item_knn", "num_neighbors": 100}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelConfig {
    PopRec(PopRecParams),
    QueryPopRec(QueryPopRecParams),
    Wilson(WilsonParams),
    Ucb(UcbParams),
    Klucb(KlUcbParams),
    Thompson(ThompsonParams),
    ItemKnn(ItemKnnParams),
    Slim(SlimParams),
    Als(AlsParams),
    AssociationRules(AssociationRulesParams),
}

impl ModelConfig {
    pub const NAMES: [&'static str; 10] = [
        "pop_rec",
        "query_pop_rec",
        "wilson",
        "ucb",
        "klucb",
        "thompson",
        "item_knn",
        "slim",
        "als",
        "association_rules",
    ];

    /// Default parameters for a model name.
    pub fn from_name(name: &str) -> Result<Self> {
        let value = serde_json::json!({ "name": name });
        if !Self::NAMES.contains(&name) {
            return Err(Error::UnknownModel(name.to_string()));
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::PopRec(_) => "pop_rec",
            ModelConfig::QueryPopRec(_) => "query_pop_rec",
            ModelConfig::Wilson(_) => "wilson",
            ModelConfig::Ucb(_) => "ucb",
            ModelConfig::Klucb(_) => "klucb",
            ModelConfig::Thompson(_) => "thompson",
            ModelConfig::ItemKnn(_) => "item_knn",
            ModelConfig::Slim(_) => "slim",
            ModelConfig::Als(_) => "als",
            ModelConfig::AssociationRules(_) => "association_rules",
        }
    }

    /// Parses a JSON object, reporting unknown model names as `UnknownModel`.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        match value.get("name").and_then(|n| n.as_str()) {
            Some(name) if !Self::NAMES.contains(&name) => Err(Error::UnknownModel(name.to_string())),
            _ => serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string())),
        }
    }

    /// Checks parameter ranges without fitting anything.
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Wilson(p) => p.validate(),
            ModelConfig::Ucb(p) => p.validate(),
            ModelConfig::ItemKnn(p) => p.validate(),
            ModelConfig::Slim(p) => p.validate(),
            ModelConfig::Als(p) => p.validate(),
            ModelConfig::AssociationRules(p) => p.validate(),
            ModelConfig::PopRec(_) | ModelConfig::QueryPopRec(_) | ModelConfig::Klucb(_) | ModelConfig::Thompson(_) => {
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Model {
        match *self {
            ModelConfig::PopRec(p) => Model::PopRec(PopRec::new(p)),
            ModelConfig::QueryPopRec(p) => Model::QueryPopRec(QueryPopRec::new(p)),
            ModelConfig::Wilson(p) => Model::Wilson(Wilson::new(p)),
            ModelConfig::Ucb(p) => Model::Ucb(Ucb::new(p)),
            ModelConfig::Klucb(p) => Model::KlUcb(KlUcb::new(p)),
            ModelConfig::Thompson(p) => Model::Thompson(ThompsonSampling::new(p)),
            ModelConfig::ItemKnn(p) => Model::ItemKnn(ItemKnn::new(p)),
            ModelConfig::Slim(p) => Model::Slim(Slim::new(p)),
            ModelConfig::Als(p) => Model::Als(Als::new(p)),
            ModelConfig::AssociationRules(p) => Model::AssociationRules(AssociationRules::new(p)),
        }
    }
}

/// Any of the built-in recommenders.
#[derive(Debug, Clone)]
pub enum Model {
    PopRec(PopRec),
    QueryPopRec(QueryPopRec),
    Wilson(Wilson),
    Ucb(Ucb),
    KlUcb(KlUcb),
    Thompson(ThompsonSampling),
    ItemKnn(ItemKnn),
    Slim(Slim),
    Als(Als),
    AssociationRules(AssociationRules),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            Model::PopRec($m) => $body,
            Model::QueryPopRec($m) => $body,
            Model::Wilson($m) => $body,
            Model::Ucb($m) => $body,
            Model::KlUcb($m) => $body,
            Model::Thompson($m) => $body,
            Model::ItemKnn($m) => $body,
            Model::Slim($m) => $body,
            Model::Als($m) => $body,
            Model::AssociationRules($m) => $body,
        }
    };
}

impl Model {
    pub fn config(&self) -> ModelConfig {
        match self {
            Model::PopRec(m) => ModelConfig::PopRec(m.params),
            Model::QueryPopRec(m) => ModelConfig::QueryPopRec(m.params),
            Model::Wilson(m) => ModelConfig::Wilson(m.params),
            Model::Ucb(m) => ModelConfig::Ucb(m.params),
            Model::KlUcb(m) => ModelConfig::Klucb(m.params),
            Model::Thompson(m) => ModelConfig::Thompson(m.params),
            Model::ItemKnn(m) => ModelConfig::ItemKnn(m.params),
            Model::Slim(m) => ModelConfig::Slim(m.params),
            Model::Als(m) => ModelConfig::Als(m.params),
            Model::AssociationRules(m) => ModelConfig::AssociationRules(m.params),
        }
    }
}

impl From<ModelConfig> for Model {
    fn from(config: ModelConfig) -> Self {
        config.build()
    }
}

impl Recommender for Model {
    fn name(&self) -> &'static str {
        dispatch!(self, m => m.name())
    }

    fn capabilities(&self) -> Capabilities {
        dispatch!(self, m => m.capabilities())
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        dispatch!(self, m => m.fit(data))
    }

    fn is_fitted(&self) -> bool {
        dispatch!(self, m => m.is_fitted())
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        dispatch!(self, m => m.predict(queries, k, filter_seen))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_params() {
        let c: ModelConfig = serde_json::from_str(r#"{"name":"item_knn","num_neighbors":100,"shrink":0.0}"#).unwrap();
        assert_eq!(c, ModelConfig::ItemKnn(ItemKnnParams { num_neighbors: 100, ..Default::default() }));
        let c: ModelConfig = serde_json::from_str(r#"{"name":"klucb"}"#).unwrap();
        assert_eq!(c.name(), "klucb");
    }

    #[test]
    fn rejects_unknown_fields_and_names() {
        assert!(serde_json::from_str::<ModelConfig>(r#"{"name":"als","rnak":3}"#).is_err());
        assert!(serde_json::from_str::<ModelConfig>(r#"{"name":"klucb","c":1}"#).is_err());
        let err = ModelConfig::from_json(&serde_json::json!({"name": "bpr"})).unwrap_err();
        assert_eq!(err.code(), "UnknownModel");
    }

    #[test]
    fn every_name_round_trips() {
        for name in ModelConfig::NAMES {
            let c = ModelConfig::from_name(name).unwrap();
            assert_eq!(c.name(), name);
            assert_eq!(c.build().name(), name);
            let back: ModelConfig = serde_json::from_value(serde_json::to_value(c.clone()).unwrap()).unwrap();
            assert_eq!(back, c);
        }
    }
}

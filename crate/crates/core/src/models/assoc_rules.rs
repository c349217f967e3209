use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::item_knn::predict_neighborhood;
use super::{Capabilities, History, Interactions, Recommender, ScoreAccumulator, SparseInteractionMatrix, ValueMode};
use crate::data::RecommendationList;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMetric {
    #[default]
    Confidence,
    Lift,
}

impl FromStr for RuleMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(RuleMetric::Confidence),
            "lift" => Ok(RuleMetric::Lift),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Rule `antecedent → consequent` over distinct-user item sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rule {
    pub consequent: u32,
    pub pair_count: u64,
    /// `n_ij / n_i`
    pub confidence: f64,
    /// `confidence / (n_j / n_queries)`
    pub lift: f64,
}

impl Rule {
    pub fn weight(&self, metric: RuleMetric) -> f64 {
        match metric {
            RuleMetric::Confidence => self.confidence,
            RuleMetric::Lift => self.lift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationRulesParams {
    pub min_pair_count: u64,
    pub metric: RuleMetric,
}

impl Default for AssociationRulesParams {
    fn default() -> Self {
        Self { min_pair_count: 1, metric: RuleMetric::Confidence }
    }
}

impl AssociationRulesParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_pair_count == 0 {
            return Err(Error::param("min_pair_count", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct RulesState {
    pub(crate) history: History,
    /// Positive (`rating > 0`) interactions the rules were mined from.
    pub(crate) positives: SparseInteractionMatrix,
    /// Outgoing rules per antecedent, confidence-descending, ties by consequent id.
    pub(crate) rules: Vec<Vec<Rule>>,
}

/// Item-to-item association rules; a query's score for `i` is the strongest
/// rule `j → i` over its history items `j`.
#[derive(Debug, Clone, Default)]
pub struct AssociationRules {
    pub params: AssociationRulesParams,
    pub(crate) state: Option<RulesState>,
}

impl AssociationRules {
    pub fn new(params: AssociationRulesParams) -> Self {
        Self { params, state: None }
    }

    pub fn rules(&self, antecedent: u32) -> Option<&[Rule]> {
        self.state.as_ref()?.rules.get(antecedent as usize).map(Vec::as_slice)
    }

    /// Predicts with an explicit rule metric instead of the configured one.
    pub fn predict_with_metric(
        &self,
        queries: &[u32],
        k: usize,
        metric: RuleMetric,
        filter_seen: bool,
    ) -> Result<RecommendationList<u32>> {
        let state = self.state.as_ref().ok_or(Error::UnfittedModel)?;
        Ok(predict_neighborhood(queries, k, filter_seen, &state.history, state.history.n_items(), |q, acc| {
            for &j in state.positives.row(q as usize).0 {
                for rule in &state.rules[j as usize] {
                    acc.max(rule.consequent, rule.weight(metric));
                }
            }
        }))
    }
}

impl Recommender for AssociationRules {
    fn name(&self) -> &'static str {
        "association_rules"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { needs_binary_ratings: false, item_to_item: true }
    }

    fn fit(&mut self, data: &Interactions) -> Result<()> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.params.validate()?;
        let user_item = SparseInteractionMatrix::from_interactions(data, ValueMode::Binary);
        let item_user = user_item.transpose();
        let n_queries = data.n_queries() as f64;
        let support: Vec<f64> = (0..item_user.n_rows()).map(|i| item_user.row(i).0.len() as f64).collect();
        let min_count = self.params.min_pair_count;
        let rules = (0..item_user.n_rows())
            .into_par_iter()
            .map_init(
                || ScoreAccumulator::new(item_user.n_rows()),
                |acc, i| {
                    for &u in item_user.row(i).0 {
                        for &j in user_item.row(u as usize).0 {
                            if j as usize != i {
                                acc.add(j, 1.0);
                            }
                        }
                    }
                    let mut out: Vec<Rule> = acc
                        .drain()
                        .into_iter()
                        .filter(|&(_, c)| c as u64 >= min_count)
                        .map(|(j, c)| {
                            let confidence = c / support[i];
                            Rule {
                                consequent: j,
                                pair_count: c as u64,
                                confidence,
                                lift: confidence / (support[j as usize] / n_queries),
                            }
                        })
                        .collect();
                    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.consequent.cmp(&b.consequent)));
                    out
                },
            )
            .collect();
        self.state = Some(RulesState { history: History::from_interactions(data), positives: user_item, rules });
        Ok(())
    }

    fn is_fitted(&self) -> bool {
        self.state.is_some()
    }

    fn predict(&self, queries: &[u32], k: usize, filter_seen: bool) -> Result<RecommendationList<u32>> {
        self.predict_with_metric(queries, k, self.params.metric, filter_seen)
    }
}

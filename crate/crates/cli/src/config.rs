//! Pipeline configuration file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use recsmith::data::{ColumnMapping, CsvOptions};
use recsmith::metrics::{merge_specs, MetricSpec};
use recsmith::models::ModelConfig;
use recsmith::preprocessing::FilterSpec;
use recsmith::splitters::SplitConfig;
use recsmith::tuning::SearchSpace;
use recsmith::{Error, Result};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub search_space: Option<SearchSpace>,
    /// Split applied to the training part to carve out a validation set for `optimize`.
    #[serde(default)]
    pub validation: Option<SplitConfig>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMapping,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default)]
    pub item_features: Option<ItemFeatures>,
}

impl DataConfig {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions { columns: self.columns.clone(), delimiter: self.delimiter.clone() }
    }
}

/// Item → category table used by categorical diversity.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItemFeatures {
    pub path: PathBuf,
    #[serde(default = "default_item_key")]
    pub key: String,
    pub category: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

fn default_item_key() -> String {
    "item_id".into()
}

fn default_delimiter() -> String {
    ",".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelSection {
    Many(Vec<Value>),
    One(Value),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_true")]
    pub filter_seen: bool,
}

fn default_k() -> usize {
    10
}

fn default_true() -> bool {
    true
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { k: default_k(), filter_seen: true }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Test rows with a rating below this are not relevant.
    #[serde(default)]
    pub relevance_threshold: Option<f64>,
    /// Run whose recommendations serve as the unexpectedness baseline.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub map_normalize_by_gt: bool,
    /// Column the report table is sorted by.
    #[serde(default)]
    pub sort_by: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_output_dir() }
    }
}

/// A model entry after parsing: the run label plus its config.
#[derive(Debug, Clone)]
pub struct Run {
    pub label: String,
    pub config: ModelConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at {path}: {}", e.into_inner()))
        })
    }

    pub fn data(&self) -> Result<&DataConfig> {
        self.data.as_ref().ok_or_else(|| Error::Config("missing `data` section".into()))
    }

    pub fn split(&self) -> Result<&SplitConfig> {
        self.split.as_ref().ok_or_else(|| Error::Config("missing `split` section".into()))
    }

    /// Parsed model entries. An entry may carry a `label`; otherwise the
    /// model name is used. Models with a `seed` parameter inherit the
    /// pipeline seed unless they set their own.
    pub fn runs(&self) -> Result<Vec<Run>> {
        let entries = match &self.model {
            None => return Err(Error::Config("missing `model` section".into())),
            Some(ModelSection::One(v)) => vec![v.clone()],
            Some(ModelSection::Many(vs)) => vs.clone(),
        };
        if entries.is_empty() {
            return Err(Error::Config("`model` list is empty".into()));
        }
        let mut labels = HashSet::new();
        let mut runs = Vec::with_capacity(entries.len());
        for (n, mut entry) in entries.into_iter().enumerate() {
            let obj =
                entry.as_object_mut().ok_or_else(|| Error::Config(format!("at model[{n}]: expected an object")))?;
            let label = match obj.remove("label") {
                None => None,
                Some(Value::String(s)) => Some(s),
                Some(_) => return Err(Error::Config(format!("at model[{n}].label: expected a string"))),
            };
            let name = obj.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
            if let Ok(defaults) = ModelConfig::from_name(&name) {
                let has_seed = serde_json::to_value(&defaults).ok().is_some_and(|d| d.get("seed").is_some());
                if has_seed && !obj.contains_key("seed") {
                    obj.insert("seed".into(), Value::from(self.seed));
                }
            }
            let config = ModelConfig::from_json(&entry)?;
            config.validate()?;
            let label = label.unwrap_or_else(|| config.name().to_string());
            if label.is_empty() || label.contains(['/', '\\']) {
                return Err(Error::Config(format!("run label {label:?} is not a valid file name")));
            }
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("duplicate run label {label}")));
            }
            runs.push(Run { label, config });
        }
        Ok(runs)
    }

    pub fn metric_specs(&self) -> Result<Vec<MetricSpec>> {
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics requested".into()));
        }
        merge_specs(self.metrics.iter().cloned())
    }

    pub fn check_predict(&self) -> Result<()> {
        if self.predict.k == 0 {
            return Err(Error::Config("predict.k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn check_inputs(&self) -> Result<()> {
        let data = self.data()?;
        require_file(&data.path)?;
        if let Some(f) = &data.item_features {
            require_file(&f.path)?;
        }
        for f in &self.filters {
            f.validate()?;
        }
        Ok(())
    }

    /// Everything `run` needs, checked before any work starts.
    pub fn validate_run(&self) -> Result<Vec<Run>> {
        self.check_inputs()?;
        self.split()?.validate()?;
        self.check_predict()?;
        let runs = self.runs()?;
        self.metric_specs()?;
        if let Some(b) = &self.evaluation.baseline {
            if !runs.iter().any(|r| &r.label == b) {
                return Err(Error::Config(format!("baseline run {b} is not among the models")));
            }
        }
        Ok(runs)
    }

    pub fn train_path(&self) -> PathBuf {
        self.output.dir.join("train.csv")
    }

    pub fn test_path(&self) -> PathBuf {
        self.output.dir.join("test.csv")
    }

    pub fn model_path(&self, label: &str) -> PathBuf {
        self.output.dir.join("models").join(format!("{label}.bin"))
    }

    pub fn recs_path(&self, label: &str) -> PathBuf {
        self.output.dir.join("recs").join(format!("{label}.csv"))
    }
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("file not found: {}", path.display())))
    }
}

//! Pipeline stages. Every stage computes its outputs in memory first and
//! only then writes them, so a failing stage leaves no files behind.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use log::info;
use recsmith::data::{
    build_dataset, fit_encoder, read_interactions, read_item_categories, read_recommendations, write_interactions_to,
    write_recommendations_to, CsvOptions, EncoderMapping, FeatureSchema, InteractionLog, RecommendationList,
    UnseenPolicy,
};
use recsmith::metrics::{ExperimentTable, GroundTruth, MetricSpec, OfflineMetrics, TrainStats};
use recsmith::models::{load_model, to_bytes, Interactions, Model, Recommender};
use recsmith::preprocessing::apply_filters;
use recsmith::tuning::{config_factory, optimize, Objective, SearchResult};
use recsmith::{Error, Result};

use crate::config::{require_file, PipelineConfig, Run};

/// Files to be written once a stage has succeeded.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, path: PathBuf, bytes: Vec<u8>) {
        self.files.push((path, bytes));
    }

    pub fn write(self) -> Result<()> {
        for (path, bytes) in self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
            info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

pub fn log_bytes(log: &InteractionLog) -> Vec<u8> {
    let mut buf = Vec::new();
    write_interactions_to(&mut buf, log).expect("writing to memory");
    buf
}

pub fn recs_bytes(recs: &RecommendationList) -> Vec<u8> {
    let mut buf = Vec::new();
    write_recommendations_to(&mut buf, recs).expect("writing to memory");
    buf
}

/// Reads the configured data file and applies the filter chain.
pub fn load_data(cfg: &PipelineConfig) -> Result<InteractionLog> {
    let data = cfg.data()?;
    let raw = read_interactions(&data.path, &data.csv_options())?;
    info!("read {} interactions from {}", raw.len(), data.path.display());
    let log = apply_filters(&raw, &cfg.filters)?;
    if log.len() != raw.len() {
        info!("{} interactions left after filtering", log.len());
    }
    Ok(log)
}

/// Reads a file written by the `split` stage.
pub fn read_split_file(path: &Path) -> Result<InteractionLog> {
    require_file(path)?;
    read_interactions(path, &CsvOptions::default())
}

pub fn split_data(cfg: &PipelineConfig, log: &InteractionLog) -> Result<(InteractionLog, InteractionLog)> {
    let s = cfg.split()?.split(log, cfg.seed)?;
    info!("split: {} train rows, {} test rows", s.train.len(), s.test.len());
    Ok((s.train, s.test))
}

/// Dense ids for the queries and items of `train`, plus the encoded log.
pub fn encode_train(train: &InteractionLog) -> Result<(EncoderMapping, Interactions)> {
    let schema = FeatureSchema::interactions("query_id", "item_id", "timestamp", Some("rating"));
    let dataset = build_dataset(train.clone(), None, None, schema)?;
    let mapping = fit_encoder(&dataset, &["query_id", "item_id"])?;
    let encoded = mapping.encode(train, UnseenPolicy::Error)?;
    let data = Interactions::new(encoded, dataset.n_queries(), dataset.n_items())?;
    Ok((mapping, data))
}

pub struct Fitted {
    pub label: String,
    pub model: Model,
    pub mapping: EncoderMapping,
}

pub fn fit_runs(runs: &[Run], train: &InteractionLog) -> Result<Vec<Fitted>> {
    let (mapping, data) = encode_train(train)?;
    runs.iter()
        .map(|run| {
            let mut model = run.config.build();
            let started = std::time::Instant::now();
            model.fit(&data)?;
            info!("fitted {} in {:.2?}", run.label, started.elapsed());
            Ok(Fitted { label: run.label.clone(), model, mapping: mapping.clone() })
        })
        .collect()
}

pub fn model_artifacts(cfg: &PipelineConfig, fitted: &[Fitted], out: &mut Artifacts) -> Result<()> {
    for f in fitted {
        out.add(cfg.model_path(&f.label), to_bytes(&f.model, Some(&f.mapping))?);
    }
    Ok(())
}

pub fn load_fitted(cfg: &PipelineConfig, runs: &[Run]) -> Result<Vec<Fitted>> {
    runs.iter()
        .map(|run| {
            let path = cfg.model_path(&run.label);
            if !path.is_file() {
                log::error!("no fitted model for {} at {}; run `fit` first", run.label, path.display());
                return Err(Error::UnfittedModel);
            }
            let (model, mapping) = load_model(&path)?;
            let mapping = mapping.ok_or_else(|| Error::ModelFormat(format!("{} has no id mapping", path.display())))?;
            Ok(Fitted { label: run.label.clone(), model, mapping })
        })
        .collect()
}

/// Distinct queries of `log` in order of first appearance.
pub fn distinct_queries(log: &InteractionLog) -> Vec<String> {
    log.distinct_queries().into_iter().cloned().collect()
}

/// Top-`k` lists for the queries known to the model; unknown queries are skipped.
pub fn predict(fitted: &Fitted, queries: &[String], k: usize, filter_seen: bool) -> Result<RecommendationList> {
    let encoder = fitted.mapping.queries()?;
    let known: Vec<u32> = queries.iter().filter_map(|q| encoder.encode(q)).collect();
    if known.len() < queries.len() {
        info!(
            "{}: {} of {} queries are cold and get no recommendations",
            fitted.label,
            queries.len() - known.len(),
            queries.len()
        );
    }
    let started = std::time::Instant::now();
    let recs = fitted.model.predict(&known, k, filter_seen)?;
    info!("predicted {} lists with {} in {:.2?}", known.len(), fitted.label, started.elapsed());
    fitted.mapping.decode(&recs)
}

/// Canonical list order for evaluation: test queries in first-appearance
/// order (empty when absent from `recs`), then any remaining `recs` queries.
/// Both `run` and `evaluate` go through this, so they reduce in the same order.
pub fn evaluation_lists(recs: &RecommendationList, test_queries: &[String]) -> RecommendationList {
    let by_query: HashMap<&String, usize> = recs.lists().iter().enumerate().map(|(i, l)| (&l.query, i)).collect();
    let mut out = RecommendationList::new(recs.k());
    let mut used = HashSet::new();
    for q in test_queries {
        match by_query.get(q) {
            Some(&i) => {
                used.insert(i);
                out.push(q.clone(), recs.lists()[i].items.clone());
            }
            None => out.push(q.clone(), Vec::new()),
        }
    }
    for (i, l) in recs.lists().iter().enumerate() {
        if !used.contains(&i) {
            out.push(l.query.clone(), l.items.clone());
        }
    }
    out
}

pub struct EvalInputs<'a> {
    pub specs: &'a [MetricSpec],
    pub test: &'a InteractionLog,
    pub train: Option<&'a InteractionLog>,
}

pub fn evaluate(
    cfg: &PipelineConfig,
    runs: &[(String, RecommendationList)],
    inputs: &EvalInputs,
) -> Result<ExperimentTable> {
    let test_queries = distinct_queries(inputs.test);
    let gt = GroundTruth::from_log(inputs.test, cfg.evaluation.relevance_threshold);
    let train = inputs.train.map(TrainStats::from_log);
    let categories = match cfg.data.as_ref().and_then(|d| d.item_features.as_ref()) {
        Some(f) => Some(read_item_categories(&f.path, &f.key, &f.category, &f.delimiter)?),
        None => None,
    };
    let lists: Vec<(String, RecommendationList)> =
        runs.iter().map(|(label, recs)| (label.clone(), evaluation_lists(recs, &test_queries))).collect();
    let baseline = match &cfg.evaluation.baseline {
        Some(b) => Some(
            lists
                .iter()
                .find(|(label, _)| label == b)
                .map(|(_, r)| r)
                .ok_or_else(|| Error::Config(format!("baseline run {b} has no recommendations")))?,
        ),
        None => None,
    };

    let mut table = ExperimentTable::new();
    for (label, recs) in &lists {
        let mut eval = OfflineMetrics::new(inputs.specs.to_vec())
            .ground_truth(&gt)
            .map_normalize_by_gt(cfg.evaluation.map_normalize_by_gt);
        if let Some(t) = &train {
            eval = eval.train(t);
        }
        if let Some(b) = baseline {
            eval = eval.baseline(b);
        }
        if let Some(c) = &categories {
            eval = eval.categories(c);
        }
        let values = eval.compute(recs)?;
        table.add(label.clone(), &values);
    }
    Ok(table)
}

pub fn report_artifacts(cfg: &PipelineConfig, table: &ExperimentTable, out: &mut Artifacts) {
    let sort = cfg.evaluation.sort_by.as_deref();
    let json = serde_json::to_string_pretty(&table.to_json(sort)).expect("report serialises");
    out.add(cfg.output.dir.join("report.json"), format!("{json}\n").into_bytes());
    out.add(cfg.output.dir.join("report.csv"), table.to_csv(sort).into_bytes());
}

/// Random search over `search_space` for the first configured model.
/// Trials train on the train part of `validation` applied to `train`
/// and are scored on its test part.
pub fn tune(cfg: &PipelineConfig, train: &InteractionLog, metric: &MetricSpec, budget: usize) -> Result<SearchResult> {
    let space = cfg.search_space.as_ref().ok_or_else(|| Error::Config("missing `search_space` section".into()))?;
    space.validate()?;
    let validation =
        cfg.validation.as_ref().ok_or_else(|| Error::Config("missing `validation` split for optimize".into()))?;
    let base = cfg.runs()?.remove(0);
    let s = validation.split(train, cfg.seed)?;
    info!("validation split: {} fit rows, {} validation rows", s.train.len(), s.test.len());
    let (mapping, data) = encode_train(&s.train)?;
    let valid = mapping.encode(&s.test, UnseenPolicy::Drop)?;
    let gt = GroundTruth::from_log(&valid, cfg.evaluation.relevance_threshold);
    let objective = Objective { train: &data, valid: &gt, metric, filter_seen: cfg.predict.filter_seen };
    optimize(config_factory(&base.config), space, budget, &objective, cfg.seed)
}

/// Reads recommendation files, labelling each run by its file stem.
pub fn read_recs_files(paths: &[PathBuf]) -> Result<Vec<(String, RecommendationList)>> {
    paths
        .iter()
        .map(|p| {
            require_file(p)?;
            let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((label, read_recommendations(p)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use recsmith::data::ScoredItem;

    #[test]
    fn evaluation_lists_follow_test_order() {
        let mut recs = RecommendationList::new(2);
        let item = |s: &str| ScoredItem { item: s.to_string(), score: 1.0 };
        recs.push("z".to_string(), vec![item("a")]);
        recs.push("b".to_string(), vec![item("c")]);
        let out = evaluation_lists(&recs, &["b".to_string(), "q".to_string()]);
        let order: Vec<&str> = out.lists().iter().map(|l| l.query.as_str()).collect();
        assert_eq!(order, ["b", "q", "z"]);
        assert!(out.lists()[1].items.is_empty());
    }

    #[test]
    fn artifacts_create_directories() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add(dir.path().join("x/y/z.txt"), b"hi".to_vec());
        a.write().unwrap();
        assert_eq!(std::fs::read(dir.path().join("x/y/z.txt")).unwrap(), b"hi");
    }
}

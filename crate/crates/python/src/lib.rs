//! Python bindings: interaction logs, filters, splits, models, metrics,
//! bandit scores and hyperparameter search.
//!
//! Structured arguments (split configs, model configs, search spaces) are
//! plain dicts and travel through JSON.

use std::collections::HashSet;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use recsmith::data::{
    read_interactions, ColumnEncoder, ColumnMapping, CsvOptions, EncoderMapping, InteractionLog, RecommendationList,
    ScoredItem, UnseenPolicy,
};
use recsmith::metrics::{merge_specs, parse_metric_list, GroundTruth, MetricSpec, OfflineMetrics, TrainStats};
use recsmith::models::{self as m, Interactions, Model, ModelConfig, Recommender as _};
use recsmith::preprocessing::{Entity, FilterSpec, Keep, Scope};
use recsmith::splitters::SplitConfig;
use recsmith::tuning::{self, config_factory, Objective, SearchSpace};

create_exception!(recsmith_py, RecsmithError, PyException, "Raised for any library error; `code` names the kind.");

fn err(e: recsmith::Error) -> PyErr {
    let py_err = RecsmithError::new_err(format!("[{}] {}", e.code(), e));
    Python::attach(|py| {
        let _ = py_err.value(py).setattr("code", e.code());
    });
    py_err
}

fn to_json(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_json<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

fn parse<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<T> {
    serde_json::from_value(to_json(obj)?).map_err(|e| PyValueError::new_err(format!("bad {what}: {e}")))
}

fn parse_str<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> PyResult<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| PyValueError::new_err(format!("bad {what}: {s:?}")))
}

/// Columnar interaction log with string ids.
#[pyclass(name = "InteractionLog", module = "recsmith_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLog {
    inner: InteractionLog,
}

#[pymethods]
impl PyLog {
    #[new]
    #[pyo3(signature = (queries, items, timestamps=None, ratings=None))]
    fn new(
        queries: Vec<String>,
        items: Vec<String>,
        timestamps: Option<Vec<i64>>,
        ratings: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let n = queries.len();
        let timestamps = timestamps.unwrap_or_else(|| (0..n as i64).collect());
        let ratings = ratings.unwrap_or_else(|| vec![1.0; n]);
        if items.len() != n || timestamps.len() != n || ratings.len() != n {
            return Err(PyValueError::new_err("columns must have equal length"));
        }
        if let Some(row) = ratings.iter().position(|r| !r.is_finite()) {
            return Err(err(recsmith::Error::NonFiniteRating { row }));
        }
        Ok(Self { inner: InteractionLog::from_columns(queries, items, timestamps, ratings) })
    }

    /// Reads a delimited file with a header row.
    #[staticmethod]
    #[pyo3(signature = (path, query_id="query_id", item_id="item_id", timestamp="timestamp", rating=Some("rating"), delimiter=","))]
    fn from_csv(
        path: &str,
        query_id: &str,
        item_id: &str,
        timestamp: &str,
        rating: Option<&str>,
        delimiter: &str,
    ) -> PyResult<Self> {
        let options = CsvOptions {
            columns: ColumnMapping {
                query_id: query_id.into(),
                item_id: item_id.into(),
                timestamp: Some(timestamp.into()),
                rating: rating.map(Into::into),
            },
            delimiter: delimiter.into(),
        };
        read_interactions(path, &options).map(|inner| Self { inner }).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("InteractionLog(rows={})", self.inner.len())
    }

    #[getter]
    fn queries(&self) -> Vec<String> {
        self.inner.queries().to_vec()
    }

    #[getter]
    fn items(&self) -> Vec<String> {
        self.inner.items().to_vec()
    }

    #[getter]
    fn timestamps(&self) -> Vec<i64> {
        self.inner.timestamps().to_vec()
    }

    #[getter]
    fn ratings(&self) -> Vec<f64> {
        self.inner.ratings().to_vec()
    }

    fn rows(&self) -> Vec<(String, String, i64, f64)> {
        self.inner.iter().map(|r| (r.query.clone(), r.item.clone(), r.timestamp, r.rating)).collect()
    }

    /// Applies one filter given as a dict, e.g. `{"kind": "min_count", "threshold": 5, "entity": "item"}`.
    fn filter(&self, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: FilterSpec = parse(spec, "filter")?;
        spec.validate().map_err(err)?;
        spec.apply(&self.inner).map(|inner| Self { inner }).map_err(err)
    }

    #[pyo3(signature = (threshold, entity="query"))]
    fn min_count(&self, threshold: usize, entity: &str) -> PyResult<Self> {
        let entity: Entity = parse_str(entity, "entity")?;
        self.apply(FilterSpec::MinCount { threshold, entity })
    }

    fn low_rating(&self, threshold: f64) -> PyResult<Self> {
        self.apply(FilterSpec::LowRating { threshold })
    }

    #[pyo3(signature = (start=None, end=None))]
    fn time_period(&self, start: Option<i64>, end: Option<i64>) -> PyResult<Self> {
        self.apply(FilterSpec::TimePeriod { start, end })
    }

    #[pyo3(signature = (n, scope="per_query", keep="last"))]
    fn take_num_interactions(&self, n: usize, scope: &str, keep: &str) -> PyResult<Self> {
        let (scope, keep): (Scope, Keep) = (parse_str(scope, "scope")?, parse_str(keep, "keep")?);
        self.apply(FilterSpec::NumInteractions { n, scope, keep })
    }

    #[pyo3(signature = (days, scope="per_query", keep="last"))]
    fn take_num_days(&self, days: i64, scope: &str, keep: &str) -> PyResult<Self> {
        let (scope, keep): (Scope, Keep) = (parse_str(scope, "scope")?, parse_str(keep, "keep")?);
        self.apply(FilterSpec::NumDays { days, scope, keep })
    }
}

impl PyLog {
    fn apply(&self, spec: FilterSpec) -> PyResult<Self> {
        spec.validate().map_err(err)?;
        spec.apply(&self.inner).map(|inner| Self { inner }).map_err(err)
    }
}

/// Splits a log with a config dict such as `{"strategy": "last_n", "n": 1}`.
/// Returns `(train, test)`.
#[pyfunction]
#[pyo3(signature = (log, config, seed=0))]
fn split(py: Python<'_>, log: &PyLog, config: &Bound<'_, PyAny>, seed: u64) -> PyResult<(PyLog, PyLog)> {
    let config: SplitConfig = parse(config, "split config")?;
    let s = py.detach(|| config.split(&log.inner, seed)).map_err(err)?;
    Ok((PyLog { inner: s.train }, PyLog { inner: s.test }))
}

fn encode(log: &InteractionLog) -> recsmith::Result<(EncoderMapping, Interactions)> {
    let queries = ColumnEncoder::fit("query_id", log.queries().iter().map(String::as_str));
    let items = ColumnEncoder::fit("item_id", log.items().iter().map(String::as_str));
    let mapping = EncoderMapping::from_query_item(queries, items);
    let encoded = mapping.encode(log, UnseenPolicy::Error)?;
    let (nq, ni) = (mapping.queries()?.size(), mapping.items()?.size());
    Ok((mapping, Interactions::new(encoded, nq, ni)?))
}

/// A recommender over raw string ids.
///
/// ```text
/// model = Recommender("item_knn", num_neighbors=50)
/// model.fit(train)
/// recs = model.predict(["u1", "u2"], k=10)
/// ```
#[pyclass(name = "Recommender", module = "recsmith_py")]
struct PyRecommender {
    model: Model,
    mapping: Option<EncoderMapping>,
}

#[pymethods]
impl PyRecommender {
    #[new]
    #[pyo3(signature = (name, **params))]
    fn new(name: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut value = match params {
            Some(p) => to_json(p.as_any())?,
            None => Value::Object(Default::default()),
        };
        value.as_object_mut().expect("kwargs form an object").insert("name".into(), Value::String(name.to_string()));
        let config = ModelConfig::from_json(&value).map_err(err)?;
        config.validate().map_err(err)?;
        Ok(Self { model: config.build(), mapping: None })
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        ModelConfig::NAMES.to_vec()
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.model.name()
    }

    #[getter]
    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &serde_json::to_value(self.model.config()).expect("config serialises"))
    }

    #[getter]
    fn is_fitted(&self) -> bool {
        self.model.is_fitted()
    }

    fn fit(&mut self, py: Python<'_>, log: &PyLog) -> PyResult<()> {
        let model = &mut self.model;
        let mapping = py
            .detach(|| {
                let (mapping, data) = encode(&log.inner)?;
                model.fit(&data)?;
                Ok(mapping)
            })
            .map_err(err)?;
        self.mapping = Some(mapping);
        Ok(())
    }

    /// Top-`k` `(item, score)` lists per query. Unknown queries get an empty list.
    #[pyo3(signature = (queries, k=10, filter_seen=true))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        queries: Vec<String>,
        k: usize,
        filter_seen: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mapping = self.mapping.as_ref().ok_or_else(|| err(recsmith::Error::UnfittedModel))?;
        let encoder = mapping.queries().map_err(err)?;
        let known: Vec<u32> = queries.iter().filter_map(|q| encoder.encode(q)).collect();
        let recs =
            py.detach(|| self.model.predict(&known, k, filter_seen).and_then(|r| mapping.decode(&r))).map_err(err)?;
        let out = PyDict::new(py);
        for q in &queries {
            let items: Vec<(String, f64)> =
                recs.get(q).map(|l| l.items.iter().map(|s| (s.item.clone(), s.score)).collect()).unwrap_or_default();
            out.set_item(q, items)?;
        }
        Ok(out)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        m::save_model(path, &self.model, self.mapping.as_ref()).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (model, mapping) = m::load_model(path).map_err(err)?;
        Ok(Self { model, mapping })
    }

    fn __repr__(&self) -> String {
        let params = serde_json::to_string(&self.model.config()).expect("config serialises");
        format!("Recommender({params}, fitted={})", self.model.is_fitted())
    }
}

fn metric_specs(metrics: &Bound<'_, PyAny>) -> PyResult<Vec<MetricSpec>> {
    if let Ok(s) = metrics.extract::<String>() {
        return parse_metric_list(&s).map_err(err);
    }
    let items: Vec<String> = metrics.extract()?;
    let mut specs = Vec::new();
    for s in items {
        specs.extend(parse_metric_list(&s).map_err(err)?);
    }
    merge_specs(specs).map_err(err)
}

fn ranked_lists(recs: &Bound<'_, PyDict>) -> PyResult<RecommendationList> {
    let mut lists = Vec::with_capacity(recs.len());
    let mut k = 0;
    for (q, items) in recs.iter() {
        let q: String = q.extract()?;
        let scored: Vec<ScoredItem<String>> = match items.extract::<Vec<String>>() {
            Ok(ids) => ids.into_iter().enumerate().map(|(r, item)| ScoredItem { item, score: -(r as f64) }).collect(),
            Err(_) => {
                let pairs: Vec<(String, f64)> = items.extract()?;
                pairs.into_iter().map(|(item, score)| ScoredItem { item, score }).collect()
            }
        };
        k = k.max(scored.len());
        lists.push((q, scored));
    }
    let mut out = RecommendationList::new(k);
    for (q, items) in lists {
        out.push(q, items);
    }
    out.check_invariants().map_err(PyValueError::new_err)?;
    Ok(out)
}

fn ground_truth(gt: &Bound<'_, PyAny>, min_rating: Option<f64>) -> PyResult<GroundTruth> {
    if let Ok(log) = gt.cast::<PyLog>() {
        return Ok(GroundTruth::from_log(&log.get().inner, min_rating));
    }
    let dict = gt.cast::<PyDict>()?;
    let mut sets = Vec::with_capacity(dict.len());
    for (q, items) in dict.iter() {
        let items: Vec<String> = items.extract()?;
        sets.push((q.extract::<String>()?, items.into_iter().collect::<HashSet<_>>()));
    }
    Ok(GroundTruth::from_sets(sets))
}

/// Computes `metric@k` values for ranked lists.
///
/// `recs` maps a query to its ranked items (plain ids or `(id, score)` pairs,
/// as returned by `Recommender.predict`). `ground_truth` is a dict of
/// relevant items or a test `InteractionLog`.
#[pyfunction]
#[pyo3(signature = (recs, ground_truth=None, metrics=None, train=None, baseline=None, categories=None, min_rating=None))]
#[allow(clippy::too_many_arguments)]
fn evaluate<'py>(
    py: Python<'py>,
    recs: &Bound<'py, PyDict>,
    ground_truth: Option<&Bound<'py, PyAny>>,
    metrics: Option<&Bound<'py, PyAny>>,
    train: Option<&PyLog>,
    baseline: Option<&Bound<'py, PyDict>>,
    categories: Option<std::collections::HashMap<String, String>>,
    min_rating: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let specs = match metrics {
        Some(m) => metric_specs(m)?,
        None => parse_metric_list("ndcg@10").map_err(err)?,
    };
    let recs = ranked_lists(recs)?;
    let gt = ground_truth.map(|g| self::ground_truth(g, min_rating)).transpose()?;
    let stats = train.map(|t| TrainStats::from_log(&t.inner));
    let baseline = baseline.map(ranked_lists).transpose()?;
    let mut eval = OfflineMetrics::new(specs);
    if let Some(g) = &gt {
        eval = eval.ground_truth(g);
    }
    if let Some(s) = &stats {
        eval = eval.train(s);
    }
    if let Some(b) = &baseline {
        eval = eval.baseline(b);
    }
    if let Some(c) = &categories {
        eval = eval.categories(c);
    }
    let values = py.detach(|| eval.compute(&recs)).map_err(err)?;
    let out = PyDict::new(py);
    for (key, v) in values {
        out.set_item(key, v)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (n_pos, n_trials, z=1.96))]
fn wilson_lower_bound(n_pos: u64, n_trials: u64, z: f64) -> f64 {
    m::wilson_lower_bound(n_pos, n_trials, z)
}

#[pyfunction]
#[pyo3(signature = (n_pos, n_trials, total_trials, c=2.0))]
fn ucb_score(n_pos: u64, n_trials: u64, total_trials: f64, c: f64) -> f64 {
    m::ucb_score(n_pos, n_trials, total_trials, c)
}

#[pyfunction]
fn klucb_score(n_pos: u64, n_trials: u64, total_trials: f64) -> f64 {
    m::klucb_score(n_pos, n_trials, total_trials)
}

/// Parameters of trial `trial` for `seed`; depends on nothing else.
#[pyfunction]
fn suggest<'py>(py: Python<'py>, space: &Bound<'py, PyAny>, seed: u64, trial: u64) -> PyResult<Bound<'py, PyAny>> {
    let space: SearchSpace = parse(space, "search space")?;
    let params = tuning::suggest(&space, seed, trial).map_err(err)?;
    from_json(py, &serde_json::to_value(params).expect("params serialise"))
}

/// Every point of a finite space, first dimension varying slowest.
#[pyfunction]
fn grid<'py>(py: Python<'py>, space: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let space: SearchSpace = parse(space, "search space")?;
    let points = tuning::grid(&space).map_err(err)?;
    from_json(py, &serde_json::to_value(points).expect("params serialise"))
}

/// Random search: fits `model` (a config dict with a `name`) on `train` for
/// each of `budget` trials and scores `metric` on `valid`.
#[pyfunction]
#[pyo3(signature = (model, space, train, valid, metric="ndcg@10", budget=20, seed=0, filter_seen=true))]
#[allow(clippy::too_many_arguments)]
fn optimize<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    space: &Bound<'py, PyAny>,
    train: &PyLog,
    valid: &PyLog,
    metric: &str,
    budget: usize,
    seed: u64,
    filter_seen: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let base = ModelConfig::from_json(&to_json(model)?).map_err(err)?;
    let space: SearchSpace = parse(space, "search space")?;
    let metric: MetricSpec = metric.parse().map_err(err)?;
    let result = py
        .detach(|| {
            let (mapping, data) = encode(&train.inner)?;
            let valid = mapping.encode(&valid.inner, UnseenPolicy::Drop)?;
            let gt = GroundTruth::from_log(&valid, None);
            let objective = Objective { train: &data, valid: &gt, metric: &metric, filter_seen };
            tuning::optimize(config_factory(&base), &space, budget, &objective, seed)
        })
        .map_err(err)?;
    from_json(py, &serde_json::to_value(result).expect("result serialises"))
}

#[pymodule]
pub fn recsmith_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RecsmithError", m.py().get_type::<RecsmithError>())?;
    m.add_class::<PyLog>()?;
    m.add_class::<PyRecommender>()?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(wilson_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ucb_score, m)?)?;
    m.add_function(wrap_pyfunction!(klucb_score, m)?)?;
    m.add_function(wrap_pyfunction!(suggest, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add("MODEL_NAMES", PyList::new(m.py(), ModelConfig::NAMES)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_assigns_dense_ids() {
        let log = InteractionLog::from_columns(
            vec!["u2".into(), "u1".into(), "u2".into()],
            vec!["b".into(), "a".into(), "a".into()],
            vec![0, 1, 2],
            vec![1.0; 3],
        );
        let (mapping, data) = encode(&log).unwrap();
        assert_eq!((data.n_queries(), data.n_items()), (2, 2));
        assert_eq!(mapping.queries().unwrap().encode("u2"), Some(0));
        assert_eq!(mapping.items().unwrap().encode("a"), Some(1));
    }
}

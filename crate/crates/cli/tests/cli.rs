use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn recsmith(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recsmith")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

/// 30 users in two taste groups, five timestamped interactions each.
fn community_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("user,movie,stars,ts\n");
    for u in 0..30 {
        let base = if u % 2 == 0 { 0 } else { 10 };
        for step in 0..5 {
            let item = base + (u + step) % 8;
            text.push_str(&format!("u{u},m{item},{},{}\n", 1 + step % 5, 1000 * u + step));
        }
    }
    let path = dir.join("ratings.csv");
    fs::write(&path, text).unwrap();
    path
}

fn pipeline_config(dir: &Path, data: &Path, out: &str) -> Value {
    json!({
        "data": {
            "path": data,
            "columns": {"query_id": "user", "item_id": "movie", "rating": "stars", "timestamp": "ts"}
        },
        "split": {"strategy": "last_n", "n": 1, "drop_cold_users": true, "drop_cold_items": true},
        "model": [{"name": "pop_rec"}, {"name": "item_knn", "num_neighbors": 5}, {"name": "als", "rank": 3}],
        "predict": {"k": 5, "filter_seen": true},
        "metrics": ["ndcg@1,5", "map@5", "recall@5", "coverage@5"],
        "output": {"dir": dir.join(out)},
        "seed": 11
    })
}

#[test]
fn split_writes_a_partition() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tiny.csv");
    fs::write(&data, "query_id,item_id,timestamp,rating\na,x,1,1\na,y,2,1\nb,x,3,1\nb,z,4,1\n").unwrap();
    let config = json!({
        "data": {"path": data},
        "split": {"strategy": "last_n", "n": 1},
        "output": {"dir": dir.path().join("out")}
    });
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = recsmith(&["split", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let train = fs::read_to_string(dir.path().join("out/train.csv")).unwrap();
    let test = fs::read_to_string(dir.path().join("out/test.csv")).unwrap();
    assert_eq!(train, "query_id,item_id,timestamp,rating\na,x,1,1\nb,x,3,1\n");
    assert_eq!(test, "query_id,item_id,timestamp,rating\na,y,2,1\nb,z,4,1\n");
}

#[test]
fn evaluate_reproduces_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("hand.csv");
    fs::write(&recs, "query_id,item_id,rank,score\nu1,a,1,5\nu1,b,2,4\nu1,c,3,3\nu1,d,4,2\nu1,e,5,1\n").unwrap();
    let test = dir.path().join("test.csv");
    fs::write(&test, "query_id,item_id,timestamp,rating\nu1,b,0,1\nu1,e,0,1\nu1,z,0,1\n").unwrap();
    let config = json!({"metrics": ["precision@5", "recall@5", "mrr@5", "map@5", "ndcg@5", "hitrate@1"], "output": {"dir": dir.path()}});
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = recsmith(&[
        "evaluate",
        "--config",
        cfg.to_str().unwrap(),
        "--recs",
        recs.to_str().unwrap(),
        "--test",
        test.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let row = &report["hand"];
    let close = |key: &str, want: f64| {
        let got = row[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-12, "{key}: {got} vs {want}");
    };
    close("precision@5", 0.4);
    close("recall@5", 2.0 / 3.0);
    close("mrr@5", 0.5);
    close("map@5", 0.3);
    let dcg = 1.0 / 3f64.log2() + 1.0 / 6f64.log2();
    close("ndcg@5", dcg / (1.0 + 1.0 / 3f64.log2() + 0.5));
    close("hitrate@1", 0.0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("run"), "{stdout}");
    assert!(stdout.contains("0.400000"));
}

#[test]
fn predict_without_fit_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let cfg = write_config(dir.path(), "c.json", &pipeline_config(dir.path(), &data, "out"));
    let cfg = cfg.to_str().unwrap();
    assert!(recsmith(&["split", "--config", cfg]).status.success());
    let out = recsmith(&["predict", "--config", cfg]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr(&out);
    let last = err.lines().last().unwrap();
    assert!(last.starts_with("error[UnfittedModel]: "), "{err}");
    assert!(!dir.path().join("out/recs").exists());
}

#[test]
fn config_errors_leave_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let mut config = pipeline_config(dir.path(), &data, "out");
    config["model"] = json!({"name": "deep_magic"});
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = recsmith(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[UnknownModel]"));
    assert!(!dir.path().join("out").exists());

    let cfg = write_config(dir.path(), "bad.json", &json!({"data": {"path": 5}}));
    let out = recsmith(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("data.path"), "{}", stderr(&out));

    let out = recsmith(&["run", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_and_evaluation_errors_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let mut config = pipeline_config(dir.path(), &data, "out");
    config["data"]["columns"]["item_id"] = json!("film");
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = recsmith(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[MissingColumn]"));

    let mut config = pipeline_config(dir.path(), &data, "out");
    config["metrics"] = json!(["unexpectedness@5"]);
    let cfg = write_config(dir.path(), "c.json", &config);
    let out = recsmith(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[MissingInput]"));
    assert!(!dir.path().join("out").exists());
}

fn dir_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn run_is_deterministic_and_matches_chained_stages() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "4")] {
        let cfg = write_config(dir.path(), &format!("{name}.json"), &pipeline_config(dir.path(), &data, name));
        let out = recsmith(&["run", "--config", cfg.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push((dir_bytes(&dir.path().join(name)), out.stdout));
    }
    assert_eq!(outputs[0], outputs[1]);
    let names: Vec<&str> = outputs[0].0.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"recs/item_knn.csv") && names.contains(&"models/als.bin") && names.contains(&"report.csv"));
    let table = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}");

    let cfg = write_config(dir.path(), "c.json", &pipeline_config(dir.path(), &data, "c"));
    let cfg = cfg.to_str().unwrap();
    for stage in ["split", "fit", "predict", "evaluate"] {
        let out = recsmith(&[stage, "--config", cfg]);
        assert!(out.status.success(), "{stage}: {}", stderr(&out));
    }
    assert_eq!(dir_bytes(&dir.path().join("c")), outputs[0].0);
}

#[test]
fn seed_and_metric_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let cfg = write_config(dir.path(), "c.json", &pipeline_config(dir.path(), &data, "out"));
    let out = recsmith(&["run", "--config", cfg.to_str().unwrap(), "--metrics", "hitrate@1,5", "--seed", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let keys: Vec<&String> = report["pop_rec"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["hitrate@1", "hitrate@5"]);
}

#[test]
fn optimize_writes_trial_history() {
    let dir = tempfile::tempdir().unwrap();
    let data = community_csv(dir.path());
    let mut config = pipeline_config(dir.path(), &data, "out");
    config["model"] = json!({"name": "item_knn"});
    config["search_space"] = json!({"num_neighbors": {"kind": "int_uniform", "low": 1, "high": 6}});
    config["validation"] = json!({"strategy": "last_n", "n": 1, "drop_cold_users": true, "drop_cold_items": true});
    let cfg = write_config(dir.path(), "c.json", &config);
    let cfg = cfg.to_str().unwrap();
    let out = recsmith(&["optimize", "--config", cfg, "--budget", "5", "--metric", "ndcg@5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let result: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/optimize.json")).unwrap()).unwrap();
    let trials = result["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 5);
    let best = result["best"]["metric_value"].as_f64().unwrap();
    let max = trials.iter().filter_map(|t| t["metric_value"].as_f64()).fold(f64::MIN, f64::max);
    assert_eq!(best, max);
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("best trial"));

    let out = recsmith(&["optimize", "--config", cfg, "--budget", "5", "--metric", "ndcg@5,10"]);
    assert_eq!(out.status.code(), Some(2));
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use recsmith::metrics::{parse_metric_list, MetricSpec};
use recsmith::{Error, ErrorCategory, Result};

mod config;
mod pipeline;

use config::PipelineConfig;
use pipeline::*;

#[derive(Parser)]
#[command(name = "recsmith", version, about = "Config-driven recommender pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Worker threads; falls back to RECSMITH_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the metric list, e.g. `ndcg@10,map@10,coverage@100`.
    #[arg(long)]
    metrics: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split the data into train.csv and test.csv.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Fit every configured model on the train split and save it.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Train file; defaults to train.csv in the output directory.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Recommend for the test queries with previously fitted models.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Test file; defaults to test.csv in the output directory.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Score recommendation files against the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Recommendation CSVs; defaults to the configured runs.
        #[arg(long = "recs")]
        recs: Vec<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Train file for beyond-accuracy metrics.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Random search over the configured search space.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        budget: usize,
        /// Single metric to maximise, e.g. `ndcg@10`.
        #[arg(long)]
        metric: Option<String>,
    },
    /// Filter, split, fit, predict and evaluate in one go.
    Run {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Split { common }
            | Command::Fit { common, .. }
            | Command::Predict { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Optimize { common, .. }
            | Command::Run { common } => common,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Model => 4,
        ErrorCategory::Evaluation => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e);
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_threads(requested: Option<usize>) -> Result<()> {
    let threads = match requested {
        Some(n) => Some(n),
        None => match std::env::var("RECSMITH_THREADS") {
            Ok(v) => {
                Some(v.trim().parse().map_err(|_| Error::Config(format!("RECSMITH_THREADS={v} is not a number")))?)
            }
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &common.metrics {
        cfg.metrics = parse_metric_list(list)?;
    }
    Ok(cfg)
}

fn execute(command: &Command) -> Result<()> {
    let common = command.common();
    init_threads(common.threads)?;
    let cfg = load_config(common)?;
    match command {
        Command::Split { .. } => split(&cfg),
        Command::Fit { train, .. } => fit(&cfg, train.clone()),
        Command::Predict { test, .. } => predict_cmd(&cfg, test.clone()),
        Command::Evaluate { recs, test, train, .. } => evaluate_cmd(&cfg, recs, test.clone(), train.clone()),
        Command::Optimize { budget, metric, .. } => optimize_cmd(&cfg, *budget, metric.as_deref()),
        Command::Run { .. } => run(&cfg),
    }
}

fn split(cfg: &PipelineConfig) -> Result<()> {
    cfg.check_inputs()?;
    cfg.split()?.validate()?;
    let log = load_data(cfg)?;
    let (train, test) = split_data(cfg, &log)?;
    let mut out = Artifacts::default();
    out.add(cfg.train_path(), log_bytes(&train));
    out.add(cfg.test_path(), log_bytes(&test));
    out.write()
}

fn fit(cfg: &PipelineConfig, train: Option<PathBuf>) -> Result<()> {
    let runs = cfg.runs()?;
    let train = read_split_file(&train.unwrap_or_else(|| cfg.train_path()))?;
    let fitted = fit_runs(&runs, &train)?;
    let mut out = Artifacts::default();
    model_artifacts(cfg, &fitted, &mut out)?;
    out.write()
}

fn predict_cmd(cfg: &PipelineConfig, test: Option<PathBuf>) -> Result<()> {
    let runs = cfg.runs()?;
    cfg.check_predict()?;
    let test = read_split_file(&test.unwrap_or_else(|| cfg.test_path()))?;
    let queries = distinct_queries(&test);
    let mut out = Artifacts::default();
    for fitted in load_fitted(cfg, &runs)? {
        let recs = predict(&fitted, &queries, cfg.predict.k, cfg.predict.filter_seen)?;
        out.add(cfg.recs_path(&fitted.label), recs_bytes(&recs));
    }
    out.write()
}

fn needs_train(specs: &[MetricSpec]) -> bool {
    use recsmith::metrics::MetricName::*;
    specs.iter().any(|s| matches!(s.name(), Coverage | Novelty | Surprisal))
}

fn evaluate_cmd(cfg: &PipelineConfig, recs: &[PathBuf], test: Option<PathBuf>, train: Option<PathBuf>) -> Result<()> {
    let specs = cfg.metric_specs()?;
    let recs_paths: Vec<PathBuf> =
        if recs.is_empty() { cfg.runs()?.iter().map(|r| cfg.recs_path(&r.label)).collect() } else { recs.to_vec() };
    let test = read_split_file(&test.unwrap_or_else(|| cfg.test_path()))?;
    let train_path = train.unwrap_or_else(|| cfg.train_path());
    let train = if needs_train(&specs) { Some(read_split_file(&train_path)?) } else { None };
    let runs = read_recs_files(&recs_paths)?;
    let table = evaluate(cfg, &runs, &EvalInputs { specs: &specs, test: &test, train: train.as_ref() })?;
    let mut out = Artifacts::default();
    report_artifacts(cfg, &table, &mut out);
    out.write()?;
    print!("{}", table.to_text(cfg.evaluation.sort_by.as_deref()));
    Ok(())
}

fn optimize_cmd(cfg: &PipelineConfig, budget: usize, metric: Option<&str>) -> Result<()> {
    cfg.check_inputs()?;
    cfg.split()?.validate()?;
    cfg.runs()?;
    let metric: MetricSpec = match metric {
        Some(m) => m.parse()?,
        None => cfg
            .metric_specs()?
            .first()
            .and_then(|s| MetricSpec::new(s.name(), s.k_values().first().copied()).ok())
            .ok_or_else(|| Error::Config("no metric to optimise".into()))?,
    };
    if metric.k_values().len() != 1 {
        return Err(Error::Config(format!("optimise needs a single cutoff, got {metric}")));
    }
    let log = load_data(cfg)?;
    let (train, _) = split_data(cfg, &log)?;
    let result = tune(cfg, &train, &metric, budget)?;
    let failed = result.trials.iter().filter(|t| t.metric_value.is_none()).count();
    info!("{} trials, {} failed", result.trials.len(), failed);
    let mut out = Artifacts::default();
    let json = serde_json::to_string_pretty(&result).expect("search result serialises");
    out.add(cfg.output.dir.join("optimize.json"), format!("{json}\n").into_bytes());
    out.write()?;
    let best = &result.best;
    println!(
        "best trial {}: {} = {:.6} with {}",
        best.index,
        metric,
        best.metric_value.unwrap_or(f64::NAN),
        serde_json::to_string(&best.params).expect("params serialise")
    );
    Ok(())
}

fn run(cfg: &PipelineConfig) -> Result<()> {
    let runs = cfg.validate_run()?;
    let specs = cfg.metric_specs()?;
    let log = load_data(cfg)?;
    let (train, test) = split_data(cfg, &log)?;
    let fitted = fit_runs(&runs, &train)?;
    let queries = distinct_queries(&test);

    let mut out = Artifacts::default();
    out.add(cfg.train_path(), log_bytes(&train));
    out.add(cfg.test_path(), log_bytes(&test));
    model_artifacts(cfg, &fitted, &mut out)?;
    let mut results = Vec::with_capacity(fitted.len());
    for f in &fitted {
        let recs = predict(f, &queries, cfg.predict.k, cfg.predict.filter_seen)?;
        out.add(cfg.recs_path(&f.label), recs_bytes(&recs));
        results.push((f.label.clone(), recs));
    }
    let train_for_metrics = needs_train(&specs).then_some(&train);
    let table = evaluate(cfg, &results, &EvalInputs { specs: &specs, test: &test, train: train_for_metrics })?;
    report_artifacts(cfg, &table, &mut out);
    out.write()?;
    print!("{}", table.to_text(cfg.evaluation.sort_by.as_deref()));
    Ok(())
}

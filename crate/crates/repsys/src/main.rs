//! Command-line driver: ingest rating files, extract consumer profiles,
//! run the full weighted-reputation pipeline, or evaluate previously
//! written score tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use repsys::aggregate::{baseline_scores, score_all, BaselineSpec, ProductScoreTable};
use repsys::config::{parse_config_file, parse_list, PartialConfig, RunConfig};
use repsys::error::{Error, Result};
use repsys::evaluate::{
    mae, topk_tau_curve, write_kendall_csv, EvalReport, KendallCurve, ModelEval,
};
use repsys::fmt::fmt_sig9;
use repsys::ingest::{parse_ratings, RatingFormat, RatingTable};
use repsys::learn::{kfold_split, predict_weights_cv, Algorithm};
use repsys::profile::{build_profiles, write_profiles_csv, LambdaConfig, ProfileMatrix};

#[derive(Parser)]
#[command(
    name = "repsys",
    version,
    about = "Reputation scores for rated products, weighted by learned consumer reliability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a rating file, report its size, and write the canonical CSV.
    Ingest(CommonArgs),
    /// Extract the six per-consumer variables to profiles.csv.
    Profile(CommonArgs),
    /// Full pipeline: profiles, cross-validated weights, scores, report.
    Run(CommonArgs),
    /// Score previously written score CSVs against a rating file.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Rating file to read.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Wire format: ml-100k, ml-1m or csv.
    #[arg(long)]
    format: Option<RatingFormat>,
    /// Decay base for the rating-similarity variable, in (0, 1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated algorithms (lr,rt,svr,knn) or `none`.
    #[arg(long)]
    algo: Option<String>,
    /// Comma-separated baselines (average,median,imdb,bayesian,dirichlet)
    /// or `none`.
    #[arg(long)]
    baseline: Option<String>,
    /// Cross-validation fold count.
    #[arg(long)]
    k_folds: Option<usize>,
    /// Seed for every random choice in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Lower bound on aggregation weights.
    #[arg(long)]
    weight_floor: Option<f64>,
    /// Refit feature scaling inside each training fold.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict_fold_scaling: Option<bool>,
    /// Cap on worker threads (never changes output bytes).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key = value` config file supplying any of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Neighbor count for knn.
    #[arg(long)]
    knn_k: Option<usize>,
    /// Box penalty for svr.
    #[arg(long)]
    svr_c: Option<f64>,
    /// Tube half-width for svr.
    #[arg(long)]
    svr_epsilon: Option<f64>,
    /// RBF kernel width for svr (default: 1 / feature count).
    #[arg(long)]
    svr_gamma: Option<f64>,
    /// Optimizer stopping tolerance for svr.
    #[arg(long)]
    svr_tolerance: Option<f64>,
    /// Minimum rows per leaf for rt.
    #[arg(long)]
    cart_min_leaf: Option<usize>,
    /// Depth cap for rt.
    #[arg(long)]
    cart_max_depth: Option<usize>,
    /// Apply ln(1+v) to the count features for lr.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    lr_log_transform: Option<bool>,
    /// Minimum-votes constant for the imdb baseline
    /// (default: lower quartile of per-product counts).
    #[arg(long)]
    imdb_m: Option<f64>,
    /// Prior strength C for the bayesian and dirichlet baselines.
    #[arg(long)]
    prior_weight: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Score CSVs to evaluate (repeatable); the first is the curve
    /// reference.
    #[arg(long = "scores", required = true)]
    scores: Vec<PathBuf>,
}

impl CommonArgs {
    fn into_config(self) -> Result<RunConfig> {
        let flags = PartialConfig {
            dataset: self.dataset,
            format: self.format,
            lambda: self.lambda,
            algorithms: self.algo.as_deref().map(parse_list::<Algorithm>).transpose()?,
            baselines: self.baseline.as_deref().map(parse_list).transpose()?,
            k_folds: self.k_folds,
            seed: self.seed,
            weight_floor: self.weight_floor,
            strict_fold_scaling: self.strict_fold_scaling,
            threads: self.threads,
            out: self.out,
            knn_k: self.knn_k,
            svr_c: self.svr_c,
            svr_epsilon: self.svr_epsilon,
            svr_gamma: self.svr_gamma,
            svr_tolerance: self.svr_tolerance,
            cart_min_leaf: self.cart_min_leaf,
            cart_max_depth: self.cart_max_depth,
            lr_log_transform: self.lr_log_transform,
            imdb_m: self.imdb_m,
            prior_weight: self.prior_weight,
        };
        let merged = match &self.config {
            Some(path) => flags.or(parse_config_file(path)?),
            None => flags,
        };
        merged.resolve()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through this path too; those exit 0.
            let code: u8 = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => args.into_config().and_then(cmd_ingest),
        Command::Profile(args) => args.into_config().and_then(cmd_profile),
        Command::Run(args) => args.into_config().and_then(cmd_run),
        Command::Evaluate(args) => {
            let scores = args.scores.clone();
            args.common
                .into_config()
                .and_then(|config| cmd_evaluate(config, &scores))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn init_threads(config: &RunConfig) -> Result<()> {
    if let Some(n) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn open_dataset(config: &RunConfig) -> Result<RatingTable> {
    let path = config.dataset()?;
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("file not found: {}", path.display()),
            ))
        } else {
            Error::Io(e)
        }
    })?;
    parse_ratings(BufReader::new(file), config.format)
}

fn create_out_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_run_json(config: &RunConfig) -> Result<()> {
    let mut w = create_out_file(&config.out, "run.json")?;
    serde_json::to_writer_pretty(&mut w, &config.to_json())
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    writeln!(w)?;
    Ok(())
}

fn cmd_ingest(config: RunConfig) -> Result<()> {
    init_threads(&config)?;
    let table = open_dataset(&config)?;
    let report = table.validate();
    if report.duplicate_pairs_removed > 0 {
        eprintln!(
            "note: removed {} duplicate (consumer, product) pairs",
            report.duplicate_pairs_removed
        );
    }
    let mut w = create_out_file(&config.out, "ratings.csv")?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let stats = table.stats();
    println!(
        "{} {} {}",
        stats.consumer_count, stats.product_count, stats.rating_count
    );
    Ok(())
}

fn cmd_profile(config: RunConfig) -> Result<()> {
    init_threads(&config)?;
    let table = open_dataset(&config)?;
    let profiles = build_profiles(&table, LambdaConfig::new(config.lambda)?)?;
    let mut w = create_out_file(&config.out, "profiles.csv")?;
    write_profiles_csv(&profiles, &mut w)?;
    w.flush()?;
    println!("profiles {}", profiles.len());
    Ok(())
}

fn cmd_run(config: RunConfig) -> Result<()> {
    init_threads(&config)?;
    write_run_json(&config)?;
    let table = open_dataset(&config)?;
    let dataset_name = config
        .dataset()?
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let profiles = build_profiles(&table, LambdaConfig::new(config.lambda)?)?;
    let mut w = create_out_file(&config.out, "profiles.csv")?;
    write_profiles_csv(&profiles, &mut w)?;
    w.flush()?;

    let mut models = Vec::new();
    let mut score_tables: Vec<ProductScoreTable> = Vec::new();
    let mut algo_count = 0usize;

    if !config.algorithms.is_empty() {
        let matrix = ProfileMatrix::from_profiles(&profiles)?;
        let plan = kfold_split(&matrix.consumer_ids, config.k_folds, config.seed)?;
        for &algorithm in &config.algorithms {
            let spec = config.regressor_spec(algorithm);
            let outcome = predict_weights_cv(&matrix, &spec, &plan, &config.cv_options())?;
            let mut w =
                create_out_file(&config.out, &format!("weights_{algorithm}.csv"))?;
            outcome.weights.write_csv(&mut w)?;
            w.flush()?;

            let scored = score_all(&table, &outcome.weights, algorithm.label())?;
            let mut w = create_out_file(&config.out, &format!("scores_{algorithm}.csv"))?;
            scored.write_csv(&mut w)?;
            w.flush()?;

            models.push(ModelEval {
                name: algorithm.label().to_string(),
                params: spec.describe().into_iter().collect(),
                mae: mae(&table, &scored)?,
                fold_diagnostics: outcome.fold_diagnostics,
            });
            score_tables.push(scored);
            algo_count += 1;
        }
    }

    for &method in &config.baselines {
        let spec = BaselineSpec {
            method,
            imdb_m: config.imdb_m,
            prior_weight: config.prior_weight,
        };
        let scored = baseline_scores(&table, &spec)?;
        let mut w = create_out_file(&config.out, &format!("scores_{method}.csv"))?;
        scored.write_csv(&mut w)?;
        w.flush()?;

        models.push(ModelEval {
            name: scored.method().to_string(),
            params: spec
                .describe_params(&table)?
                .into_iter()
                .collect::<BTreeMap<_, _>>(),
            mae: mae(&table, &scored)?,
            fold_diagnostics: Vec::new(),
        });
        score_tables.push(scored);
    }

    let ranking = EvalReport::compute_ranking(&models);
    let report = EvalReport {
        dataset: dataset_name,
        lambda: config.lambda,
        seed: config.seed,
        models,
        ranking: ranking.clone(),
    };
    let mut w = create_out_file(&config.out, "eval.json")?;
    report.write_json(&mut w)?;
    w.flush()?;

    // Rank-agreement curves: each learned table against every baseline,
    // skipped when the catalogue is too small for percentile subsets.
    let mut curves: Vec<KendallCurve> = Vec::new();
    if table.stats().product_count >= 10 {
        for reference in &score_tables[..algo_count] {
            for other in &score_tables[algo_count..] {
                curves.push(topk_tau_curve(reference, other)?);
            }
        }
    }
    let mut w = create_out_file(&config.out, "kendall.csv")?;
    write_kendall_csv(&curves, &mut w)?;
    w.flush()?;

    for model in &report.models {
        println!("mae {} {}", model.name, fmt_sig9(model.mae));
    }
    println!("ranking {}", ranking.join(","));
    Ok(())
}

fn cmd_evaluate(config: RunConfig, score_paths: &[PathBuf]) -> Result<()> {
    init_threads(&config)?;
    let table = open_dataset(&config)?;
    let dataset_name = config
        .dataset()?
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());

    let mut tables = Vec::new();
    for path in score_paths {
        let file = File::open(path)?;
        tables.push(ProductScoreTable::parse_csv(BufReader::new(file))?);
    }

    let mut models = Vec::new();
    for scored in &tables {
        models.push(ModelEval {
            name: scored.method().to_string(),
            params: BTreeMap::new(),
            mae: mae(&table, scored)?,
            fold_diagnostics: Vec::new(),
        });
    }
    let ranking = EvalReport::compute_ranking(&models);
    let report = EvalReport {
        dataset: dataset_name,
        lambda: config.lambda,
        seed: config.seed,
        models,
        ranking: ranking.clone(),
    };
    let mut w = create_out_file(&config.out, "eval.json")?;
    report.write_json(&mut w)?;
    w.flush()?;

    // The first table is the reference for every curve.
    let mut curves = Vec::new();
    if let Some((reference, rest)) = tables.split_first() {
        if reference.len() >= 10 {
            for other in rest {
                curves.push(topk_tau_curve(reference, other)?);
            }
        }
    }
    let mut w = create_out_file(&config.out, "kendall.csv")?;
    write_kendall_csv(&curves, &mut w)?;
    w.flush()?;

    for model in &report.models {
        println!("mae {} {}", model.name, fmt_sig9(model.mae));
    }
    println!("ranking {}", ranking.join(","));
    Ok(())
}

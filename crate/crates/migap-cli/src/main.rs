//! `migap` — train denoisers and estimate mutual information.

mod manifest;
mod report;

use clap::{Parser, Subcommand};
use manifest::{load_task, Profile, RunManifest, SuiteFile};
use migap::{
    default_curve_grid, estimate, fit_adaptive, mmse_curve, train, two_stage_train, Checkpoint,
    SamplingConfig, TaskSpec, TrainConfig, TrainedModel, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use report::{write_curve, write_loss_log, BenchmarkReport, BenchmarkRow, EstimateRecord};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// Estimation draws use an RNG stream decorrelated from the training stream.
const ESTIMATE_SEED_SALT: u64 = 0x6573_7469_6d61_7465;
const CURVE_SEED_SALT: u64 = 0x6375_7276_655f_6373;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("{0}")]
    Run(#[from] migap::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Parser)]
#[command(
    name = "migap",
    about = "Mutual information estimation via denoising MMSE gaps",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train denoisers for every seed in a manifest.
    Train {
        /// Run manifest (TOML). Alternatively give --task with --profile.
        #[arg(long, conflicts_with_all = ["task", "profile"])]
        manifest: Option<PathBuf>,
        /// Task description file (TOML), used when no manifest is given.
        #[arg(long, requires = "output_dir")]
        task: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long, value_parser = parse_variant, default_value = "gap")]
        variant: Variant,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Overrides the manifest's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Estimate MI from a trained checkpoint.
    Estimate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, value_parser = parse_variant, default_value = "gap")]
        variant: Variant,
        /// Report bits instead of nats.
        #[arg(long)]
        bits: bool,
        /// Sampling override file (TOML SamplingConfig), e.g. from adaptive-fit.
        #[arg(long)]
        sampling: Option<PathBuf>,
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        inference_times: Option<usize>,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Also write the record as JSON to this path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Export the Monte-Carlo MMSE curve of a checkpoint as CSV.
    Curve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value = "-10.0")]
        grid_lo: f64,
        #[arg(long, default_value = "10.0")]
        grid_hi: f64,
        #[arg(long, default_value = "64")]
        grid_points: usize,
        #[arg(long, default_value = "4096")]
        samples: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit the log-SNR proposal from a preliminary checkpoint's MMSE curve.
    AdaptiveFit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value = "4096")]
        samples: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        /// Fitted SamplingConfig is written here (TOML).
        #[arg(long)]
        output: PathBuf,
    },
    /// Run a benchmark suite: train, estimate and aggregate per task/variant.
    Benchmark {
        /// Suite file (TOML) listing tasks and variants.
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: migap::Error| e.to_string())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Train {
            manifest,
            task,
            profile,
            variant,
            seeds,
            output_dir,
        } => cmd_train(manifest, task, profile, variant, seeds, output_dir),
        Cmd::Estimate {
            checkpoint,
            task,
            variant,
            bits,
            sampling,
            n_points,
            inference_times,
            seed,
            output,
        } => cmd_estimate(
            &checkpoint,
            &task,
            variant,
            bits,
            sampling.as_deref(),
            n_points,
            inference_times,
            seed,
            output.as_deref(),
        ),
        Cmd::Curve {
            checkpoint,
            task,
            grid_lo,
            grid_hi,
            grid_points,
            samples,
            seed,
            output,
        } => cmd_curve(
            &checkpoint,
            &task,
            grid_lo,
            grid_hi,
            grid_points,
            samples,
            seed,
            &output,
        ),
        Cmd::AdaptiveFit {
            checkpoint,
            task,
            samples,
            seed,
            output,
        } => cmd_adaptive_fit(&checkpoint, &task, samples, seed, &output),
        Cmd::Benchmark {
            suite,
            profile,
            seeds,
            output_dir,
        } => cmd_benchmark(&suite, profile, seeds, &output_dir),
    }
}

fn load_model(path: &Path, task: &TaskSpec) -> Result<TrainedModel, CliError> {
    let model = Checkpoint::load(path)?.into_model()?;
    if model.mlp.config().output_dim != task.dim_x()
        || model.mlp.config().cond_dim != task.dim_y()
    {
        return Err(CliError::Manifest(format!(
            "checkpoint dims ({}, {}) do not match task dims ({}, {})",
            model.mlp.config().output_dim,
            model.mlp.config().cond_dim,
            task.dim_x(),
            task.dim_y()
        )));
    }
    Ok(model)
}

fn cmd_train(
    manifest_path: Option<PathBuf>,
    task_path: Option<PathBuf>,
    profile: Profile,
    variant: Variant,
    seeds: Vec<u64>,
    output_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut manifest = match (manifest_path, task_path) {
        (Some(p), _) => RunManifest::load(&p)?,
        (None, Some(tp)) => {
            let task = load_task(&tp)?;
            let out = output_dir.clone().expect("clap enforces output_dir");
            RunManifest::from_profile(profile, task, variant, seeds, out)
        }
        (None, None) => {
            return Err(CliError::Manifest(
                "give either --manifest or --task".into(),
            ))
        }
    };
    if let Some(out) = output_dir {
        manifest.output_dir = out;
    }
    manifest.validate()?;
    std::fs::create_dir_all(&manifest.output_dir)?;
    manifest.save(&manifest.output_dir.join("manifest.toml"))?;

    for &seed in &manifest.seeds {
        let seed_dir = manifest.output_dir.join(format!("seed-{seed}"));
        std::fs::create_dir_all(&seed_dir)?;
        let tc = TrainConfig {
            seed,
            ..manifest.train.clone()
        };
        let (model, fit) = if manifest.variant.is_adaptive() {
            let two = two_stage_train(&manifest.task, manifest.mlp, &tc, &manifest.optimizer)?;
            Checkpoint::from_model(&two.preliminary)
                .save(&seed_dir.join("preliminary.json"))?;
            let fit_body =
                toml::to_string_pretty(&two.fit).map_err(|e| CliError::Manifest(e.to_string()))?;
            std::fs::write(seed_dir.join("fitted-sampling.toml"), fit_body)?;
            (two.final_model, Some(two.fit))
        } else {
            (train(&manifest.task, manifest.mlp, &tc, &manifest.optimizer)?, None)
        };
        write_loss_log(&seed_dir.join("loss_log.csv"), &model.loss_log)?;
        let ck_path = seed_dir.join("checkpoint.json");
        Checkpoint::from_model(&model).save(&ck_path)?;
        if let Some(fit) = fit {
            println!(
                "{} (adaptive loc {:.4} scale {:.4}{})",
                ck_path.display(),
                fit.config.loc,
                fit.config.scale,
                if fit.fallback { ", fallback" } else { "" }
            );
        } else {
            println!("{}", ck_path.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_estimate(
    checkpoint: &Path,
    task_path: &Path,
    variant: Variant,
    bits: bool,
    sampling_path: Option<&Path>,
    n_points: Option<usize>,
    inference_times: Option<usize>,
    seed: u64,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let task = load_task(task_path)?;
    let model = load_model(checkpoint, &task)?;
    let mut cfg = match sampling_path {
        Some(p) => {
            // accept either a bare SamplingConfig or an adaptive-fit output
            // (which nests the config under a [config] table)
            let body = std::fs::read_to_string(p)?;
            match toml::from_str::<SamplingConfig>(&body) {
                Ok(cfg) => cfg,
                Err(first) => toml::from_str::<migap::AdaptiveFit>(&body)
                    .map(|fit| fit.config)
                    .map_err(|_| CliError::Manifest(format!("{}: {first}", p.display())))?,
            }
        }
        None => model.sampling,
    };
    if let Some(n) = n_points {
        cfg.n_points = n;
    }
    if let Some(k) = inference_times {
        cfg.inference_times = k;
    }
    let ctx = model.context(&task);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ ESTIMATE_SEED_SALT);
    let est = estimate(&ctx, &cfg, variant, &mut rng)?;
    let record = EstimateRecord::new(task.canonical_name(), &est, bits);
    let body = serde_json::to_string_pretty(&record)?;
    println!("{body}");
    if let Some(out) = output {
        std::fs::write(out, body)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_curve(
    checkpoint: &Path,
    task_path: &Path,
    grid_lo: f64,
    grid_hi: f64,
    grid_points: usize,
    samples: usize,
    seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    if grid_points < 2 || grid_hi <= grid_lo {
        return Err(CliError::Manifest("need grid_hi > grid_lo and >= 2 points".into()));
    }
    let task = load_task(task_path)?;
    let model = load_model(checkpoint, &task)?;
    let ctx = model.context(&task);
    let grid = migap::uniform_grid(grid_lo, grid_hi, grid_points);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ CURVE_SEED_SALT);
    let curve = mmse_curve(&ctx, &grid, samples, &mut rng)?;
    write_curve(output, &curve)?;
    println!("{}", output.display());
    Ok(())
}

fn cmd_adaptive_fit(
    checkpoint: &Path,
    task_path: &Path,
    samples: usize,
    seed: u64,
    output: &Path,
) -> Result<(), CliError> {
    let task = load_task(task_path)?;
    let model = load_model(checkpoint, &task)?;
    let ctx = model.context(&task);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ CURVE_SEED_SALT);
    let curve = mmse_curve(&ctx, &default_curve_grid(), samples, &mut rng)?;
    let fit = fit_adaptive(&curve, task.dim_x(), &model.sampling);
    let body = toml::to_string_pretty(&fit).map_err(|e| CliError::Manifest(e.to_string()))?;
    std::fs::write(output, body)?;
    println!(
        "loc {:.4} scale {:.4}{}",
        fit.config.loc,
        fit.config.scale,
        if fit.fallback { " (fallback: no crossing found)" } else { "" }
    );
    Ok(())
}

/// One benchmark cell: a (task, variant, seed) triple.
struct Cell {
    index: usize,
    task: TaskSpec,
    variant: Variant,
    seed: u64,
}

struct CellOutcome {
    index: usize,
    task_name: String,
    variant: Variant,
    seed: u64,
    result: Result<(f64, Option<TrainedModel>), String>,
}

fn worker_count(cells: usize) -> usize {
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let n = std::env::var("MIGAP_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(default);
    n.min(cells).max(1)
}

fn run_cell(profile: Profile, cell: &Cell) -> Result<(f64, Option<TrainedModel>), CliError> {
    let tc = profile.train_config(cell.seed);
    let mlp = profile.mlp_config(&cell.task);
    let model = if cell.variant.is_adaptive() {
        two_stage_train(&cell.task, mlp, &tc, &OptCfg::default())?.final_model
    } else {
        train(&cell.task, mlp, &tc, &OptCfg::default())?
    };
    let ctx = model.context(&cell.task);
    let mut rng = ChaCha12Rng::seed_from_u64(cell.seed ^ ESTIMATE_SEED_SALT);
    let est = estimate(&ctx, &model.sampling, cell.variant, &mut rng)?;
    // keep one model per task for the curve export (first baseline seed)
    let keep = !cell.variant.is_adaptive();
    Ok((est.mean_nats, keep.then_some(model)))
}

type OptCfg = migap::OptimizerConfig;

fn cmd_benchmark(
    suite_path: &Path,
    profile: Profile,
    seeds: Vec<u64>,
    output_dir: &Path,
) -> Result<(), CliError> {
    let suite = SuiteFile::load(suite_path)?;
    if seeds.is_empty() {
        return Err(CliError::Manifest("need at least one seed".into()));
    }
    std::fs::create_dir_all(output_dir)?;

    let mut cells = Vec::new();
    for task in &suite.tasks {
        for &variant in &suite.variants {
            for &seed in &seeds {
                cells.push(Cell {
                    index: cells.len(),
                    task: task.clone(),
                    variant,
                    seed,
                });
            }
        }
    }

    let queue = Mutex::new((0..cells.len()).collect::<Vec<usize>>());
    let outcomes = Mutex::new(Vec::<CellOutcome>::new());
    let workers = worker_count(cells.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let next = { queue.lock().unwrap().pop() };
                let Some(i) = next else { break };
                let cell = &cells[i];
                let result = run_cell(profile, cell).map_err(|e| e.to_string());
                outcomes.lock().unwrap().push(CellOutcome {
                    index: cell.index,
                    task_name: cell.task.canonical_name(),
                    variant: cell.variant,
                    seed: cell.seed,
                    result,
                });
            });
        }
    });
    let mut outcomes = outcomes.into_inner().unwrap();
    outcomes.sort_by_key(|o| o.index);

    // aggregate per (task order, variant order), preserving suite order
    let mut groups: BTreeMap<(usize, usize), Vec<&CellOutcome>> = BTreeMap::new();
    for o in &outcomes {
        let cell = &cells[o.index];
        let ti = suite
            .tasks
            .iter()
            .position(|t| t.canonical_name() == cell.task.canonical_name())
            .unwrap();
        let vi = suite.variants.iter().position(|v| *v == o.variant).unwrap();
        groups.entry((ti, vi)).or_default().push(o);
    }

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut curve_models: BTreeMap<String, &TrainedModel> = BTreeMap::new();
    for ((ti, vi), group) in &groups {
        let task = &suite.tasks[*ti];
        let variant = suite.variants[*vi];
        let mut means = Vec::new();
        let mut row_seeds = Vec::new();
        for o in group {
            match &o.result {
                Ok((mean, model)) => {
                    means.push(*mean);
                    row_seeds.push(o.seed);
                    if let Some(m) = model {
                        curve_models.entry(o.task_name.clone()).or_insert(m);
                    }
                }
                Err(msg) => errors.push(format!(
                    "{}/{}/seed-{}: {msg}",
                    o.task_name,
                    o.variant.as_str(),
                    o.seed
                )),
            }
        }
        if means.is_empty() {
            continue;
        }
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let std = if means.len() >= 2 {
            (means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let gt = task.ground_truth();
        rows.push(BenchmarkRow {
            task: task.canonical_name(),
            ground_truth_nats: gt,
            variant: variant.as_str().to_string(),
            mean_nats: mean,
            std_nats: std,
            bias_nats: gt.map(|g| mean - g),
            seeds: row_seeds,
        });
    }

    for (name, model) in &curve_models {
        let task = suite
            .tasks
            .iter()
            .find(|t| t.canonical_name() == *name)
            .unwrap();
        let ctx = model.context(task);
        let mut rng = ChaCha12Rng::seed_from_u64(CURVE_SEED_SALT);
        let curve = mmse_curve(&ctx, &default_curve_grid(), 4096, &mut rng)?;
        write_curve(&output_dir.join(format!("curve-{name}.csv")), &curve)?;
    }

    let report = BenchmarkReport {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        profile: profile.name().to_string(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        rows,
        errors,
    };
    report.write_csv(&output_dir.join("report.csv"))?;
    report.write_json(&output_dir.join("report.json"))?;
    println!("{}", output_dir.join("report.csv").display());
    for e in &report.errors {
        eprintln!("cell failed: {e}");
    }
    Ok(())
}

//! Command-line entry points: simulate | replicate | apply | plot.
//! Exit codes: 0 success, 1 usage/config error, 2 runtime/data error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{load_run_config, RunConfig};
use crate::data::{self, Dataset, Role, SchemaConfig};
use crate::dgp;
use crate::error::{Error, Result};
use crate::eval;
use crate::forest;
use crate::plot;
use crate::seed::derive_seed;
use crate::transport::{self, Aim, ConditionalSampler, EstimatorSpec, ModelKind};

#[derive(Parser)]
#[command(name = "cate", version, about = "CATE estimation toolkit: honest causal forests, trial-participation IPW, and a simulation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source population and trial sample as CSVs
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory override
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the replicated benchmark grid; writes metrics.csv and aggregate.csv
    Replicate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the configured estimators on trial/source CSVs; writes
    /// predictions.csv, weights.csv and gate.csv
    Apply {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trial: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render SVG summary charts from a metrics CSV
    Plot {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Metrics CSV (default: <out_dir>/metrics.csv)
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments and dispatches; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigParse { .. } | Error::InvalidConfig(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => cmd_simulate(&config, out, seed),
        Command::Replicate {
            config,
            out,
            parallelism,
            seed,
        } => cmd_replicate(&config, out, parallelism, seed),
        Command::Apply {
            config,
            trial,
            source,
            out,
            seed,
        } => cmd_apply(&config, &trial, &source, out, seed),
        Command::Plot {
            config,
            metrics,
            out,
        } => cmd_plot(config.as_deref(), metrics, out),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn require_file(path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::InvalidConfig(format!(
            "input file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_simulate(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_run_config(config)?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(s) = seed {
        cfg.dgp.seed = s;
    }
    let pop = dgp::generate_source(&cfg.dgp)?.with_active_x1(cfg.dim_x1)?;
    let sample = dgp::select_trial(&pop, cfg.trial_size, &cfg.dgp, derive_seed(cfg.dgp.seed, 1))?;
    let sample = dgp::assign_and_outcome(&sample, &cfg.dgp, derive_seed(cfg.dgp.seed, 2))?;
    ensure_dir(&cfg.out_dir)?;
    data::write_dataset(&sample.source, &cfg.out_dir.join("source.csv"))?;
    data::write_dataset(&sample.trial, &cfg.out_dir.join("trial.csv"))?;
    println!(
        "wrote source.csv ({} rows) and trial.csv ({} rows, target {}) to {}; mu = {}",
        sample.source.n_rows(),
        sample.trial.n_rows(),
        sample.target_n,
        cfg.out_dir.display(),
        sample.mu
    );
    Ok(())
}

fn cmd_replicate(
    config: &Path,
    out: Option<PathBuf>,
    parallelism: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_run_config(config)?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    let mut grid = cfg
        .grid
        .clone()
        .ok_or_else(|| Error::InvalidConfig("replicate requires a [grid] section".into()))?;
    if let Some(s) = seed {
        grid.master_seed = s;
    }
    let parallelism = parallelism.unwrap_or(cfg.parallelism);
    let records =
        eval::run_grid_with_progress(&grid, parallelism, &|line| eprintln!("{line}"))?;
    let aggregates = eval::aggregate(&records);
    ensure_dir(&cfg.out_dir)?;
    eval::write_csv(&records, &cfg.out_dir.join("metrics.csv"))?;
    eval::write_csv(&aggregates, &cfg.out_dir.join("aggregate.csv"))?;
    let failed = records.iter().filter(|r| r.status != "ok").count();
    println!(
        "wrote metrics.csv ({} records, {} failed) and aggregate.csv ({} rows) to {}",
        records.len(),
        failed,
        aggregates.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    row_id: usize,
    model: &'static str,
    aim: &'static str,
    cate_hat: f64,
}

#[derive(Serialize)]
struct WeightRow {
    row_id: usize,
    model: &'static str,
    probability: f64,
    weight: f64,
}

#[derive(Serialize)]
struct GateRow {
    model: &'static str,
    group: String,
    n: usize,
    effect: f64,
    ci_low: f64,
    ci_high: f64,
}

/// The applied default: the two transported estimators, both aims,
/// KNN conditional sampler.
fn default_apply_specs() -> Vec<EstimatorSpec> {
    let mut specs = Vec::new();
    for aim in [Aim::A, Aim::B] {
        for model in [ModelKind::M1Ipw, ModelKind::M2Ipw] {
            specs.push(EstimatorSpec {
                model,
                aim,
                sampler: ConditionalSampler::Knn,
                ..Default::default()
            });
        }
    }
    specs
}

/// Disjoint trial/source files: stack covariate rows with selection labels
/// 0 (source) and 1 (trial) to form the full population.
fn stack_with_selection(source: &Dataset, trial: &Dataset, schema: &SchemaConfig) -> Result<Dataset> {
    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for name in schema.x1.iter().chain(&schema.x2) {
        let mut col = source.column(name)?.to_vec();
        col.extend_from_slice(trial.column(name)?);
        names.push(name.clone());
        columns.push(col);
    }
    let mut s = vec![0.0; source.n_rows()];
    s.extend(std::iter::repeat(1.0).take(trial.n_rows()));
    names.push("s".into());
    columns.push(s);
    let mut roles = std::collections::BTreeMap::new();
    roles.insert(Role::X1, schema.x1.clone());
    roles.insert(Role::X2, schema.x2.clone());
    roles.insert(Role::Selection, vec!["s".into()]);
    Dataset::new(names, columns, roles)
}

fn cmd_apply(
    config: &Path,
    trial_path: &Path,
    source_path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_run_config(config)?;
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    require_file(trial_path)?;
    require_file(source_path)?;
    let schema = cfg
        .schema
        .clone()
        .ok_or_else(|| Error::InvalidConfig("apply requires a [schema] section".into()))?;
    if schema.x1.is_empty() || schema.x2.is_empty() {
        return Err(Error::InvalidConfig(
            "apply schema must map x1 and x2 columns".into(),
        ));
    }
    // the trial file carries treatment/outcome, the source file the
    // selection labels (nested design)
    let trial_schema = SchemaConfig {
        selection: None,
        ..schema.clone()
    };
    let source_schema = SchemaConfig {
        treatment: None,
        outcome: None,
        ..schema.clone()
    };
    let trial = data::load_dataset(trial_path, &trial_schema)?;
    let source_raw = data::load_dataset(source_path, &source_schema)?;
    let source = if cfg.trial_in_source {
        if !source_raw.has_role(Role::Selection) {
            return Err(Error::InvalidConfig(
                "trial_in_source requires a selection column in the schema".into(),
            ));
        }
        Arc::new(source_raw)
    } else {
        Arc::new(stack_with_selection(&source_raw, &trial, &schema)?)
    };

    let specs = if cfg.specs.is_empty() {
        default_apply_specs()
    } else {
        cfg.specs.clone()
    };
    let apply_seed = seed.unwrap_or(0);

    let mut predictions: Vec<PredictionRow> = Vec::new();
    let mut weights: Vec<WeightRow> = Vec::new();
    let mut gate: Vec<GateRow> = Vec::new();
    let mut fitted_kinds: Vec<(ModelKind, transport::FittedEstimator)> = Vec::new();
    let x1_queries = source.select_columns(&[Role::X1])?;
    let treatment = trial.role_column(Role::Treatment)?.to_vec();
    let outcome = trial.role_column(Role::Outcome)?.to_vec();

    for (idx, spec) in specs.iter().enumerate() {
        if !fitted_kinds.iter().any(|(k, _)| *k == spec.model) {
            let fitted = transport::fit_estimator(&trial, source.clone(), spec)?;
            fitted_kinds.push((spec.model, fitted));
        }
        let fitted = &fitted_kinds.iter().find(|(k, _)| *k == spec.model).unwrap().1;
        let preds = match spec.aim {
            Aim::A => transport::estimate_aim_a(
                fitted,
                &x1_queries,
                derive_seed(apply_seed, idx as u64),
            )?,
            Aim::B => transport::estimate_aim_b(fitted, &source)?,
        };
        predictions.extend(preds.into_iter().enumerate().map(|(row_id, cate_hat)| {
            PredictionRow {
                row_id,
                model: spec.model.name(),
                aim: spec.aim.name(),
                cate_hat,
            }
        }));
    }

    for (kind, fitted) in &fitted_kinds {
        if let Some(selection) = &fitted.selection {
            let trial_wf = trial.select_columns(&fitted.spec.weight_roles())?;
            for (row_id, (x2_row, &w)) in trial_wf.rows().zip(&fitted.weights).enumerate() {
                weights.push(WeightRow {
                    row_id,
                    model: kind.name(),
                    probability: selection.participation_prob(x2_row)?,
                    weight: w,
                });
            }
        }
        // tertile GATE on cross-fit trial predictions
        let features = trial.select_columns(&fitted.feature_roles)?;
        let crossfit = forest::predict_crossfit(
            &features,
            &treatment,
            &outcome,
            &fitted.weights,
            &fitted.spec.forest,
            cfg.gate_folds,
        )?;
        for record in eval::gate_tertiles(&crossfit, &treatment, &outcome)? {
            gate.push(GateRow {
                model: kind.name(),
                group: record.group,
                n: record.n,
                effect: record.effect,
                ci_low: record.ci_low,
                ci_high: record.ci_high,
            });
        }
    }

    ensure_dir(&cfg.out_dir)?;
    eval::write_csv(&predictions, &cfg.out_dir.join("predictions.csv"))?;
    eval::write_csv(&weights, &cfg.out_dir.join("weights.csv"))?;
    eval::write_csv(&gate, &cfg.out_dir.join("gate.csv"))?;
    println!(
        "wrote predictions.csv ({} rows), weights.csv ({} rows), gate.csv ({} rows) to {}",
        predictions.len(),
        weights.len(),
        gate.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

fn cmd_plot(config: Option<&Path>, metrics: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let cfg = match config {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    let out_dir = out.unwrap_or_else(|| cfg.out_dir.clone());
    let metrics_path = metrics.unwrap_or_else(|| cfg.out_dir.join("metrics.csv"));
    require_file(&metrics_path)?;
    let records = eval::read_metrics_csv(&metrics_path)?;
    let aggregates = eval::aggregate(&records);
    let written = plot::plot_aggregates(&aggregates, &out_dir)?;
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

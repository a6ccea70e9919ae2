//! Evaluation metrics, the replicated simulation grid, and the
//! tertile-based GATE check.
//!
//! Metrics are always computed over the full source population, never the
//! trial. Per-replicate seeds are derived from the master seed and the
//! cell coordinates, so grid output is a pure function of its config and
//! independent of execution order or parallelism.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Role;
use crate::dgp::{self, DGPConfig};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::transport::{self, Aim, EstimatorSpec, ModelKind};

/// bias = mean(pred - truth); mse = mean((pred - truth)^2);
/// variance = mse - bias^2 (a definition, not an estimate).
pub fn metrics(predictions: &[f64], truth: &[f64]) -> Result<(f64, f64, f64)> {
    if predictions.is_empty() {
        return Err(Error::InvalidInput("empty metric input".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "metrics predictions vs truth",
            got: predictions.len(),
            expected: truth.len(),
        });
    }
    if predictions.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite metric input".into()));
    }
    let n = predictions.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (p, t) in predictions.iter().zip(truth) {
        let d = p - t;
        sum += d;
        sum_sq += d * d;
    }
    let bias = sum / n;
    let mse = sum_sq / n;
    Ok((mse, bias, mse - bias * bias))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub model: ModelKind,
    pub aim: Aim,
    pub trial_size: usize,
    pub dim_x1: usize,
    pub coef_x2: f64,
    pub replicate: usize,
    pub mse: f64,
    pub bias: f64,
    pub variance: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub trial_sizes: Vec<usize>,
    pub dim_x1_values: Vec<usize>,
    pub coef_x2_values: Vec<f64>,
    pub replicates: usize,
    pub dgp: DGPConfig,
    pub specs: Vec<EstimatorSpec>,
    pub master_seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            trial_sizes: vec![200, 500, 2000, 5000],
            dim_x1_values: vec![2, 3, 5, 10],
            coef_x2_values: vec![0.5, 0.0],
            replicates: 50,
            dgp: DGPConfig::default(),
            specs: default_specs(),
            master_seed: 0,
        }
    }
}

/// The standard eight estimator runs: all four models, both aims.
pub fn default_specs() -> Vec<EstimatorSpec> {
    let mut specs = Vec::new();
    for aim in [Aim::A, Aim::B] {
        for model in ModelKind::ALL {
            specs.push(EstimatorSpec {
                model,
                aim,
                ..Default::default()
            });
        }
    }
    specs
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trial_sizes.is_empty()
            || self.dim_x1_values.is_empty()
            || self.coef_x2_values.is_empty()
            || self.specs.is_empty()
        {
            return Err(Error::InvalidConfig("grid lists must be nonempty".into()));
        }
        if self.replicates < 1 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        self.dgp.validate()?;
        for d in &self.dim_x1_values {
            if *d < 1 || *d > self.dgp.dim_x1all {
                return Err(Error::InvalidConfig(format!(
                    "dim_x1 value {d} out of range 1..={}",
                    self.dgp.dim_x1all
                )));
            }
        }
        for spec in &self.specs {
            spec.validate()?;
        }
        Ok(())
    }
}

fn scenario_id(trial_size: usize, dim_x1: usize, coef_x2: f64) -> String {
    format!("n={trial_size},dim_x1={dim_x1},coef_x2={coef_x2}")
}

/// One replicate of one grid cell: fresh source population and trial,
/// every spec fitted on the same trial, metrics over the full source.
pub fn run_cell(
    dgp_cfg: &DGPConfig,
    trial_size: usize,
    dim_x1: usize,
    specs: &[EstimatorSpec],
    replicate: usize,
    replicate_seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let cfg = DGPConfig {
        seed: derive_seed(replicate_seed, 0),
        ..dgp_cfg.clone()
    };
    let pop = dgp::generate_source(&cfg)?.with_active_x1(dim_x1)?;
    let sample = dgp::select_trial(&pop, trial_size, &cfg, derive_seed(replicate_seed, 1))?;
    let sample = dgp::assign_and_outcome(&sample, &cfg, derive_seed(replicate_seed, 2))?;
    let source = Arc::new(sample.source);
    let trial = sample.trial;

    let x1_queries = source.select_columns(&[Role::X1])?;
    let truth_cate: Vec<f64> = x1_queries
        .rows()
        .map(|r| dgp::true_cate_x1(r, &cfg))
        .collect();
    let truth_ite = source.role_column(Role::TrueIte)?.to_vec();

    // each model kind is fitted once and reused across aims
    let mut fits: Vec<(ModelKind, transport::FittedEstimator)> = Vec::new();
    let mut records = Vec::with_capacity(specs.len());
    for spec in specs {
        let kind = spec.model;
        let model_salt = ModelKind::ALL.iter().position(|&m| m == kind).unwrap() as u64;
        if !fits.iter().any(|(k, _)| *k == kind) {
            let fit_spec = EstimatorSpec {
                forest: crate::forest::ForestConfig {
                    seed: derive_seed(replicate_seed, 10 + model_salt),
                    ..spec.forest.clone()
                },
                ..spec.clone()
            };
            let fitted = transport::fit_estimator(&trial, source.clone(), &fit_spec)?;
            fits.push((kind, fitted));
        }
        let fitted = &fits.iter().find(|(k, _)| *k == kind).unwrap().1;
        let (predictions, truth) = match spec.aim {
            Aim::A => (
                transport::estimate_aim_a(
                    fitted,
                    &x1_queries,
                    derive_seed(replicate_seed, 20 + model_salt),
                )?,
                &truth_cate,
            ),
            Aim::B => (transport::estimate_aim_b(fitted, &source)?, &truth_ite),
        };
        let (mse, bias, variance) = metrics(&predictions, truth)?;
        records.push(MetricsRecord {
            scenario: scenario_id(trial_size, dim_x1, cfg.coef_x2),
            model: kind,
            aim: spec.aim,
            trial_size,
            dim_x1,
            coef_x2: cfg.coef_x2,
            replicate,
            mse,
            bias,
            variance,
            status: "ok".into(),
        });
    }
    Ok(records)
}

fn replicate_seed(master: u64, trial_size: usize, dim_x1: usize, coef_x2: f64, replicate: usize) -> u64 {
    let s = derive_seed(master, trial_size as u64);
    let s = derive_seed(s, dim_x1 as u64);
    let s = derive_seed(s, coef_x2.to_bits());
    derive_seed(s, replicate as u64)
}

/// Full cross-product of cells x replicates. A failed replicate yields one
/// NaN record per spec with the error text in `status`, never a silent
/// drop. Output order and values depend only on the config.
pub fn run_grid(grid: &GridConfig, parallelism: usize) -> Result<Vec<MetricsRecord>> {
    run_grid_with_progress(grid, parallelism, &|_| {})
}

/// run_grid with a per-completed-replicate progress callback (called from
/// worker threads).
pub fn run_grid_with_progress(
    grid: &GridConfig,
    parallelism: usize,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<Vec<MetricsRecord>> {
    grid.validate()?;
    if parallelism < 1 {
        return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
    }
    let mut jobs: Vec<(usize, usize, f64, usize)> = Vec::new();
    for &trial_size in &grid.trial_sizes {
        for &dim_x1 in &grid.dim_x1_values {
            for &coef_x2 in &grid.coef_x2_values {
                for replicate in 0..grid.replicates {
                    jobs.push((trial_size, dim_x1, coef_x2, replicate));
                }
            }
        }
    }
    let run_job = |&(trial_size, dim_x1, coef_x2, replicate): &(usize, usize, f64, usize)| {
        let dgp_cfg = DGPConfig {
            coef_x2,
            ..grid.dgp.clone()
        };
        let seed = replicate_seed(grid.master_seed, trial_size, dim_x1, coef_x2, replicate);
        let out = match run_cell(&dgp_cfg, trial_size, dim_x1, &grid.specs, replicate, seed) {
            Ok(records) => records,
            Err(e) => grid
                .specs
                .iter()
                .map(|spec| MetricsRecord {
                    scenario: scenario_id(trial_size, dim_x1, coef_x2),
                    model: spec.model,
                    aim: spec.aim,
                    trial_size,
                    dim_x1,
                    coef_x2,
                    replicate,
                    mse: f64::NAN,
                    bias: f64::NAN,
                    variance: f64::NAN,
                    status: format!("error: {e}"),
                })
                .collect(),
        };
        progress(&format!(
            "completed {} replicate {}/{}",
            scenario_id(trial_size, dim_x1, coef_x2),
            replicate + 1,
            grid.replicates
        ));
        out
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let nested: Vec<Vec<MetricsRecord>> =
        pool.install(|| jobs.par_iter().map(run_job).collect());
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub scenario: String,
    pub model: ModelKind,
    pub aim: Aim,
    pub trial_size: usize,
    pub dim_x1: usize,
    pub coef_x2: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mse_mean: f64,
    pub mse_se: f64,
    pub bias_mean: f64,
    pub bias_se: f64,
    pub abs_bias_mean: f64,
    pub abs_bias_se: f64,
    pub variance_mean: f64,
    pub variance_se: f64,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-cell x model x aim means and standard errors across successful
/// replicates. Signed bias and |bias| are reported separately.
pub fn aggregate(records: &[MetricsRecord]) -> Vec<AggregateRecord> {
    let mut groups: Vec<(
        (String, ModelKind, Aim, usize, usize, u64),
        Vec<&MetricsRecord>,
    )> = Vec::new();
    for r in records {
        let key = (
            r.scenario.clone(),
            r.model,
            r.aim,
            r.trial_size,
            r.dim_x1,
            r.coef_x2.to_bits(),
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(_, members)| {
            let ok: Vec<&&MetricsRecord> = members.iter().filter(|r| r.status == "ok").collect();
            let first = members[0];
            let collect = |f: fn(&MetricsRecord) -> f64| -> Vec<f64> {
                ok.iter().map(|r| f(r)).collect()
            };
            let (mse_mean, mse_se) = mean_se(&collect(|r| r.mse));
            let (bias_mean, bias_se) = mean_se(&collect(|r| r.bias));
            let (abs_bias_mean, abs_bias_se) = mean_se(&collect(|r| r.bias.abs()));
            let (variance_mean, variance_se) = mean_se(&collect(|r| r.variance));
            AggregateRecord {
                scenario: first.scenario.clone(),
                model: first.model,
                aim: first.aim,
                trial_size: first.trial_size,
                dim_x1: first.dim_x1,
                coef_x2: first.coef_x2,
                n_ok: ok.len(),
                n_failed: members.len() - ok.len(),
                mse_mean,
                mse_se,
                bias_mean,
                bias_se,
                abs_bias_mean,
                abs_bias_se,
                variance_mean,
                variance_se,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub group: String,
    pub n: usize,
    pub effect: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn arm_effect(rows: &[usize], treatment: &[f64], outcome: &[f64], group: &str) -> Result<GateRecord> {
    let mut t = Vec::new();
    let mut c = Vec::new();
    for &i in rows {
        if treatment[i] == 1.0 {
            t.push(outcome[i]);
        } else {
            c.push(outcome[i]);
        }
    }
    if t.len() < 2 || c.len() < 2 {
        return Err(Error::TertileMissingArm(group.into()));
    }
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let (mt, vt, nt) = stats(&t);
    let (mc, vc, nc) = stats(&c);
    let effect = mt - mc;
    let half = 1.96 * (vt / nt + vc / nc).sqrt();
    Ok(GateRecord {
        group: group.into(),
        n: rows.len(),
        effect,
        ci_low: effect - half,
        ci_high: effect + half,
    })
}

/// Tertile GATE: rows ranked by cate_hat (stable in row index), cut into
/// groups of ceil(n/3), ceil(n/3), rest, lowest to highest; per-group
/// effect is the difference of arm means with a Wald 95% CI. The fourth
/// record is the overall ATE by the same formula.
pub fn gate_tertiles(
    cate_hat: &[f64],
    treatment: &[f64],
    outcome: &[f64],
) -> Result<Vec<GateRecord>> {
    let n = cate_hat.len();
    if n < 6 {
        return Err(Error::InvalidInput("need at least 6 rows for tertiles".into()));
    }
    if treatment.len() != n || outcome.len() != n {
        return Err(Error::LengthMismatch {
            context: "gate input lengths",
            got: treatment.len().min(outcome.len()),
            expected: n,
        });
    }
    if treatment.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::InvalidInput("treatment must be 0/1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        cate_hat[a]
            .partial_cmp(&cate_hat[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let first = n.div_ceil(3);
    let second = first.min(n - first);
    let bounds = [0, first, first + second, n];
    let names = ["T1", "T2", "T3"];
    let mut out = Vec::with_capacity(4);
    for g in 0..3 {
        out.push(arm_effect(
            &order[bounds[g]..bounds[g + 1]],
            treatment,
            outcome,
            names[g],
        )?);
    }
    out.push(arm_effect(&order, treatment, outcome, "ATE")?);
    Ok(out)
}

/// Writes records with the documented schema; NaNs serialize as "NaN".
pub fn write_csv<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    for r in records {
        writer.serialize(r).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    reader
        .deserialize()
        .map(|r| {
            r.map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })
        })
        .collect()
}

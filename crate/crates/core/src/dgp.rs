//! Synthetic data generation: source population, trial selection on X2,
//! randomized treatment assignment and outcomes.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};
use crate::logistic::expit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DGPConfig {
    pub n_source: usize,
    pub dim_x1all: usize,
    pub dim_x2: usize,
    pub dim_o: usize,
    pub coef_x1: f64,
    pub coef_x2: f64,
    pub coef_o: f64,
    pub selection_linear: f64,
    pub selection_quadratic: f64,
    pub treat_prob: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DGPConfig {
    fn default() -> Self {
        DGPConfig {
            n_source: 100_000,
            dim_x1all: 20,
            dim_x2: 10,
            dim_o: 20,
            coef_x1: 1.0,
            coef_x2: 0.5,
            coef_o: 0.3,
            selection_linear: 1.0,
            selection_quadratic: 0.2,
            treat_prob: 0.5,
            noise_sd: 1.0,
            seed: 0,
        }
    }
}

impl DGPConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_source < 1 || self.dim_x1all < 1 || self.dim_x2 < 1 || self.dim_o < 1 {
            return Err(Error::InvalidConfig(
                "n_source and all dimensions must be >= 1".into(),
            ));
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return Err(Error::InvalidConfig("treat_prob must lie in (0,1)".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidConfig("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// Full synthetic source population. `active_x1` records how many leading
/// x1all columns form the observed X1 subset; the rest stay role-less so no
/// estimator can see them.
#[derive(Debug, Clone)]
pub struct SourcePopulation {
    pub data: Dataset,
    pub active_x1: usize,
    pub config: DGPConfig,
}

pub fn x1all_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x1all_{j}")).collect()
}

pub fn x2_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x2_{j}")).collect()
}

pub fn o_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("o_{j}")).collect()
}

fn roles_for(config: &DGPConfig, active_x1: usize) -> BTreeMap<Role, Vec<String>> {
    let mut roles = BTreeMap::new();
    roles.insert(Role::X1, x1all_names(config.dim_x1all)[..active_x1].to_vec());
    roles.insert(Role::X2, x2_names(config.dim_x2));
    roles.insert(Role::O, o_names(config.dim_o));
    roles.insert(Role::TrueIte, vec!["true_ite".to_string()]);
    roles
}

impl SourcePopulation {
    /// Re-tag the observed X1 subset as the first `k` x1all columns.
    pub fn with_active_x1(&self, k: usize) -> Result<SourcePopulation> {
        if k < 1 || k > self.config.dim_x1all {
            return Err(Error::InvalidConfig(format!(
                "active X1 size {k} out of range 1..={}",
                self.config.dim_x1all
            )));
        }
        Ok(SourcePopulation {
            data: self.data.with_roles(roles_for(&self.config, k))?,
            active_x1: k,
            config: self.config.clone(),
        })
    }
}

/// ITE = coef_x1 * sum(x1all) + coef_x2 * sum(x2) + coef_o * sum(o).
pub fn true_ite(x1all: &[f64], x2: &[f64], o: &[f64], config: &DGPConfig) -> Result<f64> {
    for (got, expected, context) in [
        (x1all.len(), config.dim_x1all, "x1all length"),
        (x2.len(), config.dim_x2, "x2 length"),
        (o.len(), config.dim_o, "o length"),
    ] {
        if got != expected {
            return Err(Error::LengthMismatch {
                context,
                got,
                expected,
            });
        }
    }
    Ok(config.coef_x1 * x1all.iter().sum::<f64>()
        + config.coef_x2 * x2.iter().sum::<f64>()
        + config.coef_o * o.iter().sum::<f64>())
}

/// CATE(x1) = coef_x1 * sum(x1): the non-X1 blocks are independent with
/// mean zero and integrate out of the ITE.
pub fn true_cate_x1(x1: &[f64], config: &DGPConfig) -> f64 {
    config.coef_x1 * x1.iter().sum::<f64>()
}

/// Draws every covariate entry i.i.d. standard normal (row-major: x1all,
/// then x2, then o within each row) and computes the true ITE column.
/// Bit-identical output for identical config.
pub fn generate_source(config: &DGPConfig) -> Result<SourcePopulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_source;
    let p = config.dim_x1all + config.dim_x2 + config.dim_o;
    let mut columns: Vec<Vec<f64>> = (0..p + 1).map(|_| Vec::with_capacity(n)).collect();
    for _ in 0..n {
        let mut row_sum_ite = 0.0;
        for j in 0..config.dim_x1all {
            let v: f64 = StandardNormal.sample(&mut rng);
            columns[j].push(v);
            row_sum_ite += config.coef_x1 * v;
        }
        for j in 0..config.dim_x2 {
            let v: f64 = StandardNormal.sample(&mut rng);
            columns[config.dim_x1all + j].push(v);
            row_sum_ite += config.coef_x2 * v;
        }
        for j in 0..config.dim_o {
            let v: f64 = StandardNormal.sample(&mut rng);
            columns[config.dim_x1all + config.dim_x2 + j].push(v);
            row_sum_ite += config.coef_o * v;
        }
        columns[p].push(row_sum_ite);
    }
    let mut names = x1all_names(config.dim_x1all);
    names.extend(x2_names(config.dim_x2));
    names.extend(o_names(config.dim_o));
    names.push("true_ite".to_string());
    let data = Dataset::new(names, columns, roles_for(config, config.dim_x1all))?;
    Ok(SourcePopulation {
        data,
        active_x1: config.dim_x1all,
        config: config.clone(),
    })
}

/// Source population plus a realized trial: `source` carries the selection
/// column, `trial` is the selected-row view (gains A and Y after
/// `assign_and_outcome`).
#[derive(Debug, Clone)]
pub struct TrialSample {
    pub source: Dataset,
    pub trial: Dataset,
    pub trial_indices: Vec<usize>,
    pub mu: f64,
    pub target_n: usize,
}

fn row_sums(data: &Dataset, names: &[String]) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; data.n_rows()];
    for name in names {
        for (s, v) in sums.iter_mut().zip(data.column(name)?) {
            *s += v;
        }
    }
    Ok(sums)
}

/// Per-row inclusion probabilities min(mu * e_i, 1) with mu calibrated by
/// bisection so the expected count hits `target_n` within 0.5 rows.
/// The base score e_i depends on X2 only.
pub fn inclusion_probabilities(
    source: &SourcePopulation,
    target_n: usize,
    config: &DGPConfig,
) -> Result<(Vec<f64>, f64)> {
    let n = source.data.n_rows();
    if target_n > n {
        return Err(Error::InvalidInput(format!(
            "target_n {target_n} exceeds source size {n}"
        )));
    }
    let x2_sum = row_sums(&source.data, &x2_names(config.dim_x2))?;
    let x2_sq_sum = {
        let mut sums = vec![0.0; n];
        for name in x2_names(config.dim_x2) {
            for (s, v) in sums.iter_mut().zip(source.data.column(&name)?) {
                *s += v * v;
            }
        }
        sums
    };
    let scores: Vec<f64> = x2_sum
        .iter()
        .zip(&x2_sq_sum)
        .map(|(&l, &q)| expit(config.selection_linear * l + config.selection_quadratic * q))
        .collect();
    let expected = |mu: f64| -> f64 { scores.iter().map(|&e| (mu * e).min(1.0)).sum() };
    let target = target_n as f64;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while expected(hi) < target {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::CalibrationFailed(
                "expected count never reaches target (degenerate scores)".into(),
            ));
        }
    }
    let mut mu = hi;
    let mut converged = false;
    for _ in 0..200 {
        mu = 0.5 * (lo + hi);
        let e = expected(mu);
        if (e - target).abs() <= 0.5 {
            converged = true;
            break;
        }
        if e < target {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    if !converged {
        return Err(Error::CalibrationFailed(
            "bisection exhausted 200 iterations".into(),
        ));
    }
    Ok((scores.iter().map(|&e| (mu * e).min(1.0)).collect(), mu))
}

/// Independent Bernoulli inclusion with retry until the realized count lands
/// within +/-5% of `target_n` (up to 50 attempts; closest draw wins).
pub fn select_trial(
    source: &SourcePopulation,
    target_n: usize,
    config: &DGPConfig,
    seed: u64,
) -> Result<TrialSample> {
    let (probs, mu) = inclusion_probabilities(source, target_n, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tolerance = (0.05 * target_n as f64).floor() as i64;
    let mut best: Option<(i64, Vec<usize>)> = None;
    for _ in 0..50 {
        let selected: Vec<usize> = probs
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| {
                let u: f64 = rng.gen();
                (u < p).then_some(i)
            })
            .collect();
        let diff = (selected.len() as i64 - target_n as i64).abs();
        let better = best.as_ref().is_none_or(|(d, _)| diff < *d);
        if better {
            best = Some((diff, selected));
        }
        if best.as_ref().unwrap().0 <= tolerance {
            break;
        }
    }
    let (_, trial_indices) = best.unwrap();
    let mut s_col = vec![0.0; source.data.n_rows()];
    for &i in &trial_indices {
        s_col[i] = 1.0;
    }
    let source_with_s = source.data.with_column("s", s_col, Some(Role::Selection))?;
    let trial = source.data.filter_rows(&trial_indices);
    Ok(TrialSample {
        source: source_with_s,
        trial,
        trial_indices,
        mu,
        target_n,
    })
}

/// Randomizes A ~ Bernoulli(treat_prob) per trial row and draws
/// Y = sum(x1all) + sum(x2) + sum(o) + A * ITE + noise_sd * z.
/// Per row, A is drawn before z.
pub fn assign_and_outcome(trial: &TrialSample, config: &DGPConfig, seed: u64) -> Result<TrialSample> {
    let n = trial.trial.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = {
        let mut all = row_sums(&trial.trial, &x1all_names(config.dim_x1all))?;
        let x2 = row_sums(&trial.trial, &x2_names(config.dim_x2))?;
        let o = row_sums(&trial.trial, &o_names(config.dim_o))?;
        for ((a, b), c) in all.iter_mut().zip(x2).zip(o) {
            *a += b + c;
        }
        all
    };
    let ite = trial.trial.role_column(Role::TrueIte)?.to_vec();
    let mut a_col = Vec::with_capacity(n);
    let mut y_col = Vec::with_capacity(n);
    for i in 0..n {
        let a = if rng.gen::<f64>() < config.treat_prob {
            1.0
        } else {
            0.0
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        a_col.push(a);
        y_col.push(base[i] + a * ite[i] + config.noise_sd * z);
    }
    let with_a = trial.trial.with_column("a", a_col, Some(Role::Treatment))?;
    let with_y = with_a.with_column("y", y_col, Some(Role::Outcome))?;
    Ok(TrialSample {
        source: trial.source.clone(),
        trial: with_y,
        trial_indices: trial.trial_indices.clone(),
        mu: trial.mu,
        target_n: trial.target_n,
    })
}

//! Trial-participation model: logistic regression fit by iteratively
//! reweighted least squares, plus inverse-probability weight construction
//! and overlap diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Logistic function 1 / (1 + exp(-x)).
#[inline]
pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable ln(1 + exp(x)).
#[inline]
fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub const PROB_CLAMP: f64 = 1e-12;

/// Fitted participation model P(S=1 | features). Coefficients hold the
/// intercept first, then one slope per feature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionModel {
    pub coefficients: Vec<f64>,
    pub n_features: usize,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub ridge_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticOptions {
    pub ridge: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            ridge: 0.0,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// Weight post-processing knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    pub normalize_mean_one: bool,
    pub trim_upper_quantile: Option<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            normalize_mean_one: true,
            trim_upper_quantile: None,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.trim_upper_quantile {
            if !(q > 0.5 && q <= 1.0) {
                return Err(Error::InvalidConfig(
                    "trim_upper_quantile must lie in (0.5, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Gaussian elimination with partial pivoting; `a` is square row-major.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())?;
        if a[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row * n + k] * x[k];
        }
        x[row] = s / a[row * n + row];
    }
    Some(x)
}

struct IrlsState {
    beta: Vec<f64>,
    iterations: usize,
    converged: bool,
    log_likelihood: f64,
}

fn penalized_loglik(features: &Matrix, labels: &[f64], beta: &[f64], ridge: f64) -> f64 {
    let mut ll = 0.0;
    for (i, row) in features.rows().enumerate() {
        let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>();
        ll += labels[i] * eta - log1p_exp(eta);
    }
    ll - 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

fn irls(features: &Matrix, labels: &[f64], opts: &LogisticOptions) -> Result<IrlsState> {
    let n = features.n_rows();
    let p = features.n_cols() + 1; // intercept
    let mut beta = vec![0.0; p];
    let mut ll = penalized_loglik(features, labels, &beta, opts.ridge);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        // score and Hessian at the current beta
        let mut score = vec![0.0; p];
        let mut hess = vec![0.0; p * p];
        for (i, row) in features.rows().enumerate() {
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(x, b)| x * b).sum::<f64>();
            let prob = expit(eta);
            let r = labels[i] - prob;
            let w = prob * (1.0 - prob);
            score[0] += r;
            hess[0] += w;
            for j in 0..p - 1 {
                score[j + 1] += r * row[j];
                hess[j + 1] += w * row[j];
                hess[(j + 1) * p] += w * row[j];
                for k in 0..=j {
                    hess[(j + 1) * p + k + 1] += w * row[j] * row[k];
                }
            }
        }
        // mirror the lower triangle, add the (intercept-free) ridge term
        for j in 1..p {
            score[j] -= opts.ridge * beta[j];
            hess[j * p + j] += opts.ridge;
            for k in j + 1..p {
                hess[j * p + k] = hess[k * p + j];
            }
        }
        // upper triangle of row 0 from column 0
        for k in 1..p {
            hess[k] = hess[k * p];
        }
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_score < opts.tol {
            converged = true;
            break;
        }
        let delta = solve_linear(hess, score.clone())
            .ok_or_else(|| Error::InvalidInput("singular information matrix".into()))?;
        // Newton step with halving when the objective regresses
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(&delta)
                .map(|(b, d)| b + step * d)
                .collect();
            let cand_ll = penalized_loglik(features, labels, &cand, opts.ridge);
            // slack scaled to |ll|: the likelihood is a large sum, so its
            // rounding noise is far above absolute 1e-12
            if cand_ll >= ll - 1e-9 * (1.0 + ll.abs()) {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let _ = n;
    }
    Ok(IrlsState {
        beta,
        iterations,
        converged,
        log_likelihood: ll,
    })
}

/// Maximizes the (optionally ridge-penalized, intercept unpenalized)
/// binomial log-likelihood. On detected separation (coefficients past
/// magnitude 30) or non-convergence at ridge 0, refits once with
/// ridge = 1e-4 and flags it.
pub fn fit_logistic(
    features: &Matrix,
    labels: &[f64],
    opts: &LogisticOptions,
) -> Result<SelectionModel> {
    if labels.len() != features.n_rows() {
        return Err(Error::LengthMismatch {
            context: "labels vs feature rows",
            got: labels.len(),
            expected: features.n_rows(),
        });
    }
    if labels.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("labels must be 0/1".into()));
    }
    if let Some(&first) = labels.first() {
        if labels.iter().all(|&v| v == first) {
            return Err(Error::ConstantLabels(first));
        }
    } else {
        return Err(Error::InvalidInput("empty label vector".into()));
    }
    for j in 0..features.n_cols() {
        let first = features.get(0, j);
        if (0..features.n_rows()).all(|i| features.get(i, j) == first) {
            return Err(Error::InvalidInput(format!(
                "feature column {j} is constant (duplicates the intercept)"
            )));
        }
    }

    let state = irls(features, labels, opts)?;
    let separated = state.beta.iter().any(|b| b.abs() > 30.0);
    if (separated || !state.converged) && opts.ridge == 0.0 {
        let fallback = LogisticOptions {
            ridge: 1e-4,
            ..opts.clone()
        };
        let state = irls(features, labels, &fallback)?;
        if !state.converged {
            return Err(Error::NoConvergence(fallback.max_iter));
        }
        return Ok(SelectionModel {
            coefficients: state.beta,
            n_features: features.n_cols(),
            converged: true,
            iterations: state.iterations,
            log_likelihood: state.log_likelihood,
            ridge_fallback: true,
        });
    }
    if !state.converged {
        return Err(Error::NoConvergence(opts.max_iter));
    }
    Ok(SelectionModel {
        coefficients: state.beta,
        n_features: features.n_cols(),
        converged: true,
        iterations: state.iterations,
        log_likelihood: state.log_likelihood,
        ridge_fallback: false,
    })
}

impl SelectionModel {
    /// expit(intercept + slopes . x), clamped away from 0 and 1.
    pub fn participation_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::LengthMismatch {
                context: "participation features",
                got: x.len(),
                expected: self.n_features,
            });
        }
        let eta = self.coefficients[0]
            + x.iter()
                .zip(&self.coefficients[1..])
                .map(|(v, b)| v * b)
                .sum::<f64>();
        Ok(expit(eta).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
    }
}

/// Nearest-rank quantile of a sample: sorted[ceil(q*n) - 1].
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((q * sorted.len() as f64).ceil() as usize)
        .saturating_sub(1)
        .min(sorted.len() - 1);
    sorted[idx]
}

/// Horvitz-Thompson weights 1/p for trial rows, with optional quantile
/// trimming and mean-one normalization.
pub fn ipw_weights(
    model: &SelectionModel,
    trial_features: &Matrix,
    cfg: &WeightConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut weights: Vec<f64> = trial_features
        .rows()
        .map(|row| model.participation_prob(row).map(|p| 1.0 / p))
        .collect::<Result<_>>()?;
    if let Some(q) = cfg.trim_upper_quantile {
        let cap = quantile(&weights, q);
        for w in &mut weights {
            *w = w.min(cap);
        }
    }
    if cfg.normalize_mean_one && !weights.is_empty() {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        for w in &mut weights {
            *w /= mean;
        }
    }
    Ok(weights)
}

/// Positivity diagnostic over the source population.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapReport {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub count_below_floor: usize,
}

pub const OVERLAP_FLOOR: f64 = 1e-4;

pub fn overlap_diagnostics(model: &SelectionModel, source_features: &Matrix) -> Result<OverlapReport> {
    let mut probs: Vec<f64> = source_features
        .rows()
        .map(|row| model.participation_prob(row))
        .collect::<Result<_>>()?;
    probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = probs.len();
    let median = if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        probs[n / 2]
    } else {
        0.5 * (probs[n / 2 - 1] + probs[n / 2])
    };
    Ok(OverlapReport {
        min: probs.first().copied().unwrap_or(f64::NAN),
        median,
        max: probs.last().copied().unwrap_or(f64::NAN),
        count_below_floor: probs.iter().filter(|&&p| p < OVERLAP_FLOOR).count(),
    })
}

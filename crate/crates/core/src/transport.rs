//! The four estimators: M1/M2 fit a causal forest on unweighted trial rows
//! using X1 only (M1) or X1 and X2 (M2); M1_IPW/M2_IPW first fit the
//! trial-participation model on the source population and reweight trial
//! rows by inverse participation probability. Aim B predicts at (x1, x2);
//! Aim A predicts CATE(x1), integrating M2-family predictions over the
//! conditional distribution of x2 given x1 (g-formula Monte Carlo).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};
use crate::forest::{self, CausalForestModel, ForestConfig};
use crate::logistic::{fit_logistic, ipw_weights, LogisticOptions, SelectionModel, WeightConfig};
use crate::matrix::Matrix;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    M1,
    M2,
    #[serde(rename = "M1_IPW")]
    M1Ipw,
    #[serde(rename = "M2_IPW")]
    M2Ipw,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::M1, ModelKind::M2, ModelKind::M1Ipw, ModelKind::M2Ipw];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::M1 => "M1",
            ModelKind::M2 => "M2",
            ModelKind::M1Ipw => "M1_IPW",
            ModelKind::M2Ipw => "M2_IPW",
        }
    }

    /// Whether the forest sees X2 columns in addition to X1.
    pub fn uses_x2(self) -> bool {
        matches!(self, ModelKind::M2 | ModelKind::M2Ipw)
    }

    pub fn is_ipw(self) -> bool {
        matches!(self, ModelKind::M1Ipw | ModelKind::M2Ipw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aim {
    A,
    B,
}

impl Aim {
    pub fn name(self) -> &'static str {
        match self {
            Aim::A => "A",
            Aim::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalSampler {
    IndependentMarginal,
    Knn,
}

/// Feature set of the participation model. X2 only by default; X1 and X2
/// available for sensitivity runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFeatures {
    X2,
    X1X2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSpec {
    pub model: ModelKind,
    pub aim: Aim,
    pub forest: ForestConfig,
    pub weight_cfg: WeightConfig,
    pub weight_features: WeightFeatures,
    pub mc_draws: usize,
    /// Integrate over every source x2 row instead of sampling.
    pub mc_exhaustive: bool,
    pub knn_k: usize,
    pub sampler: ConditionalSampler,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        EstimatorSpec {
            model: ModelKind::M1,
            aim: Aim::A,
            forest: ForestConfig::default(),
            weight_cfg: WeightConfig::default(),
            weight_features: WeightFeatures::X2,
            mc_draws: 200,
            mc_exhaustive: false,
            knn_k: 50,
            sampler: ConditionalSampler::IndependentMarginal,
        }
    }
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<()> {
        self.forest.validate()?;
        self.weight_cfg.validate()?;
        if self.mc_draws < 1 {
            return Err(Error::InvalidConfig("mc_draws must be >= 1".into()));
        }
        if self.knn_k < 1 {
            return Err(Error::InvalidConfig("knn_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn feature_roles(&self) -> Vec<Role> {
        if self.model.uses_x2() {
            vec![Role::X1, Role::X2]
        } else {
            vec![Role::X1]
        }
    }

    pub fn weight_roles(&self) -> Vec<Role> {
        match self.weight_features {
            WeightFeatures::X2 => vec![Role::X2],
            WeightFeatures::X1X2 => vec![Role::X1, Role::X2],
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedEstimator {
    pub spec: EstimatorSpec,
    pub forest: CausalForestModel,
    /// Present iff the model is IPW-flavored.
    pub selection: Option<SelectionModel>,
    /// Trial weights actually used in the forest fit.
    pub weights: Vec<f64>,
    pub feature_roles: Vec<Role>,
    /// Source population covariates for g-formula integration.
    pub source: Arc<Dataset>,
}

/// Fits the participation model (IPW models only) and the causal forest.
/// The source dataset must carry a selection column (1 = trial row) when
/// the spec is IPW-flavored.
pub fn fit_estimator(
    trial: &Dataset,
    source: Arc<Dataset>,
    spec: &EstimatorSpec,
) -> Result<FittedEstimator> {
    spec.validate()?;
    let feature_roles = spec.feature_roles();
    let features = trial.select_columns(&feature_roles)?;
    let treatment = trial.role_column(Role::Treatment)?.to_vec();
    let outcome = trial.role_column(Role::Outcome)?.to_vec();

    let (selection, weights) = if spec.model.is_ipw() {
        let labels = source.role_column(Role::Selection)?.to_vec();
        let weight_roles = spec.weight_roles();
        let source_features = source.select_columns(&weight_roles)?;
        let model = fit_logistic(&source_features, &labels, &LogisticOptions::default())?;
        let trial_features = trial.select_columns(&weight_roles)?;
        let weights = ipw_weights(&model, &trial_features, &spec.weight_cfg)?;
        (Some(model), weights)
    } else {
        (None, vec![1.0; trial.n_rows()])
    };

    let forest = forest::fit(&features, &treatment, &outcome, &weights, &spec.forest)?;
    Ok(FittedEstimator {
        spec: spec.clone(),
        forest,
        selection,
        weights,
        feature_roles,
        source,
    })
}

/// CATE(x1, x2) — or CATE(x1) for M1-family models, which never saw X2.
pub fn estimate_aim_b(fitted: &FittedEstimator, query: &Dataset) -> Result<Vec<f64>> {
    let features = query.select_columns(&fitted.feature_roles)?;
    fitted.forest.predict(&features)
}

/// Draws m x2 rows uniformly with replacement from the source.
pub fn sample_x2_independent(source: &Dataset, m: usize, seed: u64) -> Result<Matrix> {
    let x2 = source.select_columns(&[Role::X2])?;
    if x2.n_rows() == 0 {
        return Err(Error::InvalidInput("empty source".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| x2.row(rng.gen_range(0..x2.n_rows())).to_vec())
        .collect();
    Matrix::from_rows(&rows)
}

/// Draws m x2 rows from the k source rows nearest to `x1_query` in
/// standardized X1 space (Euclidean distance, ties broken by row index).
/// Constant X1 columns standardize to 0.
pub fn sample_x2_knn(
    source: &Dataset,
    x1_query: &[f64],
    k: usize,
    m: usize,
    seed: u64,
) -> Result<Matrix> {
    let x1 = source.select_columns(&[Role::X1])?;
    let x2 = source.select_columns(&[Role::X2])?;
    let n = x1.n_rows();
    if k > n {
        return Err(Error::InvalidInput(format!(
            "knn_k {k} exceeds source size {n}"
        )));
    }
    if x1_query.len() != x1.n_cols() {
        return Err(Error::LengthMismatch {
            context: "KNN query length vs X1 columns",
            got: x1_query.len(),
            expected: x1.n_cols(),
        });
    }
    let p = x1.n_cols();
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x1.get(i, j)).collect();
        let mu = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
        mean[j] = mu;
        sd[j] = var.sqrt();
    }
    let standardize = |v: f64, j: usize| {
        if sd[j] > 0.0 {
            (v - mean[j]) / sd[j]
        } else {
            0.0
        }
    };
    let q: Vec<f64> = x1_query
        .iter()
        .enumerate()
        .map(|(j, &v)| standardize(v, j))
        .collect();
    let mut dist: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let d: f64 = (0..p)
                .map(|j| {
                    let z = standardize(x1.get(i, j), j) - q[j];
                    z * z
                })
                .sum();
            (d, i)
        })
        .collect();
    dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let neighbors: Vec<usize> = dist[..k].iter().map(|&(_, i)| i).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| x2.row(neighbors[rng.gen_range(0..k)]).to_vec())
        .collect();
    Matrix::from_rows(&rows)
}

/// g-formula Monte Carlo integration of an arbitrary tau(x1, x2) predictor
/// over the conditional distribution of x2 given x1. Query i draws with
/// seed derive_seed(seed, i), so results are parallelism-independent.
pub fn integrate_aim_a<F>(
    predictor: F,
    source: &Dataset,
    x1_queries: &Matrix,
    spec: &EstimatorSpec,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let source_x2 = source.select_columns(&[Role::X2])?;
    if source_x2.n_rows() == 0 {
        return Err(Error::InvalidInput("empty source".into()));
    }
    (0..x1_queries.n_rows())
        .into_par_iter()
        .map(|i| {
            let x1 = x1_queries.row(i);
            let draws = if spec.mc_exhaustive {
                source_x2.clone()
            } else {
                let qseed = derive_seed(seed, i as u64);
                match spec.sampler {
                    ConditionalSampler::IndependentMarginal => {
                        sample_x2_independent(source, spec.mc_draws, qseed)?
                    }
                    ConditionalSampler::Knn => {
                        sample_x2_knn(source, x1, spec.knn_k, spec.mc_draws, qseed)?
                    }
                }
            };
            let total: f64 = draws
                .rows()
                .map(|x2| predictor(&Matrix::concat_row(x1, x2)))
                .sum();
            Ok(total / draws.n_rows() as f64)
        })
        .collect()
}

/// CATE(x1): direct forest prediction for M1-family models; Monte Carlo
/// g-formula integration over x2 for M2-family models.
pub fn estimate_aim_a(
    fitted: &FittedEstimator,
    x1_queries: &Matrix,
    seed: u64,
) -> Result<Vec<f64>> {
    if !fitted.spec.model.uses_x2() {
        return fitted.forest.predict(x1_queries);
    }
    let expected = fitted.forest.n_features
        - fitted.source.role_columns(Role::X2).len();
    if x1_queries.n_cols() != expected {
        return Err(Error::LengthMismatch {
            context: "Aim-A query columns vs X1 size",
            got: x1_queries.n_cols(),
            expected,
        });
    }
    integrate_aim_a(
        |row| fitted.forest.predict_row(row),
        &fitted.source,
        x1_queries,
        &fitted.spec,
        seed,
    )
}

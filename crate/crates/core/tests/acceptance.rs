//! Acceptance gate. Each criterion prints one PASS/FAIL line (run with
//! `--nocapture` to see them live). Criterion 1 is the reduced benchmark
//! grid and takes over an hour on a single core.

use std::sync::Arc;

use cate::data::Role;
use cate::dgp::{self, DGPConfig};
use cate::eval::{self, AggregateRecord, GridConfig};
use cate::forest::{self, ForestConfig};
use cate::logistic::{fit_logistic, ipw_weights, LogisticOptions, SelectionModel, WeightConfig};
use cate::matrix::Matrix;
use cate::seed::derive_seed;
use cate::transport::{self, Aim, EstimatorSpec, ModelKind};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Gate {
    criterion: &'static str,
    failures: Vec<String>,
}

impl Gate {
    fn new(criterion: &'static str) -> Self {
        Gate {
            criterion,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, item: &str, ok: bool, detail: String) {
        println!(
            "ACCEPTANCE {}{}: {} ({})",
            self.criterion,
            item,
            if ok { "PASS" } else { "FAIL" },
            detail
        );
        if !ok {
            self.failures.push(format!("{}{}: {}", self.criterion, item, detail));
        }
    }

    fn finish(self) {
        println!(
            "ACCEPTANCE CRITERION {}: {}",
            self.criterion,
            if self.failures.is_empty() { "PASS" } else { "FAIL" }
        );
        assert!(self.failures.is_empty(), "{:?}", self.failures);
    }
}

// ---------------------------------------------------------------- criterion 1

fn bench_specs() -> Vec<EstimatorSpec> {
    let mut specs = Vec::new();
    for aim in [Aim::A, Aim::B] {
        for model in ModelKind::ALL {
            specs.push(EstimatorSpec {
                model,
                aim,
                forest: ForestConfig {
                    num_trees: 300,
                    ..Default::default()
                },
                mc_draws: 30,
                ..Default::default()
            });
        }
    }
    specs
}

fn bench_grid(coef_x2: f64, trial_sizes: Vec<usize>) -> GridConfig {
    GridConfig {
        trial_sizes,
        dim_x1_values: vec![2, 5],
        coef_x2_values: vec![coef_x2],
        replicates: 20,
        dgp: DGPConfig {
            n_source: 20_000,
            ..Default::default()
        },
        specs: bench_specs(),
        master_seed: 2024,
    }
}

fn lookup<'a>(
    aggs: &'a [AggregateRecord],
    model: ModelKind,
    aim: Aim,
    trial_size: usize,
    dim_x1: usize,
) -> &'a AggregateRecord {
    aggs.iter()
        .find(|r| {
            r.model == model && r.aim == aim && r.trial_size == trial_size && r.dim_x1 == dim_x1
        })
        .unwrap_or_else(|| panic!("missing aggregate {model:?} {aim:?} n={trial_size} d={dim_x1}"))
}

#[test]
fn criterion_1_benchmark_orderings() {
    let mut gate = Gate::new("1");
    let progress = |line: &str| eprintln!("[bench] {line}");
    let main = eval::run_grid_with_progress(&bench_grid(0.5, vec![200, 500, 2000]), 1, &progress)
        .unwrap();
    let null = eval::run_grid_with_progress(&bench_grid(0.0, vec![2000]), 1, &progress).unwrap();
    assert!(main.iter().all(|r| r.status == "ok"), "failed replicates in main grid");
    assert!(null.iter().all(|r| r.status == "ok"), "failed replicates in null grid");
    let main_agg = eval::aggregate(&main);
    let null_agg = eval::aggregate(&null);

    // (a) M1 has the largest mean |bias| at n = 2000 for both dim_x1
    for aim_item in [(Aim::A, "a"), (Aim::B, "f.bias")] {
        let (aim, item) = aim_item;
        for dim in [2, 5] {
            let m1 = lookup(&main_agg, ModelKind::M1, aim, 2000, dim).abs_bias_mean;
            let others: Vec<f64> = [ModelKind::M2, ModelKind::M1Ipw, ModelKind::M2Ipw]
                .into_iter()
                .map(|m| lookup(&main_agg, m, aim, 2000, dim).abs_bias_mean)
                .collect();
            let ok = others.iter().all(|&o| m1 > o);
            gate.check(
                item,
                ok,
                format!("dim={dim}: |bias| M1={m1:.4} vs others={others:.4?}"),
            );
        }
    }

    // (b) IPW cuts bias: < 1.0x for both dim_x1, < 0.6x for at least one
    for aim_item in [(Aim::A, "b"), (Aim::B, "f.ipw")] {
        let (aim, item) = aim_item;
        let mut strong = false;
        let mut weak = true;
        let mut detail = String::new();
        for dim in [2, 5] {
            let m1 = lookup(&main_agg, ModelKind::M1, aim, 2000, dim).abs_bias_mean;
            let m1_ipw = lookup(&main_agg, ModelKind::M1Ipw, aim, 2000, dim).abs_bias_mean;
            let m2 = lookup(&main_agg, ModelKind::M2, aim, 2000, dim).abs_bias_mean;
            let m2_ipw = lookup(&main_agg, ModelKind::M2Ipw, aim, 2000, dim).abs_bias_mean;
            weak &= m1_ipw < m1 && m2_ipw < m2;
            strong |= m1_ipw < 0.6 * m1 && m2_ipw < 0.6 * m2;
            detail.push_str(&format!(
                "dim={dim}: M1_IPW/M1={:.3} M2_IPW/M2={:.3}; ",
                m1_ipw / m1,
                m2_ipw / m2
            ));
        }
        gate.check(item, weak && strong, detail);
    }

    // (c) dim_x1 = 5: variance(M2-family) > variance(M1-family) at every size
    for aim_item in [(Aim::A, "c"), (Aim::B, "f.variance")] {
        let (aim, item) = aim_item;
        let mut ok = true;
        let mut detail = String::new();
        for size in [200, 500, 2000] {
            let v1 = lookup(&main_agg, ModelKind::M1, aim, size, 5).variance_mean;
            let v2 = lookup(&main_agg, ModelKind::M2, aim, size, 5).variance_mean;
            let v1i = lookup(&main_agg, ModelKind::M1Ipw, aim, size, 5).variance_mean;
            let v2i = lookup(&main_agg, ModelKind::M2Ipw, aim, size, 5).variance_mean;
            ok &= v2 > v1 && v2i > v1i;
            detail.push_str(&format!("n={size}: {v2:.2}>{v1:.2},{v2i:.2}>{v1i:.2}; "));
        }
        gate.check(item, ok, detail);
    }

    // (d) dim_x1 = 5: MSE(M1_IPW) <= MSE(M2) at 500 and 2000 (Aim A)
    {
        let mut ok = true;
        let mut detail = String::new();
        for size in [500, 2000] {
            let a = lookup(&main_agg, ModelKind::M1Ipw, Aim::A, size, 5).mse_mean;
            let b = lookup(&main_agg, ModelKind::M2, Aim::A, size, 5).mse_mean;
            ok &= a <= b;
            detail.push_str(&format!("n={size}: {a:.3}<={b:.3}; "));
        }
        gate.check("d", ok, detail);
    }

    // (e) null scenario: every model unbiased at n = 2000; variances match
    // the main scenario within 25%
    {
        let mut ok = true;
        let mut detail = String::new();
        for dim in [2, 5] {
            for model in ModelKind::ALL {
                let b = lookup(&null_agg, model, Aim::A, 2000, dim).abs_bias_mean;
                ok &= b < 0.1;
                let vn = lookup(&null_agg, model, Aim::A, 2000, dim).variance_mean;
                let vm = lookup(&main_agg, model, Aim::A, 2000, dim).variance_mean;
                let rel = (vn - vm).abs() / vm;
                ok &= rel <= 0.25;
                detail.push_str(&format!("{} d={dim}: |b|={b:.3} relvar={rel:.2}; ", model.name()));
            }
        }
        gate.check("e", ok, detail);
    }

    gate.finish();
}

// ---------------------------------------------------------------- criterion 2

fn two_group_data(n: usize, noise_sd: f64, seed: u64) -> (Matrix, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Vec::with_capacity(n);
    let mut noise_col = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let gi = (i % 2) as f64;
        let ai = f64::from(rng.gen::<f64>() < 0.5);
        let tau = if gi == 1.0 { 1.0 } else { -1.0 };
        let e: f64 = StandardNormal.sample(&mut rng);
        g.push(gi);
        noise_col.push(StandardNormal.sample(&mut rng));
        a.push(ai);
        y.push(ai * tau + noise_sd * e);
    }
    let m = Matrix::from_columns(&[g.as_slice(), noise_col.as_slice()]).unwrap();
    (m, a, y, vec![1.0; n])
}

fn small_population(seed: u64) -> (cate::data::Dataset, Arc<cate::data::Dataset>) {
    let cfg = DGPConfig {
        n_source: 2000,
        dim_x1all: 4,
        dim_x2: 3,
        dim_o: 2,
        seed,
        ..Default::default()
    };
    let pop = dgp::generate_source(&cfg).unwrap().with_active_x1(2).unwrap();
    let sample = dgp::select_trial(&pop, 250, &cfg, derive_seed(seed, 1)).unwrap();
    let sample = dgp::assign_and_outcome(&sample, &cfg, derive_seed(seed, 2)).unwrap();
    (sample.trial, Arc::new(sample.source))
}

#[test]
fn criterion_2_oracle_equivalence() {
    let mut gate = Gate::new("2");

    // logistic-regression likelihood grid oracle
    {
        let n = 600;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<f64> = x
            .iter()
            .map(|&xi| f64::from(rng.gen::<f64>() < 1.0 / (1.0 + f64::exp(-(0.4 + 0.9 * xi)))))
            .collect();
        let m = Matrix::from_columns(&[x.as_slice()]).unwrap();
        let fit = fit_logistic(&m, &labels, &LogisticOptions::default()).unwrap();
        let ll = |b0: f64, b1: f64| -> f64 {
            x.iter()
                .zip(&labels)
                .map(|(&xi, &s)| {
                    let eta = b0 + b1 * xi;
                    s * eta - if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() }
                })
                .sum()
        };
        let fit_ll = ll(fit.coefficients[0], fit.coefficients[1]);
        let mut best_grid = f64::MIN;
        for i in 0..=200 {
            for j in 0..=200 {
                let b0 = -5.0 + 0.05 * i as f64;
                let b1 = -5.0 + 0.05 * j as f64;
                best_grid = best_grid.max(ll(b0, b1));
            }
        }
        gate.check(
            " grid-oracle",
            fit_ll >= best_grid,
            format!("IRLS ll={fit_ll:.6} grid best={best_grid:.6}"),
        );
    }

    // exhaustive g-formula identity: Aim-A exhaustive output equals the
    // row-mean of the Aim-B prediction matrix over all source x2 rows
    {
        let (trial, source) = small_population(11);
        let spec = EstimatorSpec {
            model: ModelKind::M2,
            mc_exhaustive: true,
            forest: ForestConfig {
                num_trees: 40,
                seed: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let fitted = transport::fit_estimator(&trial, source.clone(), &spec).unwrap();
        let queries = Matrix::from_rows(&[vec![0.2, -0.4], vec![1.0, 0.7]]).unwrap();
        let aim_a = transport::estimate_aim_a(&fitted, &queries, 0).unwrap();
        let x2 = source.select_columns(&[Role::X2]).unwrap();
        let mut ok = true;
        for (q, &got) in queries.rows().zip(&aim_a) {
            let exact = x2
                .rows()
                .map(|r| fitted.forest.predict_row(&Matrix::concat_row(q, r)))
                .sum::<f64>()
                / x2.n_rows() as f64;
            ok &= got == exact;
        }
        gate.check(" g-formula", ok, "exhaustive Aim A == mean of Aim B over source x2".into());
    }

    // KNN brute-force neighbor oracle on a 300-row source
    {
        let cfg = DGPConfig {
            n_source: 300,
            dim_x1all: 3,
            dim_x2: 2,
            dim_o: 1,
            seed: 21,
            ..Default::default()
        };
        let pop = dgp::generate_source(&cfg).unwrap().with_active_x1(2).unwrap();
        let x1 = pop.data.select_columns(&[Role::X1]).unwrap();
        let x2 = pop.data.select_columns(&[Role::X2]).unwrap();
        let n = x1.n_rows();
        let p = x1.n_cols();
        let (mut mean, mut sd) = (vec![0.0; p], vec![0.0; p]);
        for j in 0..p {
            let col = x1.column(j);
            mean[j] = col.iter().sum::<f64>() / n as f64;
            sd[j] = (col.iter().map(|v| (v - mean[j]) * (v - mean[j])).sum::<f64>() / n as f64)
                .sqrt();
        }
        let query = [0.3, -0.1];
        let k = 7;
        let mut d: Vec<(f64, usize)> = (0..n)
            .map(|i| {
                let dd: f64 = (0..p)
                    .map(|j| {
                        let z = (x1.get(i, j) - mean[j]) / sd[j] - (query[j] - mean[j]) / sd[j];
                        z * z
                    })
                    .sum();
                (dd, i)
            })
            .collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let oracle: Vec<usize> = d[..k].iter().map(|&(_, i)| i).collect();
        let draws = transport::sample_x2_knn(&pop.data, &query, k, 3000, 9).unwrap();
        let ok = draws
            .rows()
            .all(|r| oracle.iter().any(|&i| x2.row(i) == r));
        gate.check(" knn-oracle", ok, format!("all draws from brute-force top-{k}"));
    }

    // metrics recomputation oracle
    {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pred: Vec<f64> = (0..1000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let truth: Vec<f64> = (0..1000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (mse, bias, var) = eval::metrics(&pred, &truth).unwrap();
        let n = pred.len() as f64;
        let b2 = pred.iter().zip(&truth).map(|(p, t)| p - t).sum::<f64>() / n;
        let m2 = pred.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        let ok = (mse - m2).abs() < 1e-12
            && (bias - b2).abs() < 1e-12
            && (var - (m2 - b2 * b2)).abs() < 1e-10;
        gate.check(" metrics-oracle", ok, format!("mse={mse:.6} bias={bias:.6}"));
    }

    // leave-one-out cross-fit oracle on 10 rows
    {
        let (m, a, y, w) = two_group_data(10, 0.3, 41);
        let cfg = ForestConfig {
            num_trees: 10,
            min_leaf_treated: 1,
            min_leaf_control: 1,
            seed: 43,
            ..Default::default()
        };
        let preds = forest::predict_crossfit(&m, &a, &y, &w, &cfg, 10).unwrap();
        let fold_of = forest::crossfit_folds(10, 10, cfg.seed);
        let mut ok = true;
        for i in 0..10 {
            let train: Vec<usize> = (0..10).filter(|&j| j != i).collect();
            let sub = m.take_rows(&train);
            let sa: Vec<f64> = train.iter().map(|&j| a[j]).collect();
            let sy: Vec<f64> = train.iter().map(|&j| y[j]).collect();
            let sw: Vec<f64> = train.iter().map(|&j| w[j]).collect();
            let refit = forest::fit(
                &sub,
                &sa,
                &sy,
                &sw,
                &ForestConfig {
                    seed: derive_seed(cfg.seed, fold_of[i] as u64 + 1),
                    ..cfg.clone()
                },
            )
            .unwrap();
            ok &= preds[i] == refit.predict_row(m.row(i));
        }
        gate.check(" loo-crossfit", ok, "cross-fit equals explicit LOO refits".into());
    }

    gate.finish();
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_invariants() {
    let mut gate = Gate::new("3");

    // forest weight-scale invariance, bit-identical
    {
        let (m, a, y, _) = two_group_data(512, 0.5, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..512).map(|_| (1 + rng.next_u64() % 8) as f64).collect();
        let w17: Vec<f64> = w.iter().map(|v| v * 17.0).collect();
        let cfg = ForestConfig {
            num_trees: 50,
            seed: 21,
            ..Default::default()
        };
        let p1 = forest::fit(&m, &a, &y, &w, &cfg).unwrap().predict(&m).unwrap();
        let p2 = forest::fit(&m, &a, &y, &w17, &cfg).unwrap().predict(&m).unwrap();
        let ok = p1.iter().zip(&p2).all(|(x, y)| x.to_bits() == y.to_bits());
        gate.check(" weight-scale", ok, "x17 weights give bit-identical predictions".into());
    }

    // honesty: permuting est-half outcomes/treatments moves no threshold
    {
        let (m, a, y, w) = two_group_data(300, 1.0, 37);
        let cfg = ForestConfig {
            num_trees: 1,
            seed: 53,
            ..Default::default()
        };
        let f1 = forest::fit(&m, &a, &y, &w, &cfg).unwrap();
        let est: Vec<usize> = f1.trees[0].est_indices.iter().map(|&i| i as usize).collect();
        let mut y2 = y.clone();
        let mut a2 = a.clone();
        for (k, &i) in est.iter().enumerate() {
            let j = est[est.len() - 1 - k];
            y2[i] = y[j];
            a2[i] = a[j];
        }
        let f2 = forest::fit(&m, &a2, &y2, &w, &cfg).unwrap();
        let ok = f1.trees[0].splits() == f2.trees[0].splits();
        gate.check(" honesty", ok, "est-half permutation leaves splits unchanged".into());
    }

    // leaf both-arm positivity over all trees
    {
        let (m, a, y, w) = two_group_data(800, 1.0, 17);
        let model = forest::fit(
            &m,
            &a,
            &y,
            &w,
            &ForestConfig {
                num_trees: 100,
                seed: 23,
                ..Default::default()
            },
        )
        .unwrap();
        let ok = model.trees.iter().all(|t| {
            t.leaves()
                .all(|l| l.sum_w_treated > 0.0 && l.sum_w_control > 0.0 && l.tau().is_finite())
        });
        gate.check(" leaf-positivity", ok, "every leaf holds both arms".into());
    }

    // variance = mse - bias^2 identity on real run_cell output
    {
        let dgp_cfg = DGPConfig {
            n_source: 1500,
            dim_x1all: 4,
            dim_x2: 3,
            dim_o: 2,
            ..Default::default()
        };
        let spec = EstimatorSpec {
            model: ModelKind::M1Ipw,
            aim: Aim::A,
            forest: ForestConfig {
                num_trees: 20,
                ..Default::default()
            },
            ..Default::default()
        };
        let records = eval::run_cell(&dgp_cfg, 150, 2, &[spec], 0, 3).unwrap();
        let r = &records[0];
        let ok = (r.variance - (r.mse - r.bias * r.bias)).abs() < 1e-10;
        gate.check(" variance-identity", ok, format!("residual {:.2e}", r.variance - (r.mse - r.bias * r.bias)));
    }

    // role discipline: M1 output invariant to X2 perturbation
    {
        let (trial, source) = small_population(7);
        let spec = EstimatorSpec {
            model: ModelKind::M1,
            forest: ForestConfig {
                num_trees: 25,
                seed: 5,
                ..Default::default()
            },
            ..Default::default()
        };
        let fitted = transport::fit_estimator(&trial, source, &spec).unwrap();
        let preds = transport::estimate_aim_b(&fitted, &trial).unwrap();
        let x2_name = trial.role_columns(Role::X2)[0].clone();
        let mut shuffled = trial.column(&x2_name).unwrap().to_vec();
        shuffled.reverse();
        let perturbed = trial.replace_column(&x2_name, shuffled).unwrap();
        let preds2 = transport::estimate_aim_b(&fitted, &perturbed).unwrap();
        gate.check(" role-discipline", preds == preds2, "M1 ignores X2".into());
    }

    // run_grid determinism under parallelism 1 and 8
    {
        let grid = GridConfig {
            trial_sizes: vec![120],
            dim_x1_values: vec![2],
            coef_x2_values: vec![0.5],
            replicates: 3,
            dgp: DGPConfig {
                n_source: 1000,
                dim_x1all: 4,
                dim_x2: 3,
                dim_o: 2,
                ..Default::default()
            },
            specs: vec![
                EstimatorSpec {
                    model: ModelKind::M2Ipw,
                    aim: Aim::A,
                    forest: ForestConfig {
                        num_trees: 10,
                        ..Default::default()
                    },
                    mc_draws: 8,
                    ..Default::default()
                },
            ],
            master_seed: 77,
        };
        let r1 = eval::run_grid(&grid, 1).unwrap();
        let r8 = eval::run_grid(&grid, 8).unwrap();
        gate.check(" parallelism", r1 == r8, "identical records at parallelism 1 and 8".into());
    }

    // normalized IPW weights have mean one
    {
        let model = SelectionModel {
            coefficients: vec![-1.5, 0.8, -0.3],
            n_features: 2,
            converged: true,
            iterations: 1,
            log_likelihood: 0.0,
            ridge_fallback: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let w = ipw_weights(&model, &m, &WeightConfig::default()).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        gate.check(
            " weights-mean-one",
            (mean - 1.0).abs() < 1e-12,
            format!("mean = {mean}"),
        );
    }

    gate.finish();
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_gate_suite() {
    let mut gate = Gate::new("4");

    // monotone tertile ordering on a strong-modifier DGP, n = 5000
    {
        let n = 5000;
        let mut monotone = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut x = Vec::with_capacity(n);
            let mut a = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let ai = f64::from(rng.gen::<f64>() < 0.5);
                let e: f64 = StandardNormal.sample(&mut rng);
                x.push(xi);
                a.push(ai);
                y.push(ai * 2.0 * xi + e);
            }
            let m = Matrix::from_columns(&[x.as_slice()]).unwrap();
            let cfg = ForestConfig {
                num_trees: 50,
                seed: derive_seed(500, seed),
                ..Default::default()
            };
            let cate_hat =
                forest::predict_crossfit(&m, &a, &y, &vec![1.0; n], &cfg, 2).unwrap();
            let records = eval::gate_tertiles(&cate_hat, &a, &y).unwrap();
            if records[0].effect < records[2].effect {
                monotone += 1;
            }
        }
        gate.check(
            " monotone",
            monotone >= 18,
            format!("lowest < highest tertile in {monotone}/20 seeds"),
        );
    }

    // homogeneous effect: three group effects within 2 CI half-widths
    {
        let n = 3000;
        let tau0 = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut a = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut cate_hat = Vec::with_capacity(n);
        for _ in 0..n {
            let ai = f64::from(rng.gen::<f64>() < 0.5);
            let e: f64 = StandardNormal.sample(&mut rng);
            a.push(ai);
            y.push(ai * tau0 + 0.5 * e);
            cate_hat.push(rng.gen_range(-1.0..1.0)); // no real heterogeneity
        }
        let records = eval::gate_tertiles(&cate_hat, &a, &y).unwrap();
        let half = records[..3]
            .iter()
            .map(|r| (r.ci_high - r.ci_low) / 2.0)
            .fold(0.0f64, f64::max);
        let mut ok = true;
        for i in 0..3 {
            for j in i + 1..3 {
                ok &= (records[i].effect - records[j].effect).abs() <= 2.0 * half;
            }
        }
        gate.check(
            " homogeneous",
            ok,
            format!(
                "effects {:.3?} within 2x half-width {half:.3}",
                records[..3].iter().map(|r| r.effect).collect::<Vec<_>>()
            ),
        );
    }

    gate.finish();
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_consistency_smoke() {
    let mut gate = Gate::new("5");
    let mut errs_small = Vec::new();
    let mut errs_large = Vec::new();
    for seed in 0..5u64 {
        let max_err = |n: usize| -> f64 {
            let (m, a, y, w) = two_group_data(n, 1.0, 1000 + seed);
            let cfg = ForestConfig {
                num_trees: 200,
                seed: derive_seed(7, seed),
                ..Default::default()
            };
            let model = forest::fit(&m, &a, &y, &w, &cfg).unwrap();
            let q = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
            let p = model.predict(&q).unwrap();
            (p[0] - (-1.0)).abs().max((p[1] - 1.0).abs())
        };
        errs_small.push(max_err(500));
        errs_large.push(max_err(4000));
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let m_small = median(&mut errs_small);
    let m_large = median(&mut errs_large);
    gate.check(
        "",
        m_large < m_small,
        format!("median max-error n=4000: {m_large:.4} < n=500: {m_small:.4}"),
    );
    gate.finish();
}

//! Pass/fail checks shared by the `verify` command and the acceptance suite.
//! Each check compares an implementation against an independent oracle at a
//! fixed tolerance; sizes are parameters so `verify` can run quick versions.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use tmc_core::estimators::{tmc_enumerate_discrete, EstimatorKind};
use tmc_core::factorgraph::{FactorGraph, VariableKind};
use tmc_core::gradients::{
    finite_difference, grad_objective, objective_value, surrogate_value, GradEstimatorKind, ObjectiveKind,
};
use tmc_core::logtensor::{logmmexp, AxisId, LogTensor};
use tmc_core::models::{DiscreteModel, HierarchicalGaussian, ModelSpec, ProposalSpec};
use tmc_core::rng::{cell, draw_noise};

use crate::config::{ExperimentConfig, MethodGrid, ModelConfig, ModelFamily};
use crate::cost::run_cost_benchmark;
use crate::error::HarnessError;
use crate::record::EstimateRecord;
use crate::sweep::{run_estimator, run_experiment, setup};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {} ({}) [{:.2}s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &str, f: impl FnOnce() -> Result<(bool, String), HarnessError>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.to_owned(),
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

/// A deliberate defect for checking that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Adds `ln 2` to every entry of the first factor handed to elimination,
    /// as if its normalisation were off by a factor of two.
    MisnormalisedFactor,
}

/// Stratified-enumeration TMC against exhaustive summation on random discrete models.
pub fn discrete_exactness(models: usize, max_latents: usize, max_support: usize, seed: u64) -> CheckResult {
    timed("discrete-exactness", || {
        let mut worst = 0.0f64;
        for i in 0..models as u64 {
            let m = DiscreteModel::random(seed.wrapping_mul(1_000_003).wrapping_add(i), max_latents, max_support);
            let err = (tmc_enumerate_discrete(&m)? - m.exact_log_evidence()).abs();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
        Ok((worst < 1e-10, format!("{models} models, max error {worst:.2e}, tolerance 1e-10")))
    })
}

/// Cardinalities and factors of a graph; axis `i` has cardinality `cards[i]`.
pub struct RandomGraph {
    pub cards: Vec<usize>,
    pub factors: Vec<LogTensor>,
}

impl RandomGraph {
    fn build(&self, fault: Fault) -> Result<FactorGraph, HarnessError> {
        let mut g = FactorGraph::new();
        for (i, &c) in self.cards.iter().enumerate() {
            g.add_variable(AxisId(i as u32), c, VariableKind::SampleIndex)?;
        }
        for (f, t) in self.factors.iter().enumerate() {
            let t = match fault {
                Fault::MisnormalisedFactor if f == 0 => t.map(|v| v + std::f64::consts::LN_2).map_err(tmc_core::factorgraph::GraphError::from)?,
                _ => t.clone(),
            };
            g.add_factor(t)?;
        }
        Ok(g)
    }

    fn tensor(rng: &mut impl Rng, scope: &[u32], cards: &[usize]) -> LogTensor {
        let axes: Vec<(AxisId, usize)> = scope.iter().map(|&a| (AxisId(a), cards[a as usize])).collect();
        let n: usize = axes.iter().map(|a| a.1).product();
        let data = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        LogTensor::new(axes, data).expect("distinct axes with positive sizes")
    }

    /// Up to six variables of cardinality at most four and up to six factors
    /// over one to three variables each.
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(1..=6);
        let cards: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
        let mut ids: Vec<u32> = (0..n as u32).collect();
        let factors = (0..rng.random_range(1..=6))
            .map(|_| {
                ids.shuffle(rng);
                let size = rng.random_range(1..=3.min(n));
                Self::tensor(rng, &ids[..size], &cards)
            })
            .collect();
        Self { cards, factors }
    }

    /// The four-variable loop `f(k1,k2) f(k1,k3) f(k2,k4) f(k3,k4)` with a
    /// prior factor on `k1`, at random cardinalities.
    pub fn loopy(rng: &mut impl Rng) -> Self {
        let cards: Vec<usize> = (0..4).map(|_| rng.random_range(2..=4)).collect();
        let factors = [&[0u32][..], &[0, 1], &[0, 2], &[1, 3], &[2, 3]]
            .iter()
            .map(|s| Self::tensor(rng, s, &cards))
            .collect();
        Self { cards, factors }
    }
}

/// Greedy-order elimination against enumeration of every index combination.
/// The first graph is the loopy topology.
pub fn brute_force_equivalence(graphs: usize, seed: u64, fault: Fault) -> CheckResult {
    timed("brute-force", || {
        let mut worst = 0.0f64;
        for i in 0..graphs as u64 {
            let mut rng = cell(seed, 1, i);
            let rg = if i == 0 { RandomGraph::loopy(&mut rng) } else { RandomGraph::random(&mut rng) };
            let g = rg.build(fault)?;
            let got = g.evaluate(&g.greedy_order())?;
            let err = (got - crate::oracle::enumerate_factors(&rg.cards, &rg.factors)).abs();
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
        Ok((
            worst < 1e-10,
            format!("{graphs} graphs including the loopy topology, max error {worst:.2e}, tolerance 1e-10"),
        ))
    })
}

/// `E[exp(estimate)] = exp(log-evidence)` on the hierarchical model with three
/// data points: the sample mean of the ratio must lie within `sigmas`
/// standard errors of one.
pub fn unbiasedness(method: EstimatorKind, k: usize, seeds: usize, base_seed: u64, sigmas: f64) -> CheckResult {
    timed(&format!("unbiasedness-{method}"), || {
        let model = ModelSpec::Hierarchical(HierarchicalGaussian::simulate(3, 0)?);
        let truth = model.exact_log_evidence()?;
        let (net, proposal) = setup(&model, method)?;
        let ratios = (0..seeds as u64)
            .into_par_iter()
            .map(|s| run_estimator(&net, &proposal, method, k, base_seed.wrapping_add(s)).map(|e| (e - truth).exp()))
            .collect::<Result<Vec<f64>, _>>()?;
        let (mean, se) = mean_and_se(&ratios);
        let z = (mean - 1.0) / se;
        Ok((
            z.abs() < sigmas,
            format!("K={k}, {seeds} seeds, mean ratio {mean:.5}, SE {se:.5}, z = {z:.2}, limit {sigmas} SE"),
        ))
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Largest absolute and relative discrepancies seen.
#[derive(Debug, Default)]
struct Worst {
    abs: f64,
    rel: f64,
}

impl Worst {
    fn record(&mut self, a: f64, b: f64) {
        let d = (a - b).abs();
        self.abs = self.abs.max(d);
        self.rel = self.rel.max(d / a.abs().max(b.abs()).max(f64::MIN_POSITIVE));
    }
}

impl std::fmt::Display for Worst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "worst absolute error {:.2e}, worst relative error {:.2e}", self.abs, self.rel)
    }
}

fn grad_close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() < abs || (a - b).abs() < rel * a.abs().max(b.abs())
}

/// A hierarchical model with `n` random data points and random offsets, and
/// a random factorised proposal.
fn random_instance(rng: &mut impl Rng, n: usize) -> Result<(tmc_core::models::GaussianNet, ProposalSpec), HarnessError> {
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let base = HierarchicalGaussian::new(data)?.net();
    let offsets: Vec<f64> = (0..=n).map(|_| rng.random_range(-0.5..0.5)).collect();
    let net = base.with_offsets(&offsets)?;
    let params: Vec<(f64, f64)> = (0..=n).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5))).collect();
    Ok((net, ProposalSpec::factorised(&params)?))
}

/// Tape gradients against central differences (step 1e-5, common random
/// numbers) for every estimator on IWAE and TMC objectives, hierarchical N=2,
/// K ≤ 4.
pub fn gradient_finite_differences(settings: usize, seed: u64) -> CheckResult {
    timed("fd-gradients", || {
        const H: f64 = 1e-5;
        let (rel, abs) = (1e-5, 1e-8);
        let mut worst = Worst::default();
        let mut failures = 0;
        let mut compared = 0;
        for s in 0..settings as u64 {
            let mut rng = cell(seed, 2, s);
            let (net, q) = random_instance(&mut rng, 2)?;
            let sample_seed = seed.wrapping_add(s);
            let objectives = [
                ObjectiveKind::Iwae { k: rng.random_range(1..=4) },
                ObjectiveKind::Tmc {
                    k: (0..3).map(|_| rng.random_range(1..=4)).collect(),
                },
            ];
            for objective in &objectives {
                let fd_gen = finite_difference(
                    |b| objective_value(&net.with_offsets(b).unwrap(), &q, objective, sample_seed).unwrap_or(f64::NAN),
                    &net.offsets(),
                    H,
                )?;
                for kind in GradEstimatorKind::ALL {
                    let r = grad_objective(&net, &q, objective, kind, sample_seed)?;
                    let fd_rec = finite_difference(
                        |p| {
                            surrogate_value(&net, &q.with_params(p).unwrap(), &q, objective, kind, sample_seed)
                                .unwrap_or(f64::NAN)
                        },
                        &q.params(),
                        H,
                    )?;
                    let pairs = r.recognition.iter().zip(&fd_rec).chain(r.generative.iter().zip(&fd_gen));
                    for (a, b) in pairs {
                        compared += 1;
                        if !grad_close(*a, *b, rel, abs) {
                            failures += 1;
                        }
                        worst.record(*a, *b);
                    }
                }
            }
        }
        Ok((
            failures == 0,
            format!(
                "{settings} settings, {compared} partials, {failures} outside tolerance, {worst}, tolerance 1e-5 relative or 1e-8 absolute"
            ),
        ))
    })
}

/// The DReGs surrogate's gradient against the explicit sum
/// `Σ_i w̃_i² ∂ log w_i / ∂z_i · ∂z_i / ∂φ` on random IWAE instances.
pub fn dregs_direct(instances: usize, k: usize, seed: u64) -> CheckResult {
    timed("dregs-direct", || {
        let mut worst = Worst::default();
        let mut failures = 0;
        for s in 0..instances as u64 {
            let mut rng = cell(seed, 3, s);
            let n = rng.random_range(1..=4);
            let (net, q) = random_instance(&mut rng, n)?;
            let sample_seed = seed.wrapping_add(s);
            let r = grad_objective(&net, &q, &ObjectiveKind::Iwae { k }, GradEstimatorKind::Dregs, sample_seed)?;
            let eps = draw_noise(&vec![k; n + 1], sample_seed);
            let tuples: Vec<Vec<usize>> = (0..k).map(|i| vec![i; n + 1]).collect();
            let d = crate::oracle::direct_gradients(&net, &q, &eps, &tuples, GradEstimatorKind::Dregs);
            for (a, b) in r.recognition.iter().zip(&d.recognition) {
                if !grad_close(*a, *b, 1e-6, 1e-12) {
                    failures += 1;
                }
                worst.record(*a, *b);
            }
        }
        Ok((
            failures == 0,
            format!("{instances} instances, K={k}, {failures} mismatches, {worst}, tolerance 1e-6 relative"),
        ))
    })
}

/// Log-domain matrix products of operands offset by ±700 and ±1000 against
/// the value obtained by factoring the offsets out by hand; the same product
/// taken in the exp domain must overflow or underflow.
pub fn logmmexp_stability() -> CheckResult {
    timed("logmmexp-stability", || {
        let row_offsets = [700.0, -700.0, 1000.0, -1000.0];
        let col_offsets = [1000.0, -700.0, 700.0, -1000.0, 0.0];
        let nj = 3;
        // Small parts on a fixed grid so the true product is easy to state.
        let u = |i: usize, j: usize| 0.3 * i as f64 - 0.2 * j as f64;
        let v = |j: usize, k: usize| 0.1 * (j * k) as f64 - 0.4;
        let x = LogTensor::from_fn(vec![(AxisId(0), 4), (AxisId(1), nj)], |ix| row_offsets[ix[0]] + u(ix[0], ix[1]))
            .map_err(tmc_core::factorgraph::GraphError::from)?;
        let y = LogTensor::from_fn(vec![(AxisId(1), nj), (AxisId(2), 5)], |ix| col_offsets[ix[1]] + v(ix[0], ix[1]))
            .map_err(tmc_core::factorgraph::GraphError::from)?;
        let z = logmmexp(&x, &y, AxisId(1)).map_err(tmc_core::factorgraph::GraphError::from)?;

        let mut worst = 0.0f64;
        let mut all_finite = true;
        let mut naive_broken = 0;
        for (i, &a) in row_offsets.iter().enumerate() {
            for (k, &b) in col_offsets.iter().enumerate() {
                let small: f64 = (0..nj).map(|j| (u(i, j) + v(j, k)).exp()).sum();
                let want = a + b + small.ln();
                let got = z.get(&[i, k]);
                all_finite &= got.is_finite();
                worst = worst.max((got - want).abs() / want.abs().max(1.0));
                let naive: f64 = (0..nj).map(|j| x.get(&[i, j]).exp() * y.get(&[j, k]).exp()).sum::<f64>().ln();
                if !naive.is_finite() || (naive - want).abs() > 1e-6 * want.abs().max(1.0) {
                    naive_broken += 1;
                }
            }
        }
        Ok((
            all_finite && worst < 1e-9 && naive_broken > 0,
            format!(
                "20 entries, all finite: {all_finite}, worst relative error {worst:.2e}, tolerance 1e-9; exp-domain product wrong or non-finite on {naive_broken} entries"
            ),
        ))
    })
}

/// Mean `|estimate - truth|` and its standard error per (method, K).
pub fn gap_table(records: &[EstimateRecord]) -> Vec<(String, usize, f64, f64)> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(m, k)| {
            let gaps: Vec<f64> = records
                .iter()
                .filter(|r| r.method == m && r.k == k)
                .map(|r| (r.estimate - r.ground_truth).abs())
                .collect();
            let (mean, se) = mean_and_se(&gaps);
            (m, k, mean, se)
        })
        .collect()
}

fn experiment(family: ModelFamily, n: usize, methods: &[(EstimatorKind, &[usize])], seeds: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "check".into(),
        model: ModelConfig {
            family,
            n,
            data_seed: 0,
            observation: None,
        },
        methods: methods
            .iter()
            .map(|&(method, ks)| MethodGrid { method, ks: ks.to_vec() })
            .collect(),
        seeds,
        base_seed: 0,
    }
}

fn lookup(table: &[(String, usize, f64, f64)], method: EstimatorKind, k: usize) -> (f64, f64) {
    table
        .iter()
        .find(|r| r.0 == method.name() && r.1 == k)
        .map(|r| (r.2, r.3))
        .expect("every grid point was run")
}

/// Hierarchical model with many data points: at every K the mean TMC gap to
/// the true log-evidence is below the SMC gap plus two standard errors of the
/// difference, and below a fifth of the IWAE gap.
pub fn hierarchical_gap_ordering(n: usize, ks: &[usize], seeds: usize, base_seed: u64) -> CheckResult {
    timed("hierarchical-gap-ordering", || {
        let methods = [(EstimatorKind::Tmc, ks), (EstimatorKind::Smc, ks), (EstimatorKind::Iwae, ks)];
        let records = run_experiment(&experiment(ModelFamily::Hierarchical, n, &methods, seeds), Some(base_seed))?;
        let table = gap_table(&records);
        let mut ok = true;
        let mut parts = Vec::new();
        for &k in ks {
            let (t, t_se) = lookup(&table, EstimatorKind::Tmc, k);
            let (s, s_se) = lookup(&table, EstimatorKind::Smc, k);
            let (i, _) = lookup(&table, EstimatorKind::Iwae, k);
            let se = (t_se * t_se + s_se * s_se).sqrt();
            ok &= t < s + 2.0 * se && t < 0.2 * i;
            parts.push(format!("K={k}: tmc {t:.3}, smc {s:.3} (2SE {:.3}), iwae {i:.3}", 2.0 * se));
        }
        Ok((ok, format!("N={n}, {seeds} seeds; {}", parts.join("; "))))
    })
}

/// Per-data-point TMC estimate within `tol` nats of the true per-point
/// log-evidence, averaged over seeds, for each data-set size.
pub fn per_datapoint_bound(ns: &[usize], k: usize, seeds: usize, base_seed: u64, tol: f64) -> CheckResult {
    timed("per-datapoint-bound", || {
        let mut ok = true;
        let mut parts = Vec::new();
        for &n in ns {
            let records = run_experiment(
                &experiment(ModelFamily::Hierarchical, n, &[(EstimatorKind::Tmc, &[k])], seeds),
                Some(base_seed),
            )?;
            let mean = records.iter().map(|r| r.estimate).sum::<f64>() / records.len() as f64;
            let gap = (mean - records[0].ground_truth).abs() / n as f64;
            ok &= gap < tol;
            parts.push(format!("N={n}: {gap:.4}"));
        }
        Ok((ok, format!("K={k}, {seeds} seeds, nats per point {}; tolerance {tol}", parts.join(", "))))
    })
}

/// Chain model: the mean non-factorised TMC estimate exceeds the mean
/// factorised one at every K, and neither mean exceeds the truth by more
/// than two standard errors.
pub fn nonfactorised_advantage(n: usize, ks: &[usize], seeds: usize, base_seed: u64) -> CheckResult {
    timed("nonfactorised-advantage", || {
        let methods = [(EstimatorKind::Tmc, ks), (EstimatorKind::TmcNonFactorised, ks)];
        let records = run_experiment(&experiment(ModelFamily::Chain, n, &methods, seeds), Some(base_seed))?;
        let truth = records[0].ground_truth;
        let stats = |m: EstimatorKind, k: usize| {
            let v: Vec<f64> = records
                .iter()
                .filter(|r| r.method == m.name() && r.k == k)
                .map(|r| r.estimate)
                .collect();
            mean_and_se(&v)
        };
        let mut ok = true;
        let mut parts = Vec::new();
        for &k in ks {
            let (f, f_se) = stats(EstimatorKind::Tmc, k);
            let (c, c_se) = stats(EstimatorKind::TmcNonFactorised, k);
            ok &= c > f && f <= truth + 2.0 * f_se && c <= truth + 2.0 * c_se;
            parts.push(format!("K={k}: factorised {f:.3} ± {f_se:.3}, non-factorised {c:.3} ± {c_se:.3}"));
        }
        Ok((ok, format!("N={n}, truth {truth:.3}, {seeds} seeds; {}", parts.join("; "))))
    })
}

/// Median time ratios `t(2K) / t(K)` of the layered-network benchmark all below `limit`.
pub fn linear_cost(widths: &[usize], ks: &[usize], reps: usize, hidden: usize, limit: f64) -> CheckResult {
    timed("linear-cost", || {
        let mut grid: Vec<usize> = ks.iter().flat_map(|&k| [k, 2 * k]).collect();
        grid.sort_unstable();
        grid.dedup();
        let times = run_cost_benchmark(widths, &grid, reps, hidden, 0)?;
        let t = |k: usize| times.iter().find(|r| r.k == k).expect("timed").elapsed_ns as f64;
        let ratios: Vec<f64> = ks.iter().map(|&k| t(2 * k) / t(k)).collect();
        let parts: Vec<String> = ks.iter().zip(&ratios).map(|(k, r)| format!("t({})/t({k}) = {r:.2}", 2 * k)).collect();
        Ok((
            ratios.iter().all(|&r| r < limit),
            format!("{} layers, {}; limit {limit}", widths.len(), parts.join(", ")),
        ))
    })
}

/// The quick checks run by `verify`, in order, keyed by name.
pub const VERIFY_CHECKS: [&str; 8] = [
    "discrete-exactness",
    "brute-force",
    "unbiasedness-iwae",
    "unbiasedness-tmc",
    "unbiasedness-smc",
    "fd-gradients",
    "dregs-direct",
    "logmmexp-stability",
];

/// Runs every quick check whose name contains `filter`.
pub fn verify_suite(filter: Option<&str>, seed: u64, fault: Fault) -> Vec<CheckResult> {
    VERIFY_CHECKS
        .iter()
        .filter(|name| filter.is_none_or(|f| name.contains(f)))
        .map(|&name| match name {
            "discrete-exactness" => discrete_exactness(100, 4, 4, seed),
            "brute-force" => brute_force_equivalence(100, seed, fault),
            "unbiasedness-iwae" => unbiasedness(EstimatorKind::Iwae, 10, 20_000, seed.wrapping_mul(1 << 20), 4.0),
            "unbiasedness-tmc" => unbiasedness(EstimatorKind::Tmc, 2, 20_000, seed.wrapping_mul(1 << 20), 4.0),
            "unbiasedness-smc" => unbiasedness(EstimatorKind::Smc, 64, 20_000, seed.wrapping_mul(1 << 20), 4.0),
            "fd-gradients" => gradient_finite_differences(5, seed),
            "dregs-direct" => dregs_direct(10, 5, seed),
            "logmmexp-stability" => logmmexp_stability(),
            _ => unreachable!("every listed check is dispatched"),
        })
        .collect()
}

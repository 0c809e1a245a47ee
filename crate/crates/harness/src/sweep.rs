//! Estimator sweeps over (method, K, seed) grids.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use tmc_core::estimators::{
    estimate_iwae, estimate_smc, estimate_tmc, estimate_tmc_nonfactorised, estimate_vae, EstimatorKind,
};
use tmc_core::factorgraph::build_directed_factors;
use tmc_core::models::{sample_latents, GaussianNet, ModelError, ModelSpec, ProposalSpec};

use crate::config::{ExperimentConfig, SweepConfig};
use crate::error::HarnessError;
use crate::record::{write_csv, EstimateRecord};

/// The network an estimator runs on and the proposal it uses: the model's
/// factorised proposal, except that SMC proposes from the prior (bootstrap)
/// and non-factorised TMC from the prior conditionals.
pub fn setup(model: &ModelSpec, method: EstimatorKind) -> Result<(GaussianNet, ProposalSpec), HarnessError> {
    let (net, factorised) = match model {
        ModelSpec::Hierarchical(m) => (m.net(), m.proposal()),
        ModelSpec::Chain(m) => (m.net(), m.factorised_proposal()),
        ModelSpec::Discrete(_) => return Err(ModelError::Empty("continuous latent").into()),
    };
    let proposal = match method {
        EstimatorKind::Smc | EstimatorKind::TmcNonFactorised => net.prior_proposal(),
        _ => factorised,
    };
    Ok((net, proposal))
}

/// One estimate of `method` with `k` samples (per latent for TMC).
pub fn run_estimator(
    net: &GaussianNet,
    proposal: &ProposalSpec,
    method: EstimatorKind,
    k: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let per_latent = vec![k; proposal.len()];
    Ok(match method {
        EstimatorKind::Vae => estimate_vae(net, proposal, seed)?,
        EstimatorKind::Iwae => estimate_iwae(net, proposal, k, seed)?,
        EstimatorKind::Tmc => estimate_tmc(net, proposal, &per_latent, seed)?,
        EstimatorKind::TmcNonFactorised => estimate_tmc_nonfactorised(net, proposal, &per_latent, seed)?,
        EstimatorKind::Smc => estimate_smc(net, proposal, k, seed)?,
    })
}

struct Point {
    method: EstimatorKind,
    k: usize,
    seed: u64,
}

/// Runs every (method, K, seed) point of one experiment in parallel on the
/// current rayon pool. Records come back in config order; only
/// `elapsed_ns` varies between runs.
pub fn run_experiment(exp: &ExperimentConfig, base_seed: Option<u64>) -> Result<Vec<EstimateRecord>, HarnessError> {
    let model = exp.model.build()?;
    let ground_truth = model.exact_log_evidence()?;
    let n = model.size();
    let base = base_seed.unwrap_or(exp.base_seed);
    let setups = exp
        .methods
        .iter()
        .map(|g| setup(&model, g.method))
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<(usize, Point)> = exp
        .methods
        .iter()
        .enumerate()
        .flat_map(|(i, g)| {
            g.ks.iter().flat_map(move |&k| {
                (0..exp.seeds as u64).map(move |s| {
                    (
                        i,
                        Point {
                            method: g.method,
                            k,
                            seed: base.wrapping_add(s),
                        },
                    )
                })
            })
        })
        .collect();
    points
        .into_par_iter()
        .map(|(i, p)| {
            let (net, proposal) = &setups[i];
            let start = Instant::now();
            let estimate = run_estimator(net, proposal, p.method, p.k, p.seed)?;
            let elapsed_ns = start.elapsed().as_nanos() as u64;
            Ok(EstimateRecord {
                method: p.method.name().to_owned(),
                k: p.k,
                n,
                seed: p.seed,
                estimate,
                ground_truth,
                elapsed_ns,
            })
        })
        .collect()
}

/// Runs every experiment in order.
pub fn run_sweep(config: &SweepConfig, base_seed: Option<u64>) -> Result<Vec<EstimateRecord>, HarnessError> {
    let mut out = Vec::new();
    for exp in &config.experiments {
        out.extend(run_experiment(exp, base_seed)?);
    }
    Ok(out)
}

/// Runs the sweep and writes its records to `out`.
pub fn run_sweep_to_csv(config: &SweepConfig, base_seed: Option<u64>, out: &Path) -> Result<Vec<EstimateRecord>, HarnessError> {
    // Fail on an unwritable path before spending time on estimates.
    std::fs::File::create(out).map_err(|e| HarnessError::io(out, e))?;
    let records = run_sweep(config, base_seed)?;
    write_csv(out, &records)?;
    Ok(records)
}

/// Factor-graph dumps for the TMC methods of an experiment at their smallest K
/// and first seed.
pub fn dump_graphs(exp: &ExperimentConfig, base_seed: Option<u64>) -> Result<String, HarnessError> {
    let model = exp.model.build()?;
    let seed = base_seed.unwrap_or(exp.base_seed);
    let mut text = String::new();
    for g in &exp.methods {
        if !matches!(g.method, EstimatorKind::Tmc | EstimatorKind::TmcNonFactorised) {
            continue;
        }
        let k = g.ks.iter().copied().min().unwrap_or(1);
        let (net, proposal) = setup(&model, g.method)?;
        let s = sample_latents(&net, &proposal, &vec![k; proposal.len()], seed)?;
        let graph = build_directed_factors(&net, &s.samples)?;
        text.push_str(&format!("# {} {} K={k} seed={seed}\n", exp.name, g.method));
        text.push_str(&graph.dump());
    }
    Ok(text)
}

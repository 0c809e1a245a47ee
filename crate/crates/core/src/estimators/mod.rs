//! Log marginal-likelihood estimators.
//!
//! Every estimator is a pure function of the model, proposal, sample counts
//! and seed. Latent `j`'s draws come from RNG stream `j`, so estimators given
//! the same seed share their noise: TMC with one sample per latent reproduces
//! the single-sample bound exactly.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use thiserror::Error;

use crate::factorgraph::{build_directed_factors, DirectedModel, GraphError, LatentSamples};
use crate::logtensor::logsumexp;
use crate::models::{sample_latents, DiscreteModel, GaussianNet, ModelError, Pairing, ProposalKind, ProposalSpec};
use crate::rng::{cell, resample_stream, standard_normal};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("{estimator} needs a {expected:?} proposal")]
    ProposalKind {
        estimator: EstimatorKind,
        expected: ProposalKind,
    },
    #[error("every particle has zero weight at step {step}")]
    DegenerateParticles { step: usize },
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Vae,
    Iwae,
    Tmc,
    TmcNonFactorised,
    Smc,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Vae,
        EstimatorKind::Iwae,
        EstimatorKind::Tmc,
        EstimatorKind::TmcNonFactorised,
        EstimatorKind::Smc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Vae => "vae",
            EstimatorKind::Iwae => "iwae",
            EstimatorKind::Tmc => "tmc",
            EstimatorKind::TmcNonFactorised => "tmc-nonfactorised",
            EstimatorKind::Smc => "smc",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EstimateError::UnknownEstimator(s.to_owned()))
    }
}

/// `log P(x, z) - log Q(z)` for a single joint draw.
pub fn estimate_vae(net: &GaussianNet, proposal: &ProposalSpec, seed: u64) -> Result<f64, EstimateError> {
    estimate_iwae(net, proposal, 1, seed)
}

/// Log of the mean of `k` joint importance weights.
pub fn estimate_iwae(net: &GaussianNet, proposal: &ProposalSpec, k: usize, seed: u64) -> Result<f64, EstimateError> {
    if k == 0 {
        return Err(EstimateError::ZeroSamples);
    }
    let n = net.num_latents();
    // Joint samples are independent paths through the proposal.
    let paths = proposal.with_pairing(Pairing::Diagonal);
    let s = sample_latents(net, &paths, &vec![k; n], seed)?.samples;
    let mut z = vec![0.0; n];
    let log_w: Vec<f64> = (0..k)
        .map(|i| {
            let mut log_q = 0.0;
            for j in 0..n {
                z[j] = s.values[j][i];
                log_q += s.log_q[j][i];
            }
            net.log_joint(&z) - log_q
        })
        .collect();
    Ok(log_mean_exp(&log_w))
}

fn log_mean_exp(log_w: &[f64]) -> f64 {
    let lse = logsumexp(log_w);
    if lse == f64::NEG_INFINITY {
        lse
    } else {
        lse - (log_w.len() as f64).ln()
    }
}

/// TMC over any directed model: the normalised sum of the importance ratio
/// over every combination of per-latent samples, by variable elimination in
/// greedy min-fill order.
pub fn tmc_log_evidence<M: DirectedModel>(model: &M, samples: &LatentSamples<M::Value>) -> Result<f64, EstimateError> {
    let graph = build_directed_factors(model, samples)?;
    let order = graph.greedy_order();
    Ok(graph.evaluate(&order)?)
}

/// TMC with a factorised proposal and `k[j]` independent draws of latent `j`.
pub fn estimate_tmc(net: &GaussianNet, proposal: &ProposalSpec, k: &[usize], seed: u64) -> Result<f64, EstimateError> {
    if proposal.kind() != ProposalKind::Factorised {
        return Err(EstimateError::ProposalKind {
            estimator: EstimatorKind::Tmc,
            expected: ProposalKind::Factorised,
        });
    }
    let s = sample_latents(net, proposal, k, seed)?;
    tmc_log_evidence(net, &s.samples)
}

/// TMC with a conditional proposal: the factor for latent `j` divides by
/// `Q(z_j^{k_j} | parent samples)`, so weights stay indexed by `k_j` alone.
pub fn estimate_tmc_nonfactorised(
    net: &GaussianNet,
    proposal: &ProposalSpec,
    k: &[usize],
    seed: u64,
) -> Result<f64, EstimateError> {
    let s = sample_latents(net, proposal, k, seed)?;
    tmc_log_evidence(net, &s.samples)
}

/// Exact log-evidence of a discrete model by TMC over stratified enumeration.
pub fn tmc_enumerate_discrete(model: &DiscreteModel) -> Result<f64, EstimateError> {
    tmc_log_evidence(model, &model.stratified_samples())
}

/// Bootstrap particle filter over latents in index order. Each step proposes
/// from the latent's proposal, weights by the incremental ratio (prior over
/// proposal times the likelihood of observations whose last parent is this
/// latent) and resamples multinomially. Returns `Σ_t log(mean weight_t)`.
pub fn estimate_smc(net: &GaussianNet, proposal: &ProposalSpec, k: usize, seed: u64) -> Result<f64, EstimateError> {
    if k == 0 {
        return Err(EstimateError::ZeroSamples);
    }
    let n = net.num_latents();
    if proposal.len() != n {
        return Err(ModelError::SizeMismatch {
            what: "proposal latents",
            expected: n,
            found: proposal.len(),
        }
        .into());
    }
    let mut obs_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut log_z = 0.0;
    for o in 0..net.num_observed() {
        match net.observed_parents(o).iter().max() {
            Some(&last) => obs_at[last].push(o),
            None => log_z += net.log_likelihood(o, &[]),
        }
    }
    // The proposal may condition on any latent, so require its parents to precede.
    for (j, l) in proposal.latents().iter().enumerate() {
        if let Some(&p) = l.parents.iter().find(|&&p| p >= j) {
            return Err(ModelError::NotTopological { node: j, parent: p }.into());
        }
    }

    let mut paths: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut log_w = vec![0.0; k];
    let mut buf = Vec::new();
    for t in 0..n {
        let lp = &proposal.latents()[t];
        let mut column = Vec::with_capacity(k);
        for (i, w) in log_w.iter_mut().enumerate() {
            let mean = lp.loc + lp.parents.iter().zip(&lp.coeffs).map(|(&p, c)| c * paths[p][i]).sum::<f64>();
            let eps = standard_normal(seed, t as u64, i as u64);
            let z = mean + lp.scale * eps;
            let log_q = crate::models::normal_log_density(z, mean, lp.scale);
            buf.clear();
            buf.extend(net.latent_parents(t).iter().map(|&p| paths[p][i]));
            let mut lw = net.log_prior(t, z, &buf) - log_q;
            column.push(z);
            for &o in &obs_at[t] {
                buf.clear();
                buf.extend(net.observed_parents(o).iter().map(|&p| if p == t { z } else { paths[p][i] }));
                lw += net.log_likelihood(o, &buf);
            }
            *w = lw;
        }
        paths.push(column);

        let step = log_mean_exp(&log_w);
        if step == f64::NEG_INFINITY || step.is_nan() {
            return Err(EstimateError::DegenerateParticles { step: t });
        }
        log_z += step;
        if t + 1 < n {
            let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = log_w.iter().map(|w| (w - max).exp()).collect();
            let dist = WeightedIndex::new(&probs).map_err(|_| EstimateError::DegenerateParticles { step: t })?;
            let mut rng = cell(seed, resample_stream(t), 0);
            let ancestors: Vec<usize> = (0..k).map(|_| dist.sample(&mut rng)).collect();
            for path in &mut paths {
                *path = ancestors.iter().map(|&a| path[a]).collect();
            }
        }
    }
    Ok(log_z)
}

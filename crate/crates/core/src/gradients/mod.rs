//! Gradients of IWAE and TMC objectives by reverse-mode differentiation.
//!
//! Three recognition-gradient estimators are supported. `Reparam`
//! differentiates the objective with every path live. `Stl` stops gradients
//! into the proposal parameters wherever the proposal density is evaluated,
//! leaving only the path through the reparameterised samples. `Dregs`
//! differentiates the surrogate `½ · (Σ w̄² / (Σ w̄)²) · log Σ ŵ²`, where `w̄`
//! is fully stopped and `ŵ` is stopped like `Stl`; both sums come from factor
//! graph elimination, the second with every log-factor doubled.
//!
//! Generative parameters (the prior offsets of the latents) always receive
//! the plain objective gradient.

mod tape;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::factorgraph::{
    directed_factor_tensors, greedy_order_for_scopes, AxisLayout, DirectedModel, FactorGraph, GraphError,
    LatentSamples, VariableKind,
};
use crate::logtensor::{AxisId, TensorError};
use crate::models::{GaussianNet, ModelError, ProposalKind, ProposalSpec};
use crate::rng::draw_noise;

pub use tape::{Gradients, NodeId, Tape};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GradError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node {node} must be positive, got {value}")]
    Domain { node: NodeId, value: f64 },
    #[error("non-finite gradient at node {0}")]
    NonFinite(NodeId),
    #[error("node {0} is not on the tape")]
    UnknownNode(NodeId),
    #[error("node {0} is not a scalar")]
    NotScalar(NodeId),
    #[error("gradients need a factorised proposal")]
    UnsupportedProposal,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("finite-difference step must be positive and finite, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradEstimatorKind {
    Reparam,
    Stl,
    Dregs,
}

impl GradEstimatorKind {
    pub const ALL: [GradEstimatorKind; 3] = [GradEstimatorKind::Reparam, GradEstimatorKind::Stl, GradEstimatorKind::Dregs];

    pub fn name(self) -> &'static str {
        match self {
            GradEstimatorKind::Reparam => "reparam",
            GradEstimatorKind::Stl => "stl",
            GradEstimatorKind::Dregs => "dregs",
        }
    }
}

/// Which log-evidence estimate is differentiated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// `k` joint samples.
    Iwae { k: usize },
    /// `k[j]` samples of latent `j`, averaged over every combination.
    Tmc { k: Vec<usize> },
}

impl ObjectiveKind {
    fn counts(&self, n: usize) -> Result<Vec<usize>, GradError> {
        let counts = match self {
            ObjectiveKind::Iwae { k } => vec![*k; n],
            ObjectiveKind::Tmc { k } => {
                if k.len() != n {
                    return Err(ModelError::SizeMismatch {
                        what: "per-latent sample counts",
                        expected: n,
                        found: k.len(),
                    }
                    .into());
                }
                k.clone()
            }
        };
        if counts.contains(&0) {
            return Err(GradError::ZeroSamples);
        }
        Ok(counts)
    }

    fn layout(&self) -> AxisLayout {
        match self {
            ObjectiveKind::Iwae { .. } => AxisLayout::Shared,
            ObjectiveKind::Tmc { .. } => AxisLayout::PerLatent,
        }
    }

    /// Number of weights the normalised sum averages over.
    fn weight_count(&self, counts: &[usize]) -> f64 {
        match self {
            ObjectiveKind::Iwae { k } => *k as f64,
            ObjectiveKind::Tmc { .. } => counts.iter().map(|&k| k as f64).product(),
        }
    }

    fn cards(&self, counts: &[usize]) -> BTreeMap<AxisId, usize> {
        let layout = self.layout();
        counts.iter().enumerate().map(|(j, &k)| (layout.axis(j), k)).collect()
    }
}

/// Objective value and gradients, with recognition gradients ordered like
/// [`ProposalSpec::params`] and generative gradients like [`GaussianNet::offsets`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    /// The log-evidence estimate.
    pub value: f64,
    /// The scalar whose gradient gave the recognition block.
    pub surrogate: f64,
    pub recognition: Vec<f64>,
    pub generative: Vec<f64>,
}

/// Records `z = mu + sigma · eps` with `eps` a constant.
pub fn record_reparam_sample(tape: &mut Tape, mu: NodeId, sigma: NodeId, eps: NodeId) -> Result<NodeId, GradError> {
    if let Some(&value) = tape.value(sigma).data().iter().find(|&&s| !(s > 0.0)) {
        return Err(GradError::Domain { node: sigma, value });
    }
    let noise = tape.stop_gradient(eps)?;
    let step = tape.mul(sigma, noise)?;
    tape.add(mu, step)
}

/// A value-identical node that passes no gradient back.
pub fn stop_gradient(tape: &mut Tape, node: NodeId) -> Result<NodeId, GradError> {
    tape.stop_gradient(node)
}

/// Eliminates every axis in `cards` from the log-product of `factors`,
/// normalising each sum, and returns the scalar result.
fn eliminate(tape: &mut Tape, mut factors: Vec<NodeId>, cards: &BTreeMap<AxisId, usize>) -> Result<NodeId, GradError> {
    let scopes: Vec<Vec<AxisId>> = factors.iter().map(|&f| tape.value(f).axis_ids().collect()).collect();
    let order = greedy_order_for_scopes(&scopes, cards);
    for &axis in order.as_slice() {
        let (touching, rest): (Vec<NodeId>, Vec<NodeId>) =
            factors.into_iter().partition(|&f| tape.value(f).has_axis(axis));
        factors = rest;
        if !touching.is_empty() {
            factors.push(tape.contract(&touching, axis, true)?);
        }
    }
    let mut total = match factors.first() {
        Some(&f) => f,
        None => tape.scalar(0.0),
    };
    for &f in factors.iter().skip(1) {
        total = tape.add(total, f)?;
    }
    Ok(total)
}

struct LatentNodes {
    mu: Vec<NodeId>,
    sigma: Vec<NodeId>,
    offsets: Vec<NodeId>,
    z: Vec<NodeId>,
}

/// Log-factors of `P(x, z) / ∏ Q(z_j)` with `log_q[j]` supplying the proposal terms.
fn factor_nodes(tape: &mut Tape, net: &GaussianNet, nodes: &LatentNodes, log_q: &[NodeId]) -> Result<Vec<NodeId>, GradError> {
    let mut out = Vec::with_capacity(net.num_latents() + net.num_observed());
    let mean_of = |tape: &mut Tape, base: NodeId, parents: &[usize], coeffs: &[f64]| -> Result<NodeId, GradError> {
        let mut mean = base;
        for (&p, &c) in parents.iter().zip(coeffs) {
            let term = tape.scale(nodes.z[p], c)?;
            mean = tape.add(mean, term)?;
        }
        Ok(mean)
    };
    for (j, l) in net.latents().iter().enumerate() {
        let mean = mean_of(tape, nodes.offsets[j], &l.parents, &l.coeffs)?;
        let sd = tape.scalar(l.sd());
        let log_p = tape.gaussian_log_density(nodes.z[j], mean, sd)?;
        out.push(tape.sub(log_p, log_q[j])?);
    }
    for obs in net.observations() {
        let c = &obs.conditional;
        let base = tape.scalar(c.offset);
        let mean = mean_of(tape, base, &c.parents, &c.coeffs)?;
        let sd = tape.scalar(c.sd());
        let x = tape.scalar(obs.value);
        out.push(tape.gaussian_log_density(x, mean, sd)?);
    }
    Ok(out)
}

/// Gradients of the chosen objective under `kind`, with samples drawn from
/// the same noise streams as the estimators use for `seed`.
pub fn grad_objective(
    net: &GaussianNet,
    proposal: &ProposalSpec,
    objective: &ObjectiveKind,
    kind: GradEstimatorKind,
    seed: u64,
) -> Result<GradientReport, GradError> {
    if proposal.kind() != ProposalKind::Factorised {
        return Err(GradError::UnsupportedProposal);
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
    let counts = objective.counts(n)?;
    let layout = objective.layout();
    let cards = objective.cards(&counts);
    let noise = draw_noise(&counts, seed);

    let mut tape = Tape::new();
    let mut nodes = LatentNodes {
        mu: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        offsets: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for (j, q) in proposal.latents().iter().enumerate() {
        let mu = tape.scalar(q.loc);
        let sigma = tape.scalar(q.scale);
        let offset = tape.scalar(net.latent(j).offset);
        let eps = tape.vector(layout.axis(j), noise[j].clone())?;
        let z = record_reparam_sample(&mut tape, mu, sigma, eps)?;
        nodes.mu.push(mu);
        nodes.sigma.push(sigma);
        nodes.offsets.push(offset);
        nodes.z.push(z);
    }

    let mut live_q = Vec::with_capacity(n);
    for j in 0..n {
        live_q.push(tape.gaussian_log_density(nodes.z[j], nodes.mu[j], nodes.sigma[j])?);
    }
    let live_factors = factor_nodes(&mut tape, net, &nodes, &live_q)?;
    let value = eliminate(&mut tape, live_factors, &cards)?;

    let surrogate = match kind {
        GradEstimatorKind::Reparam => value,
        GradEstimatorKind::Stl | GradEstimatorKind::Dregs => {
            let mut hat_q = Vec::with_capacity(n);
            for j in 0..n {
                let mu = tape.stop_gradient(nodes.mu[j])?;
                let sigma = tape.stop_gradient(nodes.sigma[j])?;
                hat_q.push(tape.gaussian_log_density(nodes.z[j], mu, sigma)?);
            }
            let hat = factor_nodes(&mut tape, net, &nodes, &hat_q)?;
            if kind == GradEstimatorKind::Stl {
                eliminate(&mut tape, hat, &cards)?
            } else {
                let mut bar = Vec::with_capacity(hat.len());
                let mut bar_sq = Vec::with_capacity(hat.len());
                let mut hat_sq = Vec::with_capacity(hat.len());
                for &f in &hat {
                    let b = tape.stop_gradient(f)?;
                    bar.push(b);
                    bar_sq.push(tape.scale(b, 2.0)?);
                    hat_sq.push(tape.scale(f, 2.0)?);
                }
                let a = eliminate(&mut tape, bar, &cards)?;
                let b = eliminate(&mut tape, bar_sq, &cards)?;
                let b_hat = eliminate(&mut tape, hat_sq, &cards)?;
                let m = objective.weight_count(&counts);
                let c = dregs_coefficient(scalar_of(&tape, a), scalar_of(&tape, b), m);
                let ln_m = tape.scalar(m.ln());
                let log_sum_sq = tape.add(b_hat, ln_m)?;
                tape.scale(log_sum_sq, 0.5 * c)?
            }
        }
    };

    let recognition_grads = tape.backward(surrogate)?;
    let recognition = nodes
        .mu
        .iter()
        .zip(&nodes.sigma)
        .flat_map(|(&m, &s)| [recognition_grads.scalar(m), recognition_grads.scalar(s)])
        .collect();
    let generative_grads = if surrogate == value {
        recognition_grads
    } else {
        tape.backward(value)?
    };
    let generative = nodes.offsets.iter().map(|&b| generative_grads.scalar(b)).collect();
    Ok(GradientReport {
        value: scalar_of(&tape, value),
        surrogate: scalar_of(&tape, surrogate),
        recognition,
        generative,
    })
}

fn scalar_of(tape: &Tape, id: NodeId) -> f64 {
    tape.value(id).value().expect("objective nodes are scalars")
}

/// `Σ w̄² / (Σ w̄)²` from the normalised log-sums `a = log(Σ w̄ / m)` and
/// `b = log(Σ w̄² / m)`.
fn dregs_coefficient(a: f64, b: f64, m: f64) -> f64 {
    (b - 2.0 * a).exp() / m
}

/// Normalised log-sum of the importance ratios in `samples`, optionally with
/// every log-factor scaled by `power`.
fn log_mean_weight(
    net: &GaussianNet,
    samples: &LatentSamples<f64>,
    objective: &ObjectiveKind,
    power: f64,
) -> Result<f64, GradError> {
    let layout = objective.layout();
    let mut graph = FactorGraph::new();
    for (axis, k) in objective.cards(&samples.counts()) {
        graph.add_variable(axis, k, VariableKind::SampleIndex)?;
    }
    for t in directed_factor_tensors(net, samples, layout)? {
        graph.add_factor(t)?;
    }
    if power != 1.0 {
        graph = graph.powf(power);
    }
    Ok(graph.evaluate(&graph.greedy_order())?)
}

/// The log-evidence estimate as a plain function of the proposal and the
/// generative offsets in `net`, for the noise drawn under `seed`.
pub fn objective_value(net: &GaussianNet, proposal: &ProposalSpec, objective: &ObjectiveKind, seed: u64) -> Result<f64, GradError> {
    surrogate_value(net, proposal, proposal, objective, GradEstimatorKind::Reparam, seed)
}

/// The scalar whose gradient in `live` is the `kind` recognition gradient at
/// `live = frozen`. Samples follow `live`; stopped quantities use `frozen`.
/// Evaluated without the tape, so it serves as an independent target for
/// finite differences.
pub fn surrogate_value(
    net: &GaussianNet,
    live: &ProposalSpec,
    frozen: &ProposalSpec,
    objective: &ObjectiveKind,
    kind: GradEstimatorKind,
    seed: u64,
) -> Result<f64, GradError> {
    if live.kind() != ProposalKind::Factorised || frozen.kind() != ProposalKind::Factorised {
        return Err(GradError::UnsupportedProposal);
    }
    let counts = objective.counts(net.num_latents())?;
    let noise = draw_noise(&counts, seed);
    let identity: Vec<Vec<usize>> = counts.iter().map(|&k| (0..k).collect()).collect();
    let z = live.reparameterise(&noise, &identity)?;
    let samples = |q: &ProposalSpec, z: Vec<Vec<f64>>| -> Result<LatentSamples<f64>, GradError> {
        let log_q = q.log_density(&z)?;
        Ok(LatentSamples { values: z, log_q })
    };
    match kind {
        GradEstimatorKind::Reparam => log_mean_weight(net, &samples(live, z)?, objective, 1.0),
        GradEstimatorKind::Stl => log_mean_weight(net, &samples(frozen, z)?, objective, 1.0),
        GradEstimatorKind::Dregs => {
            let z0 = frozen.reparameterise(&noise, &identity)?;
            let stopped = samples(frozen, z0)?;
            let a = log_mean_weight(net, &stopped, objective, 1.0)?;
            let b = log_mean_weight(net, &stopped, objective, 2.0)?;
            let m = objective.weight_count(&counts);
            let c = dregs_coefficient(a, b, m);
            let b_hat = log_mean_weight(net, &samples(frozen, z)?, objective, 2.0)?;
            Ok(0.5 * c * (b_hat + m.ln()))
        }
    }
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h`. Stochastic
/// objectives must reuse their seed inside `f` (common random numbers).
pub fn finite_difference(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Result<Vec<f64>, GradError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(GradError::InvalidStep(h));
    }
    let mut p = params.to_vec();
    Ok((0..params.len())
        .map(|i| {
            p[i] = params[i] + h;
            let up = f(&p);
            p[i] = params[i] - h;
            let down = f(&p);
            p[i] = params[i];
            (up - down) / (2.0 * h)
        })
        .collect())
}

//! Toy generative models with proposals, samplers and exact evidences.
//!
//! The two Gaussian families (a hierarchical model with a shared mean and a
//! long chain of tightly coupled latents) are both linear-Gaussian directed
//! models and share [`GaussianNet`]. Small discrete models exercise exact
//! marginalisation by stratified enumeration.

mod discrete;
mod gaussian;
mod proposal;

use thiserror::Error;

use crate::factorgraph::{directed_factor_tensors, AxisLayout, DirectedModel, GraphError, LatentSamples};
use crate::logtensor::LogTensor;

pub use discrete::{DiscreteModel, DiscreteNode, DiscreteObservation};
pub use gaussian::{GaussianChain, GaussianNet, GaussianObservation, HierarchicalGaussian, LinearGaussian};
pub use proposal::{sample_latents, GaussianSamples, LatentProposal, Pairing, ProposalKind, ProposalSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model needs at least one {0}")]
    Empty(&'static str),
    #[error("node {node} lists parent {parent}, which is not an earlier latent")]
    NotTopological { node: usize, parent: usize },
    #[error("node {node} has non-positive or non-finite variance {variance}")]
    BadVariance { node: usize, variance: f64 },
    #[error("node {node} has {parents} parents but {coeffs} coefficients")]
    CoefficientCount { node: usize, parents: usize, coeffs: usize },
    #[error("proposal parents form a cycle through latent {0}")]
    ProposalCycle(usize),
    #[error("proposal for latent {latent} names unknown parent {parent}")]
    UnknownProposalParent { latent: usize, parent: usize },
    #[error("expected {expected} {what}, found {found}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("latent {latent} needs at least one sample")]
    ZeroSamples { latent: usize },
    #[error("latent {latent} draws {found} samples but its proposal parent {parent} has {expected}; paired draws need equal counts")]
    UnpairedCounts {
        latent: usize,
        parent: usize,
        expected: usize,
        found: usize,
    },
    #[error("proposal scale for latent {latent} must be positive, got {scale}")]
    BadScale { latent: usize, scale: f64 },
    #[error("table for node {node} has {found} entries, expected {expected}")]
    TableShape {
        node: usize,
        expected: usize,
        found: usize,
    },
    #[error("table for node {node}, row {row} sums to {sum}")]
    TableRow { node: usize, row: usize, sum: f64 },
    #[error("observed value {value} is outside support {support} for observation {node}")]
    ObservedValue { node: usize, value: usize, support: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("covariance is numerically singular")]
    SingularCovariance,
}

/// `log N(x; mean, sd²)`.
#[inline]
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let u = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * u * u
}

/// Per-latent prior/proposal tensors and per-observation likelihood tensors,
/// each over the sample indices it depends on.
pub fn log_joint_factors<M: DirectedModel>(
    model: &M,
    samples: &LatentSamples<M::Value>,
) -> Result<Vec<LogTensor>, GraphError> {
    directed_factor_tensors(model, samples, AxisLayout::PerLatent)
}

/// One of the toy model families.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Hierarchical(HierarchicalGaussian),
    Chain(GaussianChain),
    Discrete(DiscreteModel),
}

impl ModelSpec {
    pub fn exact_log_evidence(&self) -> Result<f64, ModelError> {
        match self {
            ModelSpec::Hierarchical(m) => m.exact_log_evidence(),
            ModelSpec::Chain(m) => Ok(m.exact_log_evidence()),
            ModelSpec::Discrete(m) => Ok(m.exact_log_evidence()),
        }
    }

    /// Data points for the hierarchical model, latents for the others.
    pub fn size(&self) -> usize {
        match self {
            ModelSpec::Hierarchical(m) => m.n_data(),
            ModelSpec::Chain(m) => m.n_latents(),
            ModelSpec::Discrete(m) => m.num_latents(),
        }
    }
}

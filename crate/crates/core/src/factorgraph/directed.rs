//! Factors of a directed model: one per latent (prior over proposal, indexed
//! by its own sample and its parents' samples) and one per observation
//! (likelihood, indexed by its parents' samples).

use crate::logtensor::{log_mul, AxisId, LogTensor};

use super::{FactorGraph, GraphError, VariableKind};

/// A directed generative model over latents `0..num_latents()` and a fixed set
/// of observations, evaluated in the log domain.
pub trait DirectedModel {
    type Value: Copy;

    fn num_latents(&self) -> usize;
    fn latent_parents(&self, j: usize) -> &[usize];
    /// `log P(z_j = value | parents)`, with parent values in `latent_parents(j)` order.
    fn log_prior(&self, j: usize, value: Self::Value, parents: &[Self::Value]) -> f64;

    fn num_observed(&self) -> usize;
    fn observed_parents(&self, o: usize) -> &[usize];
    /// `log P(x_o | parents)` at the fixed observed value.
    fn log_likelihood(&self, o: usize, parents: &[Self::Value]) -> f64;

    fn variable_kind(&self, _j: usize) -> VariableKind {
        VariableKind::SampleIndex
    }

    /// `log P(x, z)` for one joint setting of the latents.
    fn log_joint(&self, z: &[Self::Value]) -> f64 {
        let mut buf = Vec::new();
        let mut total = 0.0;
        for j in 0..self.num_latents() {
            buf.clear();
            buf.extend(self.latent_parents(j).iter().map(|&p| z[p]));
            total += self.log_prior(j, z[j], &buf);
        }
        for o in 0..self.num_observed() {
            buf.clear();
            buf.extend(self.observed_parents(o).iter().map(|&p| z[p]));
            total += self.log_likelihood(o, &buf);
        }
        total
    }
}

/// Per-latent samples `z_j^{k}` and the proposal log-density at each.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSamples<V> {
    pub values: Vec<Vec<V>>,
    pub log_q: Vec<Vec<f64>>,
}

impl<V> LatentSamples<V> {
    pub fn counts(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }
}

/// How latents map onto tensor axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisLayout {
    /// Latent `j` is indexed by its own axis `k_j`: all `∏ K_j` combinations.
    PerLatent,
    /// Every latent shares one axis: only the `K` aligned joint samples.
    Shared,
}

impl AxisLayout {
    pub fn axis(self, j: usize) -> AxisId {
        match self {
            AxisLayout::PerLatent => AxisId(j as u32),
            AxisLayout::Shared => AxisId(0),
        }
    }
}

fn validate<M: DirectedModel>(
    model: &M,
    samples: &LatentSamples<M::Value>,
    layout: AxisLayout,
) -> Result<(), GraphError> {
    let n = model.num_latents();
    if samples.values.len() != n || samples.log_q.len() != n {
        return Err(GraphError::SampleCount {
            latent: samples.values.len().min(samples.log_q.len()),
            expected: n,
            found: samples.values.len(),
        });
    }
    for j in 0..n {
        let k = samples.values[j].len();
        if samples.log_q[j].len() != k {
            return Err(GraphError::SampleCount {
                latent: j,
                expected: k,
                found: samples.log_q[j].len(),
            });
        }
        if layout == AxisLayout::Shared && k != samples.values[0].len() {
            return Err(GraphError::SampleCount {
                latent: j,
                expected: samples.values[0].len(),
                found: k,
            });
        }
        if let Some(&p) = model.latent_parents(j).iter().find(|&&p| p >= n) {
            return Err(GraphError::UnknownParent { node: j, parent: p });
        }
    }
    for o in 0..model.num_observed() {
        if let Some(&p) = model.observed_parents(o).iter().find(|&&p| p >= n) {
            return Err(GraphError::UnknownParent { node: n + o, parent: p });
        }
    }
    Ok(())
}

/// Axes for a factor over `latents` (deduplicated), and for each latent the
/// position of its axis in that list.
fn factor_axes(
    latents: &[usize],
    counts: &[usize],
    layout: AxisLayout,
) -> (Vec<(AxisId, usize)>, Vec<usize>) {
    let mut axes: Vec<(AxisId, usize)> = Vec::new();
    let mut pos = Vec::with_capacity(latents.len());
    for &j in latents {
        let a = layout.axis(j);
        match axes.iter().position(|&(b, _)| b == a) {
            Some(p) => pos.push(p),
            None => {
                pos.push(axes.len());
                axes.push((a, counts[j]));
            }
        }
    }
    (axes, pos)
}

/// Builds the log-domain factor tensors of the importance ratio
/// `P(x, z) / ∏_j Q(z_j)`: latent factors first (in latent order) then
/// observation factors. Their log-product at any index tuple is the log
/// importance weight of the corresponding joint sample.
pub fn directed_factor_tensors<M: DirectedModel>(
    model: &M,
    samples: &LatentSamples<M::Value>,
    layout: AxisLayout,
) -> Result<Vec<LogTensor>, GraphError> {
    validate(model, samples, layout)?;
    let counts = samples.counts();
    let mut out = Vec::with_capacity(model.num_latents() + model.num_observed());
    let mut buf: Vec<M::Value> = Vec::new();

    for j in 0..model.num_latents() {
        let parents = model.latent_parents(j);
        let members: Vec<usize> = std::iter::once(j).chain(parents.iter().copied()).collect();
        let (axes, pos) = factor_axes(&members, &counts, layout);
        let t = LogTensor::from_fn(axes, |idx| {
            let k = idx[pos[0]];
            buf.clear();
            buf.extend(parents.iter().zip(&pos[1..]).map(|(&p, &ap)| samples.values[p][idx[ap]]));
            model.log_prior(j, samples.values[j][k], &buf) - samples.log_q[j][k]
        })?;
        out.push(t);
    }

    for o in 0..model.num_observed() {
        let parents = model.observed_parents(o);
        let (axes, pos) = factor_axes(parents, &counts, layout);
        let t = LogTensor::from_fn(axes, |idx| {
            buf.clear();
            buf.extend(parents.iter().zip(&pos).map(|(&p, &ap)| samples.values[p][idx[ap]]));
            model.log_likelihood(o, &buf)
        })?;
        out.push(t);
    }
    Ok(out)
}

/// The TMC factor graph of a directed model: one variable `k_j` per latent
/// with cardinality equal to its sample count, and the factors of
/// [`directed_factor_tensors`] under [`AxisLayout::PerLatent`]. An
/// observation's likelihood is folded into the factor of its last parent
/// latent when that factor already covers its scope, so a hierarchical model
/// yields one factor `f_i^{k_θ, k_i}` per data point.
pub fn build_directed_factors<M: DirectedModel>(
    model: &M,
    samples: &LatentSamples<M::Value>,
) -> Result<FactorGraph, GraphError> {
    let mut tensors = directed_factor_tensors(model, samples, AxisLayout::PerLatent)?;
    let likelihoods = tensors.split_off(model.num_latents());
    for (o, t) in likelihoods.into_iter().enumerate() {
        match model.observed_parents(o).iter().max() {
            Some(&last) if t.axis_ids().all(|a| tensors[last].has_axis(a)) => {
                tensors[last] = log_mul(&tensors[last], &t)?;
            }
            _ => tensors.push(t),
        }
    }
    let mut g = FactorGraph::new();
    for (j, k) in samples.counts().into_iter().enumerate() {
        g.add_variable(AxisLayout::PerLatent.axis(j), k, model.variable_kind(j))?;
    }
    for t in tensors {
        g.add_factor(t)?;
    }
    Ok(g)
}

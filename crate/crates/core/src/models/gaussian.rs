//! Linear-Gaussian directed models.

use crate::factorgraph::DirectedModel;
use crate::rng::{data_stream, standard_normal};

use super::proposal::{LatentProposal, ProposalSpec};
use super::{normal_log_density, ModelError};

/// `N(offset + Σ_p coeff_p · z_p, variance)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub offset: f64,
    pub parents: Vec<usize>,
    pub coeffs: Vec<f64>,
    pub variance: f64,
}

impl LinearGaussian {
    pub fn root(mean: f64, variance: f64) -> Self {
        Self {
            offset: mean,
            parents: Vec::new(),
            coeffs: Vec::new(),
            variance,
        }
    }

    /// Mean `z_parent + offset` with unit coefficient.
    pub fn shifted(parent: usize, offset: f64, variance: f64) -> Self {
        Self {
            offset,
            parents: vec![parent],
            coeffs: vec![1.0],
            variance,
        }
    }

    pub fn mean(&self, parents: &[f64]) -> f64 {
        self.offset + self.coeffs.iter().zip(parents).map(|(c, z)| c * z).sum::<f64>()
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn log_density(&self, value: f64, parents: &[f64]) -> f64 {
        normal_log_density(value, self.mean(parents), self.sd())
    }

    fn check(&self, node: usize, bound: usize) -> Result<(), ModelError> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(ModelError::BadVariance {
                node,
                variance: self.variance,
            });
        }
        if self.parents.len() != self.coeffs.len() {
            return Err(ModelError::CoefficientCount {
                node,
                parents: self.parents.len(),
                coeffs: self.coeffs.len(),
            });
        }
        if let Some(&parent) = self.parents.iter().find(|&&p| p >= bound) {
            return Err(ModelError::NotTopological { node, parent });
        }
        if !self.offset.is_finite() {
            return Err(ModelError::NonFinite(self.offset));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianObservation {
    pub conditional: LinearGaussian,
    pub value: f64,
}

/// A directed linear-Gaussian model. Latent parents must precede their
/// children, so latent order is a topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNet {
    latents: Vec<LinearGaussian>,
    observations: Vec<GaussianObservation>,
}

impl GaussianNet {
    pub fn new(latents: Vec<LinearGaussian>, observations: Vec<GaussianObservation>) -> Result<Self, ModelError> {
        if latents.is_empty() {
            return Err(ModelError::Empty("latent"));
        }
        for (j, l) in latents.iter().enumerate() {
            l.check(j, j)?;
        }
        let n = latents.len();
        for (o, obs) in observations.iter().enumerate() {
            obs.conditional.check(n + o, n)?;
            if !obs.value.is_finite() {
                return Err(ModelError::NonFinite(obs.value));
            }
        }
        Ok(Self { latents, observations })
    }

    pub fn latent(&self, j: usize) -> &LinearGaussian {
        &self.latents[j]
    }

    pub fn latents(&self) -> &[LinearGaussian] {
        &self.latents
    }

    pub fn observations(&self) -> &[GaussianObservation] {
        &self.observations
    }

    /// The prior offsets of the latents, treated as the generative parameters.
    pub fn offsets(&self) -> Vec<f64> {
        self.latents.iter().map(|l| l.offset).collect()
    }

    pub fn with_offsets(&self, offsets: &[f64]) -> Result<Self, ModelError> {
        if offsets.len() != self.latents.len() {
            return Err(ModelError::SizeMismatch {
                what: "offsets",
                expected: self.latents.len(),
                found: offsets.len(),
            });
        }
        let mut out = self.clone();
        for (l, &b) in out.latents.iter_mut().zip(offsets) {
            if !b.is_finite() {
                return Err(ModelError::NonFinite(b));
            }
            l.offset = b;
        }
        Ok(out)
    }

    /// The proposal that samples each latent from its own prior conditional.
    pub fn prior_proposal(&self) -> ProposalSpec {
        let latents = self
            .latents
            .iter()
            .map(|l| LatentProposal {
                loc: l.offset,
                scale: l.sd(),
                parents: l.parents.clone(),
                coeffs: l.coeffs.clone(),
            })
            .collect();
        ProposalSpec::conditional(latents).expect("prior parents are topologically ordered")
    }
}

impl DirectedModel for GaussianNet {
    type Value = f64;

    fn num_latents(&self) -> usize {
        self.latents.len()
    }

    fn latent_parents(&self, j: usize) -> &[usize] {
        &self.latents[j].parents
    }

    fn log_prior(&self, j: usize, value: f64, parents: &[f64]) -> f64 {
        self.latents[j].log_density(value, parents)
    }

    fn num_observed(&self) -> usize {
        self.observations.len()
    }

    fn observed_parents(&self, o: usize) -> &[usize] {
        &self.observations[o].conditional.parents
    }

    fn log_likelihood(&self, o: usize, parents: &[f64]) -> f64 {
        let obs = &self.observations[o];
        obs.conditional.log_density(obs.value, parents)
    }
}

fn finite_data(x: &[f64]) -> Result<(), ModelError> {
    match x.iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(ModelError::NonFinite(v)),
        None => Ok(()),
    }
}

/// `θ ~ N(0, 1)`, `z_i | θ ~ N(θ, 1)`, `x_i | z_i ~ N(z_i, 1)` for `i = 1..N`.
///
/// Latent 0 is `θ`; latent `i` is `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalGaussian {
    observations: Vec<f64>,
}

impl HierarchicalGaussian {
    pub fn new(observations: Vec<f64>) -> Result<Self, ModelError> {
        if observations.is_empty() {
            return Err(ModelError::Empty("data point"));
        }
        finite_data(&observations)?;
        Ok(Self { observations })
    }

    /// Draws `n` data points from the model under `data_seed`.
    pub fn simulate(n: usize, data_seed: u64) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Empty("data point"));
        }
        let theta = standard_normal(data_seed, data_stream(0), 0);
        let xs = (1..=n)
            .map(|i| {
                let z = theta + standard_normal(data_seed, data_stream(i), 0);
                z + standard_normal(data_seed, data_stream(i), 1)
            })
            .collect();
        Self::new(xs)
    }

    pub fn n_data(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    pub fn net(&self) -> GaussianNet {
        let mut latents = vec![LinearGaussian::root(0.0, 1.0)];
        latents.extend((0..self.n_data()).map(|_| LinearGaussian::shifted(0, 0.0, 1.0)));
        let observations = self
            .observations
            .iter()
            .enumerate()
            .map(|(i, &value)| GaussianObservation {
                conditional: LinearGaussian::shifted(i + 1, 0.0, 1.0),
                value,
            })
            .collect();
        GaussianNet::new(latents, observations).expect("hierarchical model is well formed")
    }

    /// Factorised proposal matching the generative marginals:
    /// `Q(θ) = N(0, 1)`, `Q(z_i) = N(0, 2)`.
    pub fn proposal(&self) -> ProposalSpec {
        let mut params = vec![(0.0, 1.0)];
        params.extend((0..self.n_data()).map(|_| (0.0, std::f64::consts::SQRT_2)));
        ProposalSpec::factorised(&params).expect("positive scales")
    }

    /// `log N(x; 0, 𝟙𝟙ᵀ + 2I)` in closed form.
    pub fn exact_log_evidence(&self) -> Result<f64, ModelError> {
        let n = self.n_data() as f64;
        // det(2I + 𝟙𝟙ᵀ) = 2^(N-1) (N + 2); the inverse is (I - 𝟙𝟙ᵀ/(N + 2)) / 2.
        let log_det = (n - 1.0) * std::f64::consts::LN_2 + (n + 2.0).ln();
        if !log_det.is_finite() {
            return Err(ModelError::SingularCovariance);
        }
        let sum: f64 = self.observations.iter().sum();
        let sum_sq: f64 = self.observations.iter().map(|x| x * x).sum();
        let quad = 0.5 * (sum_sq - sum * sum / (n + 2.0));
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        Ok(-0.5 * n * ln_2pi - 0.5 * log_det - 0.5 * quad)
    }
}

/// `z_1 ~ N(0, 1/N)`, `z_i | z_{i-1} ~ N(z_{i-1}, 1/N)`, `x | z_N ~ N(z_N, 1)`.
///
/// Latent `j` is `z_{j+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianChain {
    n_latents: usize,
    observation: f64,
}

impl GaussianChain {
    pub fn new(n_latents: usize, observation: f64) -> Result<Self, ModelError> {
        if n_latents == 0 {
            return Err(ModelError::Empty("latent"));
        }
        finite_data(&[observation])?;
        Ok(Self {
            n_latents,
            observation,
        })
    }

    /// Draws the observation from the model under `data_seed`.
    pub fn simulate(n_latents: usize, data_seed: u64) -> Result<Self, ModelError> {
        if n_latents == 0 {
            return Err(ModelError::Empty("latent"));
        }
        let sd = (1.0 / n_latents as f64).sqrt();
        let z: f64 = (0..n_latents)
            .map(|j| sd * standard_normal(data_seed, data_stream(j), 0))
            .sum();
        Self::new(n_latents, z + standard_normal(data_seed, data_stream(n_latents), 0))
    }

    pub fn n_latents(&self) -> usize {
        self.n_latents
    }

    pub fn observation(&self) -> f64 {
        self.observation
    }

    pub fn step_variance(&self) -> f64 {
        1.0 / self.n_latents as f64
    }

    pub fn net(&self) -> GaussianNet {
        let v = self.step_variance();
        let latents = (0..self.n_latents)
            .map(|j| {
                if j == 0 {
                    LinearGaussian::root(0.0, v)
                } else {
                    LinearGaussian::shifted(j - 1, 0.0, v)
                }
            })
            .collect();
        let observations = vec![GaussianObservation {
            conditional: LinearGaussian::shifted(self.n_latents - 1, 0.0, 1.0),
            value: self.observation,
        }];
        GaussianNet::new(latents, observations).expect("chain model is well formed")
    }

    /// Independent proposals at the prior marginals, `Q(z_i) = N(0, i/N)`.
    pub fn factorised_proposal(&self) -> ProposalSpec {
        let n = self.n_latents as f64;
        let params: Vec<(f64, f64)> = (1..=self.n_latents).map(|i| (0.0, (i as f64 / n).sqrt())).collect();
        ProposalSpec::factorised(&params).expect("positive scales")
    }

    /// Proposals equal to the prior conditionals, `Q(z_i | z_{i-1}) = P(z_i | z_{i-1})`.
    pub fn prior_proposal(&self) -> ProposalSpec {
        self.net().prior_proposal()
    }

    /// `log N(x; 0, 2)`: the path contributes variance 1 and the observation 1.
    pub fn exact_log_evidence(&self) -> f64 {
        normal_log_density(self.observation, 0.0, std::f64::consts::SQRT_2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hierarchical_evidence_small_cases() {
        let m = HierarchicalGaussian::new(vec![0.0]).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI * 3.0).ln();
        assert!((m.exact_log_evidence().unwrap() - expected).abs() < 1e-14);
        assert!((m.exact_log_evidence().unwrap() + 1.468245).abs() < 1e-5);

        let m = HierarchicalGaussian::new(vec![0.0, 0.0]).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).ln() - 0.5 * 8f64.ln();
        assert!((m.exact_log_evidence().unwrap() - expected).abs() < 1e-14);
        assert!((m.exact_log_evidence().unwrap() + 2.87759).abs() < 1e-5);
    }

    #[test]
    fn hierarchical_evidence_matches_explicit_inverse() {
        // Σ = 𝟙𝟙ᵀ + 2I for N = 3, inverted by cofactors.
        let x = [0.3, -1.2, 2.0];
        let m = HierarchicalGaussian::new(x.to_vec()).unwrap();
        let s = [[3.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 1.0, 3.0]];
        let det = s[0][0] * (s[1][1] * s[2][2] - s[1][2] * s[2][1]) - s[0][1] * (s[1][0] * s[2][2] - s[1][2] * s[2][0])
            + s[0][2] * (s[1][0] * s[2][1] - s[1][1] * s[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                inv[i][j] = (s[r0][c0] * s[r1][c1] - s[r0][c1] * s[r1][c0]) / det;
            }
        }
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += x[i] * inv[i][j] * x[j];
            }
        }
        let expected = -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * quad;
        assert!((m.exact_log_evidence().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn chain_evidence_at_zero() {
        for n in [1, 5, 100] {
            let m = GaussianChain::new(n, 0.0).unwrap();
            assert!((m.exact_log_evidence() + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn net_shapes() {
        let net = HierarchicalGaussian::new(vec![1.0, 2.0]).unwrap().net();
        assert_eq!(net.num_latents(), 3);
        assert_eq!(net.num_observed(), 2);
        assert_eq!(net.latent_parents(2), &[0]);
        assert_eq!(net.observed_parents(1), &[2]);

        let chain = GaussianChain::new(4, 0.5).unwrap().net();
        assert_eq!(chain.latent_parents(0), &[] as &[usize]);
        assert_eq!(chain.latent_parents(3), &[2]);
        assert_eq!(chain.observed_parents(0), &[3]);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(HierarchicalGaussian::new(vec![]).is_err());
        assert!(GaussianChain::new(0, 0.0).is_err());
        let bad = GaussianNet::new(vec![LinearGaussian::shifted(0, 0.0, 1.0)], vec![]);
        assert!(matches!(bad, Err(ModelError::NotTopological { node: 0, parent: 0 })));
        let bad = GaussianNet::new(vec![LinearGaussian::root(0.0, 0.0)], vec![]);
        assert!(matches!(bad, Err(ModelError::BadVariance { .. })));
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = HierarchicalGaussian::simulate(5, 9).unwrap();
        let b = HierarchicalGaussian::simulate(5, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, HierarchicalGaussian::simulate(5, 10).unwrap());
    }
}

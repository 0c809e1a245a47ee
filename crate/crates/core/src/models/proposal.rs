//! Gaussian proposals: independent per-latent marginals, or conditionals on
//! other latents' samples.
//!
//! A conditional proposal links draws of a latent to the draws of its
//! proposal parents in one of two ways (see [`Pairing`]). Either way the
//! density of draw `k_j` depends only on `k_j` and the parents' samples, so
//! the TMC factorisation is unchanged.

use rand::Rng;

use crate::factorgraph::{DirectedModel, LatentSamples};
use crate::logtensor::logsumexp;
use crate::rng::{ancestor_stream, cell, draw_noise};

use super::gaussian::GaussianNet;
use super::{normal_log_density, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    Factorised,
    PriorConditional,
}

/// How draws of a latent attach to the draws of its proposal parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Draw `k` conditions on draw `k` of every parent; a latent and its
    /// parents need equal sample counts. Draws form independent joint paths.
    Diagonal,
    /// Draw `k` conditions on a uniformly chosen ancestor index shared by all
    /// parents, so its density is the mixture over every parent sample.
    /// Parents of one latent need equal sample counts.
    Mixture,
}

/// `Q(z_j | parents) = N(loc + Σ_p coeff_p · z_p, scale²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentProposal {
    pub loc: f64,
    pub scale: f64,
    pub parents: Vec<usize>,
    pub coeffs: Vec<f64>,
}

impl LatentProposal {
    pub fn marginal(loc: f64, scale: f64) -> Self {
        Self {
            loc,
            scale,
            parents: Vec::new(),
            coeffs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSpec {
    kind: ProposalKind,
    pairing: Pairing,
    latents: Vec<LatentProposal>,
    order: Vec<usize>,
}

impl ProposalSpec {
    /// Independent `N(loc_j, scale_j²)` per latent.
    pub fn factorised(params: &[(f64, f64)]) -> Result<Self, ModelError> {
        let latents = params.iter().map(|&(m, s)| LatentProposal::marginal(m, s)).collect();
        Self::build(ProposalKind::Factorised, Pairing::Diagonal, latents)
    }

    /// Conditional proposals with mixture pairing; parent links must form a DAG.
    pub fn conditional(latents: Vec<LatentProposal>) -> Result<Self, ModelError> {
        Self::build(ProposalKind::PriorConditional, Pairing::Mixture, latents)
    }

    pub fn with_pairing(&self, pairing: Pairing) -> Self {
        Self {
            pairing,
            ..self.clone()
        }
    }

    fn build(kind: ProposalKind, pairing: Pairing, latents: Vec<LatentProposal>) -> Result<Self, ModelError> {
        let n = latents.len();
        for (j, l) in latents.iter().enumerate() {
            if !(l.scale > 0.0 && l.scale.is_finite()) {
                return Err(ModelError::BadScale { latent: j, scale: l.scale });
            }
            if !l.loc.is_finite() {
                return Err(ModelError::NonFinite(l.loc));
            }
            if l.parents.len() != l.coeffs.len() {
                return Err(ModelError::CoefficientCount {
                    node: j,
                    parents: l.parents.len(),
                    coeffs: l.coeffs.len(),
                });
            }
            if let Some(&parent) = l.parents.iter().find(|&&p| p >= n) {
                return Err(ModelError::UnknownProposalParent { latent: j, parent });
            }
        }
        let order = topological_order(&latents)?;
        Ok(Self {
            kind,
            pairing,
            latents,
            order,
        })
    }

    pub fn kind(&self) -> ProposalKind {
        self.kind
    }

    pub fn pairing(&self) -> Pairing {
        self.pairing
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latents(&self) -> &[LatentProposal] {
        &self.latents
    }

    /// Latents in an order where proposal parents come first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Flat parameter vector `[loc_0, scale_0, loc_1, scale_1, ...]`.
    pub fn params(&self) -> Vec<f64> {
        self.latents.iter().flat_map(|l| [l.loc, l.scale]).collect()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self, ModelError> {
        if params.len() != 2 * self.latents.len() {
            return Err(ModelError::SizeMismatch {
                what: "proposal parameters",
                expected: 2 * self.latents.len(),
                found: params.len(),
            });
        }
        let mut latents = self.latents.clone();
        for (l, p) in latents.iter_mut().zip(params.chunks(2)) {
            l.loc = p[0];
            l.scale = p[1];
        }
        Self::build(self.kind, self.pairing, latents)
    }

    fn check_counts(&self, counts: &[usize]) -> Result<(), ModelError> {
        if counts.len() != self.latents.len() {
            return Err(ModelError::SizeMismatch {
                what: "per-latent sample counts",
                expected: self.latents.len(),
                found: counts.len(),
            });
        }
        for (j, l) in self.latents.iter().enumerate() {
            if counts[j] == 0 {
                return Err(ModelError::ZeroSamples { latent: j });
            }
            // Diagonal pairing ties a latent to its parents; either pairing
            // ties a latent's parents to each other.
            let reference = match self.pairing {
                Pairing::Diagonal => Some(j),
                Pairing::Mixture => l.parents.first().copied(),
            };
            if let Some(r) = reference {
                if let Some(&p) = l.parents.iter().find(|&&p| counts[p] != counts[r]) {
                    return Err(ModelError::UnpairedCounts {
                        latent: j,
                        parent: p,
                        expected: counts[r],
                        found: counts[p],
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of parent samples each draw of latent `j` may attach to.
    fn parent_count(&self, j: usize, counts: &[usize]) -> Option<usize> {
        self.latents[j].parents.first().map(|&p| counts[p])
    }

    /// Mean of latent `j` given parent draw `a` (the same index in every parent).
    pub fn mean(&self, j: usize, values: &[Vec<f64>], a: usize) -> f64 {
        let l = &self.latents[j];
        l.loc + l.parents.iter().zip(&l.coeffs).map(|(&p, c)| c * values[p][a]).sum::<f64>()
    }

    /// The parent index each draw conditions on: `k` itself under diagonal
    /// pairing or for latents without parents, a uniform choice under mixture
    /// pairing (keyed by seed, latent and draw).
    pub fn ancestors(&self, counts: &[usize], seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
        self.check_counts(counts)?;
        Ok((0..self.latents.len())
            .map(|j| match (self.pairing, self.parent_count(j, counts)) {
                (Pairing::Mixture, Some(m)) => (0..counts[j])
                    .map(|k| cell(seed, ancestor_stream(j), k as u64).random_range(0..m))
                    .collect(),
                _ => (0..counts[j]).collect(),
            })
            .collect())
    }

    /// Maps standard-normal noise to samples:
    /// `z_j^k = mean_j(ancestor_j^k) + scale_j · ε_j^k`.
    pub fn reparameterise(&self, eps: &[Vec<f64>], ancestors: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let counts: Vec<usize> = eps.iter().map(Vec::len).collect();
        self.check_counts(&counts)?;
        let mut values: Vec<Vec<f64>> = counts.iter().map(|&k| vec![0.0; k]).collect();
        for &j in &self.order {
            for k in 0..counts[j] {
                values[j][k] = self.mean(j, &values, ancestors[j][k]) + self.latents[j].scale * eps[j][k];
            }
        }
        Ok(values)
    }

    /// `log Q(z_j^k | parent samples)` for every latent and draw.
    pub fn log_density(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        let counts: Vec<usize> = values.iter().map(Vec::len).collect();
        self.check_counts(&counts)?;
        Ok((0..self.latents.len())
            .map(|j| {
                let s = self.latents[j].scale;
                match (self.pairing, self.parent_count(j, &counts)) {
                    (Pairing::Mixture, Some(m)) => {
                        let means: Vec<f64> = (0..m).map(|a| self.mean(j, values, a)).collect();
                        let ln_m = (m as f64).ln();
                        let mut terms = vec![0.0; m];
                        values[j]
                            .iter()
                            .map(|&z| {
                                for (t, &mu) in terms.iter_mut().zip(&means) {
                                    *t = normal_log_density(z, mu, s);
                                }
                                logsumexp(&terms) - ln_m
                            })
                            .collect()
                    }
                    _ => (0..counts[j])
                        .map(|k| normal_log_density(values[j][k], self.mean(j, values, k), s))
                        .collect(),
                }
            })
            .collect())
    }
}

fn topological_order(latents: &[LatentProposal]) -> Result<Vec<usize>, ModelError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = latents.len();
    let mut mark = vec![Mark::New; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // Iterative depth-first search over parent links.
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Active;
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if let Some(&p) = latents[v].parents.get(*next) {
                *next += 1;
                match mark[p] {
                    Mark::New => {
                        mark[p] = Mark::Active;
                        stack.push((p, 0));
                    }
                    Mark::Active => return Err(ModelError::ProposalCycle(p)),
                    Mark::Done => {}
                }
            } else {
                mark[v] = Mark::Done;
                order.push(v);
                stack.pop();
            }
        }
    }
    Ok(order)
}

/// Samples together with the noise and ancestor choices that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSamples {
    pub noise: Vec<Vec<f64>>,
    pub ancestors: Vec<Vec<usize>>,
    pub samples: LatentSamples<f64>,
}

/// Draws `counts[j]` samples of each latent from `proposal` under `seed` and
/// evaluates their proposal log-densities.
pub fn sample_latents(
    net: &GaussianNet,
    proposal: &ProposalSpec,
    counts: &[usize],
    seed: u64,
) -> Result<GaussianSamples, ModelError> {
    if proposal.len() != net.num_latents() {
        return Err(ModelError::SizeMismatch {
            what: "proposal latents",
            expected: net.num_latents(),
            found: proposal.len(),
        });
    }
    proposal.check_counts(counts)?;
    let noise = draw_noise(counts, seed);
    let ancestors = proposal.ancestors(counts, seed)?;
    let values = proposal.reparameterise(&noise, &ancestors)?;
    let log_q = proposal.log_density(&values)?;
    Ok(GaussianSamples {
        noise,
        ancestors,
        samples: LatentSamples { values, log_q },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GaussianChain, HierarchicalGaussian};

    #[test]
    fn detects_cycles() {
        let a = LatentProposal {
            loc: 0.0,
            scale: 1.0,
            parents: vec![1],
            coeffs: vec![1.0],
        };
        let b = LatentProposal {
            parents: vec![0],
            ..a.clone()
        };
        assert!(matches!(ProposalSpec::conditional(vec![a, b]), Err(ModelError::ProposalCycle(_))));
    }

    #[test]
    fn order_puts_parents_first() {
        let child = LatentProposal {
            loc: 0.0,
            scale: 1.0,
            parents: vec![2],
            coeffs: vec![1.0],
        };
        let q = ProposalSpec::conditional(vec![child.clone(), LatentProposal::marginal(0.0, 1.0), LatentProposal {
            parents: vec![1],
            ..child
        }])
        .unwrap();
        let pos = |j| q.order().iter().position(|&x| x == j).unwrap();
        assert!(pos(1) < pos(2) && pos(2) < pos(0));
    }

    #[test]
    fn params_round_trip() {
        let q = HierarchicalGaussian::new(vec![1.0, 2.0]).unwrap().proposal();
        let p = q.params();
        assert_eq!(p.len(), 6);
        assert_eq!(q.with_params(&p).unwrap(), q);
        assert!(q.with_params(&[0.0; 6]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_checks_counts() {
        let m = GaussianChain::new(3, 0.0).unwrap();
        let a = sample_latents(&m.net(), &m.prior_proposal(), &[4, 4, 4], 11).unwrap();
        let b = sample_latents(&m.net(), &m.prior_proposal(), &[4, 4, 4], 11).unwrap();
        assert_eq!(a, b);
        let diagonal = m.prior_proposal().with_pairing(Pairing::Diagonal);
        assert!(matches!(
            sample_latents(&m.net(), &diagonal, &[4, 3, 4], 11),
            Err(ModelError::UnpairedCounts { .. })
        ));
        assert!(sample_latents(&m.net(), &m.prior_proposal(), &[4, 3, 4], 11).is_ok());
        assert!(sample_latents(&m.net(), &m.factorised_proposal(), &[4, 3, 4], 11).is_ok());
        assert!(matches!(
            sample_latents(&m.net(), &m.factorised_proposal(), &[4, 0, 4], 11),
            Err(ModelError::ZeroSamples { latent: 1 })
        ));
    }

    #[test]
    fn conditional_draws_follow_their_ancestor() {
        let m = GaussianChain::new(2, 0.0).unwrap();
        let sd = 0.5f64.sqrt();
        for pairing in [Pairing::Diagonal, Pairing::Mixture] {
            let q = m.prior_proposal().with_pairing(pairing);
            let s = sample_latents(&m.net(), &q, &[3, 3], 5).unwrap();
            for k in 0..3 {
                let a = s.ancestors[1][k];
                if pairing == Pairing::Diagonal {
                    assert_eq!(a, k);
                }
                let expected = s.samples.values[0][a] + sd * s.noise[1][k];
                assert!((s.samples.values[1][k] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mixture_density_averages_over_parent_samples() {
        let m = GaussianChain::new(2, 0.0).unwrap();
        let q = m.prior_proposal();
        let values = vec![vec![0.1, -0.4, 0.9], vec![0.3, 0.0]];
        let lq = q.log_density(&values).unwrap();
        let sd = 0.5f64.sqrt();
        for (k, &z) in values[1].iter().enumerate() {
            let direct = values[0].iter().map(|&p| normal_log_density(z, p, sd).exp()).sum::<f64>() / 3.0;
            assert!((lq[1][k] - direct.ln()).abs() < 1e-14);
        }
        assert!((lq[0][2] - normal_log_density(0.9, 0.0, sd)).abs() < 1e-15);
    }
}

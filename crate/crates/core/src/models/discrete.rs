//! Discrete directed models given by conditional probability tables.
//!
//! Tables are stored row-major over the parents' values (in listed order)
//! with the node's own value varying fastest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::factorgraph::{DirectedModel, LatentSamples, VariableKind};
use crate::logtensor::logsumexp;

use super::ModelError;

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteNode {
    pub parents: Vec<usize>,
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObservation {
    pub parents: Vec<usize>,
    pub support: usize,
    pub table: Vec<f64>,
    pub value: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    supports: Vec<usize>,
    latents: Vec<DiscreteNode>,
    observations: Vec<DiscreteObservation>,
    log_latent: Vec<Vec<f64>>,
    log_observed: Vec<Vec<f64>>,
}

fn check_table(node: usize, table: &[f64], rows: usize, support: usize) -> Result<(), ModelError> {
    if table.len() != rows * support {
        return Err(ModelError::TableShape {
            node,
            expected: rows * support,
            found: table.len(),
        });
    }
    for (row, r) in table.chunks(support).enumerate() {
        let sum: f64 = r.iter().sum();
        if r.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(ModelError::TableRow { node, row, sum });
        }
    }
    Ok(())
}

fn row_index(parents: &[usize], supports: &[usize], values: &[usize]) -> usize {
    parents.iter().zip(values).fold(0, |acc, (&p, &v)| acc * supports[p] + v)
}

impl DiscreteModel {
    pub fn new(
        supports: Vec<usize>,
        latents: Vec<DiscreteNode>,
        observations: Vec<DiscreteObservation>,
    ) -> Result<Self, ModelError> {
        if supports.is_empty() {
            return Err(ModelError::Empty("latent"));
        }
        if latents.len() != supports.len() {
            return Err(ModelError::SizeMismatch {
                what: "latent tables",
                expected: supports.len(),
                found: latents.len(),
            });
        }
        let n = supports.len();
        for (j, node) in latents.iter().enumerate() {
            if supports[j] == 0 {
                return Err(ModelError::ZeroSamples { latent: j });
            }
            if let Some(&parent) = node.parents.iter().find(|&&p| p >= j) {
                return Err(ModelError::NotTopological { node: j, parent });
            }
            let rows = node.parents.iter().map(|&p| supports[p]).product();
            check_table(j, &node.table, rows, supports[j])?;
        }
        for (o, obs) in observations.iter().enumerate() {
            if let Some(&parent) = obs.parents.iter().find(|&&p| p >= n) {
                return Err(ModelError::NotTopological { node: n + o, parent });
            }
            if obs.value >= obs.support {
                return Err(ModelError::ObservedValue {
                    node: o,
                    value: obs.value,
                    support: obs.support,
                });
            }
            let rows = obs.parents.iter().map(|&p| supports[p]).product();
            check_table(n + o, &obs.table, rows, obs.support)?;
        }
        let log = |t: &[f64]| t.iter().map(|p| p.ln()).collect::<Vec<_>>();
        let log_latent = latents.iter().map(|l| log(&l.table)).collect();
        let log_observed = observations.iter().map(|o| log(&o.table)).collect();
        Ok(Self {
            supports,
            latents,
            observations,
            log_latent,
            log_observed,
        })
    }

    /// A random model with `1..=max_latents` latents of support `1..=max_support`,
    /// each with up to two earlier parents, and one or two observations with
    /// up to three latent parents.
    pub fn random(seed: u64, max_latents: usize, max_support: usize) -> Self {
        assert!(max_latents >= 1 && max_support >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=max_latents);
        let supports: Vec<usize> = (0..n).map(|_| rng.random_range(1..=max_support)).collect();

        let pick_parents = |rng: &mut ChaCha8Rng, below: usize, max: usize| -> Vec<usize> {
            let mut ps: Vec<usize> = (0..below).filter(|_| rng.random_bool(0.5)).collect();
            while ps.len() > max {
                ps.remove(rng.random_range(0..ps.len()));
            }
            ps
        };
        let random_table = |rng: &mut ChaCha8Rng, rows: usize, support: usize| -> Vec<f64> {
            let mut t = Vec::with_capacity(rows * support);
            for _ in 0..rows {
                let w: Vec<f64> = (0..support).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                t.extend(w.iter().map(|x| x / s));
            }
            t
        };

        let latents = (0..n)
            .map(|j| {
                let parents = pick_parents(&mut rng, j, 2);
                let rows = parents.iter().map(|&p| supports[p]).product();
                let table = random_table(&mut rng, rows, supports[j]);
                DiscreteNode { parents, table }
            })
            .collect();
        let n_obs = rng.random_range(1..=2);
        let observations = (0..n_obs)
            .map(|_| {
                let mut parents = pick_parents(&mut rng, n, 3);
                if parents.is_empty() {
                    parents.push(rng.random_range(0..n));
                }
                let support = rng.random_range(2..=3);
                let rows = parents.iter().map(|&p| supports[p]).product();
                let table = random_table(&mut rng, rows, support);
                let value = rng.random_range(0..support);
                DiscreteObservation {
                    parents,
                    support,
                    table,
                    value,
                }
            })
            .collect();
        Self::new(supports, latents, observations).expect("random tables are normalised")
    }

    pub fn supports(&self) -> &[usize] {
        &self.supports
    }

    pub fn latents(&self) -> &[DiscreteNode] {
        &self.latents
    }

    pub fn observations(&self) -> &[DiscreteObservation] {
        &self.observations
    }

    /// `log Σ_z P(x, z)` over every joint latent configuration.
    pub fn exact_log_evidence(&self) -> f64 {
        let n = self.supports.len();
        let total: usize = self.supports.iter().product();
        let mut z = vec![0usize; n];
        let mut terms = Vec::with_capacity(total);
        for _ in 0..total {
            terms.push(self.log_joint(&z));
            for d in (0..n).rev() {
                z[d] += 1;
                if z[d] < self.supports[d] {
                    break;
                }
                z[d] = 0;
            }
        }
        logsumexp(&terms)
    }

    /// One "sample" per support value under a uniform proposal.
    pub fn stratified_samples(&self) -> LatentSamples<usize> {
        LatentSamples {
            values: self.supports.iter().map(|&s| (0..s).collect()).collect(),
            log_q: self.supports.iter().map(|&s| vec![-(s as f64).ln(); s]).collect(),
        }
    }
}

impl DirectedModel for DiscreteModel {
    type Value = usize;

    fn num_latents(&self) -> usize {
        self.supports.len()
    }

    fn latent_parents(&self, j: usize) -> &[usize] {
        &self.latents[j].parents
    }

    fn log_prior(&self, j: usize, value: usize, parents: &[usize]) -> f64 {
        let row = row_index(&self.latents[j].parents, &self.supports, parents);
        self.log_latent[j][row * self.supports[j] + value]
    }

    fn num_observed(&self) -> usize {
        self.observations.len()
    }

    fn observed_parents(&self, o: usize) -> &[usize] {
        &self.observations[o].parents
    }

    fn log_likelihood(&self, o: usize, parents: &[usize]) -> f64 {
        let obs = &self.observations[o];
        let row = row_index(&obs.parents, &self.supports, parents);
        self.log_observed[o][row * obs.support + obs.value]
    }

    fn variable_kind(&self, _j: usize) -> VariableKind {
        VariableKind::EnumeratedDiscrete
    }
}

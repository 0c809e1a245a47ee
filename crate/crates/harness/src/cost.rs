//! Timing of TMC on a layered chain whose conditionals come from a small
//! neural network: `z_0 ~ N(0, I)`, `z_l | z_{l-1} ~ N(μ_l(z_{l-1}), diag σ_l²(z_{l-1}))`
//! and `x | z_last ~ N(μ_x(z_last), diag σ_x²(z_last))`, each `(μ, log σ)` a
//! fixed random two-layer perceptron. The network runs once per parent
//! sample (cost linear in K); the pairwise densities cost K² but are cheap.

use std::path::Path;
use std::time::Instant;

use tmc_core::factorgraph::{FactorGraph, VariableKind};
use tmc_core::logtensor::{AxisId, LogTensor};
use tmc_core::models::normal_log_density;
use tmc_core::rng::standard_normal;

use crate::error::HarnessError;

pub const DEFAULT_HIDDEN: usize = 512;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `x ↦ W₂ tanh(W₁ x + b₁) + b₂`, split into a mean and a bounded log-sd.
#[derive(Debug, Clone)]
struct Perceptron {
    d_in: usize,
    d_out: usize,
    hidden: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl Perceptron {
    fn random(d_in: usize, d_out: usize, hidden: usize, seed: u64, stream: u64) -> Self {
        let mut i = 0u64;
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    i += 1;
                    scale * standard_normal(seed, stream, i)
                })
                .collect()
        };
        Self {
            d_in,
            d_out,
            hidden,
            w1: draw(hidden * d_in, (1.0 / d_in as f64).sqrt()),
            b1: draw(hidden, 0.1),
            w2: draw(2 * d_out * hidden, (1.0 / hidden as f64).sqrt()),
            b2: draw(2 * d_out, 0.1),
        }
    }

    /// Writes the mean into `mean` and `1/σ²` into `prec`; returns `-Σ log σ - d/2 log 2π`.
    fn apply(&self, x: &[f64], h: &mut [f64], mean: &mut [f64], prec: &mut [f64]) -> f64 {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.d_in..(j + 1) * self.d_in];
            *hj = (self.b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        let mut log_norm = -(self.d_out as f64) * HALF_LN_2PI;
        for o in 0..2 * self.d_out {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let v = self.b2[o] + row.iter().zip(h.iter()).map(|(w, a)| w * a).sum::<f64>();
            if o < self.d_out {
                mean[o] = v;
            } else {
                let log_sd = 0.5 * v.tanh();
                prec[o - self.d_out] = (-2.0 * log_sd).exp();
                log_norm -= log_sd;
            }
        }
        log_norm
    }
}

/// The layered chain with latent layer widths `widths` and an observation as
/// wide as the last layer.
#[derive(Debug, Clone)]
pub struct CostModel {
    widths: Vec<usize>,
    nets: Vec<Perceptron>,
    x: Vec<f64>,
}

impl CostModel {
    pub fn new(widths: &[usize], hidden: usize, seed: u64) -> Result<Self, HarnessError> {
        if widths.is_empty() || hidden == 0 || widths.contains(&0) {
            return Err(HarnessError::BadWidth);
        }
        let last = *widths.last().unwrap();
        let mut nets: Vec<Perceptron> = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| Perceptron::random(w[0], w[1], hidden, seed, l as u64))
            .collect();
        nets.push(Perceptron::random(last, last, hidden, seed, widths.len() as u64));
        let x = (0..last).map(|i| standard_normal(seed, u64::MAX, i as u64)).collect();
        Ok(Self {
            widths: widths.to_vec(),
            nets,
            x,
        })
    }

    /// `k` draws per layer from `N(0, I)`, row-major, with their log-densities.
    pub fn sample(&self, k: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        self.widths
            .iter()
            .enumerate()
            .map(|(l, &d)| {
                let z: Vec<f64> = (0..k * d).map(|i| standard_normal(seed, l as u64, i as u64)).collect();
                let log_q = z
                    .chunks(d)
                    .map(|v| v.iter().map(|&e| normal_log_density(e, 0.0, 1.0)).sum())
                    .collect();
                (z, log_q)
            })
            .collect()
    }

    /// Builds every factor and eliminates all sample indices: the TMC log-evidence estimate.
    pub fn tmc(&self, samples: &[(Vec<f64>, Vec<f64>)], k: usize) -> Result<f64, HarnessError> {
        let layers = self.widths.len();
        let mut g = FactorGraph::new();
        for l in 0..layers {
            g.add_variable(AxisId(l as u32), k, VariableKind::SampleIndex)?;
        }
        let (z0, q0) = &samples[0];
        let d0 = self.widths[0];
        let root: Vec<f64> = (0..k)
            .map(|i| z0[i * d0..(i + 1) * d0].iter().map(|&v| normal_log_density(v, 0.0, 1.0)).sum::<f64>() - q0[i])
            .collect();
        g.add_factor(LogTensor::new(vec![(AxisId(0), k)], root).map_err(tmc_core::factorgraph::GraphError::from)?)?;

        for (l, net) in self.nets.iter().enumerate() {
            let (zp, _) = &samples[l];
            let mut h = vec![0.0; net.hidden];
            let mut mean = vec![0.0; k * net.d_out];
            let mut prec = vec![0.0; k * net.d_out];
            let mut norm = vec![0.0; k];
            for a in 0..k {
                let span = a * net.d_out..(a + 1) * net.d_out;
                norm[a] = net.apply(
                    &zp[a * net.d_in..(a + 1) * net.d_in],
                    &mut h,
                    &mut mean[span.clone()],
                    &mut prec[span],
                );
            }
            let density = |v: &[f64], a: usize| -> f64 {
                let m = &mean[a * net.d_out..(a + 1) * net.d_out];
                let p = &prec[a * net.d_out..(a + 1) * net.d_out];
                norm[a] - 0.5 * v.iter().zip(m).zip(p).map(|((v, m), p)| (v - m) * (v - m) * p).sum::<f64>()
            };
            let parent = AxisId(l as u32);
            let tensor = if l + 1 < layers {
                let (zc, qc) = &samples[l + 1];
                let d = net.d_out;
                let mut data = Vec::with_capacity(k * k);
                for c in 0..k {
                    let v = &zc[c * d..(c + 1) * d];
                    data.extend((0..k).map(|a| density(v, a) - qc[c]));
                }
                LogTensor::new(vec![(AxisId(l as u32 + 1), k), (parent, k)], data)
            } else {
                LogTensor::new(vec![(parent, k)], (0..k).map(|a| density(&self.x, a)).collect())
            };
            g.add_factor(tensor.map_err(tmc_core::factorgraph::GraphError::from)?)?;
        }
        Ok(g.evaluate(&g.greedy_order())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostRecord {
    pub k: usize,
    pub elapsed_ns: u64,
}

/// Median wall-clock time of factor construction plus elimination for each K,
/// over `reps` repetitions with fresh samples (drawn outside the timer).
pub fn run_cost_benchmark(
    widths: &[usize],
    ks: &[usize],
    reps: usize,
    hidden: usize,
    seed: u64,
) -> Result<Vec<CostRecord>, HarnessError> {
    let model = CostModel::new(widths, hidden, seed)?;
    let reps = reps.max(1);
    ks.iter()
        .map(|&k| {
            if k == 0 {
                return Err(HarnessError::BadWidth);
            }
            let mut times = Vec::with_capacity(reps);
            for r in 0..reps {
                let samples = model.sample(k, seed.wrapping_add(r as u64));
                let start = Instant::now();
                let v = model.tmc(&samples, k)?;
                times.push(start.elapsed().as_nanos() as u64);
                std::hint::black_box(v);
            }
            times.sort_unstable();
            Ok(CostRecord {
                k,
                elapsed_ns: times[reps / 2],
            })
        })
        .collect()
}

pub fn write_cost_csv(path: &Path, records: &[CostRecord]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(["K", "elapsed_ns"])?;
    for r in records {
        out.write_record([r.k.to_string(), r.elapsed_ns.to_string()])?;
    }
    out.flush().map_err(|e| HarnessError::io(path, e))
}

//! Independent reference computations: exhaustive enumeration of factor
//! products and per-weight gradient formulas with analytic derivatives of
//! the linear-Gaussian log-joint.

use tmc_core::factorgraph::DirectedModel;
use tmc_core::gradients::GradEstimatorKind;
use tmc_core::logtensor::{logsumexp, LogTensor};
use tmc_core::models::{normal_log_density, GaussianNet, ProposalSpec};

/// `log (1/∏K) Σ_{k} ∏_f exp(f[k])` by visiting every index tuple. Axis `i`
/// has cardinality `cards[i]`; factors name axes by `AxisId(i)`.
pub fn enumerate_factors(cards: &[usize], factors: &[LogTensor]) -> f64 {
    let total: usize = cards.iter().product();
    let mut idx = vec![0usize; cards.len()];
    let mut local = Vec::new();
    let terms: Vec<f64> = (0..total)
        .map(|flat| {
            let mut r = flat;
            for (i, &c) in cards.iter().enumerate().rev() {
                idx[i] = r % c;
                r /= c;
            }
            factors
                .iter()
                .map(|t| {
                    local.clear();
                    local.extend(t.axis_ids().map(|a| idx[a.0 as usize]));
                    t.get(&local)
                })
                .sum()
        })
        .collect();
    logsumexp(&terms) - (total as f64).ln()
}

/// `∂ log P(x, z) / ∂z_j` for every latent.
pub fn grad_log_joint(net: &GaussianNet, z: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; z.len()];
    let mut pv = Vec::new();
    let mut push = |g: &mut [f64], value: f64, c: &tmc_core::models::LinearGaussian, own: Option<usize>| {
        pv.clear();
        pv.extend(c.parents.iter().map(|&p| z[p]));
        let r = (value - c.mean(&pv)) / c.variance;
        if let Some(j) = own {
            g[j] -= r;
        }
        for (&p, &coef) in c.parents.iter().zip(&c.coeffs) {
            g[p] += coef * r;
        }
    };
    for (j, l) in net.latents().iter().enumerate() {
        push(&mut g, z[j], l, Some(j));
    }
    for o in net.observations() {
        push(&mut g, o.value, &o.conditional, None);
    }
    g
}

/// `∂ log P(x, z) / ∂b_j` for each latent offset `b_j`.
pub fn grad_log_joint_offsets(net: &GaussianNet, z: &[f64]) -> Vec<f64> {
    net.latents()
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let pv: Vec<f64> = l.parents.iter().map(|&p| z[p]).collect();
            (z[j] - l.mean(&pv)) / l.variance
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectGradients {
    pub value: f64,
    pub recognition: Vec<f64>,
    pub generative: Vec<f64>,
}

/// Gradients of `log (1/M) Σ_t w_t` by looping over the weights `t`, each a
/// choice of draw per latent, with `z_j = loc_j + scale_j ε_j`:
///
/// - reparam: `Σ_t w̃_t ∂ log w_t / ∂φ`,
/// - STL: the same with the proposal's parameters held inside `log Q`,
/// - DReGs: `Σ_t w̃_t² ∂ log w_t / ∂z · ∂z / ∂φ`,
///
/// where `w̃_t = w_t / Σ w`. The generative gradient is `Σ_t w̃_t ∂ log P / ∂b`.
pub fn direct_gradients(
    net: &GaussianNet,
    proposal: &ProposalSpec,
    eps: &[Vec<f64>],
    tuples: &[Vec<usize>],
    kind: GradEstimatorKind,
) -> DirectGradients {
    let q = proposal.latents();
    let n = q.len();
    let z_of = |t: &[usize]| -> Vec<f64> { (0..n).map(|j| q[j].loc + q[j].scale * eps[j][t[j]]).collect() };
    let log_w: Vec<f64> = tuples
        .iter()
        .map(|t| {
            let z = z_of(t);
            net.log_joint(&z) - (0..n).map(|j| normal_log_density(z[j], q[j].loc, q[j].scale)).sum::<f64>()
        })
        .collect();
    let lse = logsumexp(&log_w);
    let mut recognition = vec![0.0; 2 * n];
    let mut generative = vec![0.0; n];
    for (t, lw) in tuples.iter().zip(&log_w) {
        let wt = (lw - lse).exp();
        let z = z_of(t);
        let dp = grad_log_joint(net, &z);
        let db = grad_log_joint_offsets(net, &z);
        for j in 0..n {
            let (e, s) = (eps[j][t[j]], q[j].scale);
            // Pathwise derivative through z_j with log Q's parameters held.
            let path = dp[j] + e / s;
            let (d_loc, d_scale) = match kind {
                // Q's explicit parameter dependence cancels ε/s and adds 1/s.
                GradEstimatorKind::Reparam => (wt * dp[j], wt * (dp[j] * e + 1.0 / s)),
                GradEstimatorKind::Stl => (wt * path, wt * path * e),
                GradEstimatorKind::Dregs => (wt * wt * path, wt * wt * path * e),
            };
            recognition[2 * j] += d_loc;
            recognition[2 * j + 1] += d_scale;
            generative[j] += wt * db[j];
        }
    }
    DirectGradients {
        value: lse - (tuples.len() as f64).ln(),
        recognition,
        generative,
    }
}

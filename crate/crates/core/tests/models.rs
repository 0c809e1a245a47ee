//! Model factors, proposal sampling moments and closed-form evidence.

use proptest::prelude::*;
use tmc_core::factorgraph::DirectedModel;
use tmc_core::models::{
    log_joint_factors, normal_log_density, sample_latents, DiscreteModel, GaussianChain, HierarchicalGaussian,
    ProposalSpec,
};

#[test]
fn discrete_latent_factor_rows_are_log_cpt_plus_log_support() {
    for seed in 0..20 {
        let m = DiscreteModel::random(seed, 5, 4);
        let s = m.stratified_samples();
        let factors = log_joint_factors(&m, &s).unwrap();
        let sup = m.supports();
        for (j, node) in m.latents().iter().enumerate() {
            let t = &factors[j];
            let rows: usize = node.parents.iter().map(|&p| sup[p]).product();
            for row in 0..rows {
                // Decode the row into parent values, last parent fastest.
                let mut r = row;
                let mut pv = vec![0; node.parents.len()];
                for (i, &p) in node.parents.iter().enumerate().rev() {
                    pv[i] = r % sup[p];
                    r /= sup[p];
                }
                for k in 0..sup[j] {
                    let mut idx = vec![k];
                    idx.extend(&pv);
                    let want = node.table[row * sup[j] + k].ln() + (sup[j] as f64).ln();
                    assert!((t.get(&idx) - want).abs() < 1e-12);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn single_sample_factors_sum_to_log_weight(data in proptest::collection::vec(-3.0f64..3.0, 1..6), seed in any::<u64>()) {
        let m = HierarchicalGaussian::new(data).unwrap();
        let net = m.net();
        let n = net.num_latents();
        let s = sample_latents(&net, &m.proposal(), &vec![1; n], seed).unwrap().samples;
        let total: f64 = log_joint_factors(&net, &s).unwrap().iter().map(|t| t.data().iter().sum::<f64>()).sum();
        let z: Vec<f64> = s.values.iter().map(|v| v[0]).collect();
        let want = net.log_joint(&z) - s.log_q.iter().map(|v| v[0]).sum::<f64>();
        prop_assert!((total - want).abs() < 1e-10);
    }

    #[test]
    fn chain_single_sample_factors_sum_to_log_weight(n in 1usize..8, x in -3.0f64..3.0, seed in any::<u64>()) {
        let m = GaussianChain::new(n, x).unwrap();
        let net = m.net();
        let s = sample_latents(&net, &m.prior_proposal(), &vec![1; n], seed).unwrap().samples;
        let total: f64 = log_joint_factors(&net, &s).unwrap().iter().map(|t| t.data().iter().sum::<f64>()).sum();
        let z: Vec<f64> = s.values.iter().map(|v| v[0]).collect();
        // With the prior as proposal the weight is the likelihood alone.
        prop_assert!((total - normal_log_density(x, z[n - 1], 1.0)).abs() < 1e-10);
    }
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn factorised_proposal_samples_have_requested_moments() {
    let m = GaussianChain::new(2, 0.0).unwrap();
    let q = ProposalSpec::factorised(&[(1.5, 0.5), (-2.0, 2.0)]).unwrap();
    let s = sample_latents(&m.net(), &q, &[40_000, 40_000], 3).unwrap().samples;
    let (mu0, var0) = moments(&s.values[0]);
    let (mu1, var1) = moments(&s.values[1]);
    assert!((mu0 - 1.5).abs() < 0.01 && (var0 - 0.25).abs() < 0.01);
    assert!((mu1 + 2.0).abs() < 0.04 && (var1 - 4.0).abs() < 0.15);
    for (j, (loc, sd)) in [(1.5, 0.5), (-2.0, 2.0)].into_iter().enumerate() {
        for (z, lq) in s.values[j].iter().zip(&s.log_q[j]).take(100) {
            assert!((lq - normal_log_density(*z, loc, sd)).abs() < 1e-12);
        }
    }
}

#[test]
fn conditional_proposal_samples_follow_prior_marginals() {
    // Under the prior proposal z_j has marginal N(0, (j + 1) / N).
    let m = GaussianChain::new(4, 0.0).unwrap();
    let s = sample_latents(&m.net(), &m.prior_proposal(), &[8_000; 4], 11).unwrap().samples;
    for j in 0..4 {
        let (mu, var) = moments(&s.values[j]);
        let want = (j + 1) as f64 / 4.0;
        assert!(mu.abs() < 0.05, "latent {j} mean {mu}");
        assert!((var - want).abs() < 0.1 * want, "latent {j} variance {var} vs {want}");
    }
}

/// `∫ N(θ; 0, 1) ∏_i N(x_i; θ, 2) dθ` by the trapezoid rule.
fn hierarchical_evidence_by_quadrature(x: &[f64]) -> f64 {
    let (lo, hi, steps) = (-12.0, 12.0, 48_000);
    let h = (hi - lo) / steps as f64;
    let mut total = 0.0;
    for i in 0..=steps {
        let theta = lo + h * i as f64;
        let log_f = normal_log_density(theta, 0.0, 1.0)
            + x.iter().map(|&xi| normal_log_density(xi, theta, 2f64.sqrt())).sum::<f64>();
        let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
        total += w * log_f.exp();
    }
    (total * h).ln()
}

#[test]
fn hierarchical_evidence_matches_quadrature() {
    for n in 1..=6 {
        let m = HierarchicalGaussian::simulate(n, 40 + n as u64).unwrap();
        let got = m.exact_log_evidence().unwrap();
        let want = hierarchical_evidence_by_quadrature(m.observations());
        assert!((got - want).abs() < 1e-8, "N={n}: {got} vs {want}");
    }
}

#[test]
fn simulated_data_is_reproducible() {
    let a = HierarchicalGaussian::simulate(8, 9).unwrap();
    let b = HierarchicalGaussian::simulate(8, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, HierarchicalGaussian::simulate(8, 10).unwrap());
    assert_eq!(GaussianChain::simulate(5, 2).unwrap(), GaussianChain::simulate(5, 2).unwrap());
}

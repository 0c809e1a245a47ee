//! Log-domain tensor operations against naive linear-domain arithmetic.

use proptest::prelude::*;
use tmc_core::logtensor::{contract, log_mul, logmmexp, logsumexp, logsumexp_reduce, AxisId, LogTensor};

fn tensor(axes: Vec<(u32, usize)>) -> impl Strategy<Value = LogTensor> {
    let axes: Vec<(AxisId, usize)> = axes.into_iter().map(|(a, n)| (AxisId(a), n)).collect();
    let n: usize = axes.iter().map(|a| a.1).product();
    proptest::collection::vec(-20.0f64..20.0, n).prop_map(move |d| LogTensor::new(axes.clone(), d).unwrap())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn logsumexp_matches_naive_sum(v in proptest::collection::vec(-30.0f64..30.0, 1..20)) {
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!(close(logsumexp(&v), naive));
    }

    #[test]
    fn logsumexp_is_shift_invariant(v in proptest::collection::vec(-5.0f64..5.0, 1..20), c in -700.0f64..700.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!(close(logsumexp(&shifted) - c, logsumexp(&v)));
    }

    #[test]
    fn reduce_matches_naive(t in tensor(vec![(0, 3), (1, 4), (2, 2)]), norm in any::<bool>()) {
        let r = logsumexp_reduce(&t, AxisId(1), norm).unwrap();
        prop_assert_eq!(r.shape(), vec![3, 2]);
        for i in 0..3 {
            for k in 0..2 {
                let s: f64 = (0..4).map(|j| t.get(&[i, j, k]).exp()).sum();
                let want = if norm { (s / 4.0).ln() } else { s.ln() };
                prop_assert!(close(r.get(&[i, k]), want));
            }
        }
    }

    #[test]
    fn log_mul_adds_aligned_entries(a in tensor(vec![(0, 2), (1, 3)]), b in tensor(vec![(2, 4), (0, 2)])) {
        let p = log_mul(&a, &b).unwrap();
        prop_assert_eq!(p.axis_ids().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    prop_assert!(close(p.get(&[i, j, k]), a.get(&[i, j]) + b.get(&[k, i])));
                }
            }
        }
        let q = log_mul(&b, &a).unwrap().permuted(&[AxisId(0), AxisId(1), AxisId(2)]).unwrap();
        prop_assert_eq!(p, q);
    }

    #[test]
    fn logmmexp_matches_naive(x in tensor(vec![(0, 3), (1, 4)]), y in tensor(vec![(2, 5), (1, 4)]), big in -600.0f64..600.0) {
        let xs = x.map(|v| v + big).unwrap();
        let z = logmmexp(&xs, &y, AxisId(1)).unwrap();
        prop_assert_eq!(z.axis_ids().map(|a| a.0).collect::<Vec<_>>(), vec![0, 2]);
        for i in 0..3 {
            for k in 0..5 {
                let s: f64 = (0..4).map(|j| (x.get(&[i, j]) + y.get(&[k, j])).exp()).sum();
                prop_assert!(close(z.get(&[i, k]), s.ln() + big));
            }
        }
    }

    #[test]
    fn contraction_is_independent_of_factor_order(
        a in tensor(vec![(0, 3), (1, 2)]),
        b in tensor(vec![(1, 2), (2, 4)]),
        c in tensor(vec![(3, 2), (1, 2)]),
    ) {
        let ref_axes = [AxisId(0), AxisId(2), AxisId(3)];
        let abc = contract(&[&a, &b, &c], AxisId(1), true).unwrap().permuted(&ref_axes).unwrap();
        let cab = contract(&[&c, &a, &b], AxisId(1), true).unwrap().permuted(&ref_axes).unwrap();
        for (u, v) in abc.data().iter().zip(cab.data()) {
            prop_assert!(close(*u, *v));
        }
        for i in 0..3 {
            for k in 0..4 {
                for l in 0..2 {
                    let s: f64 = (0..2).map(|j| (a.get(&[i, j]) + b.get(&[j, k]) + c.get(&[l, j])).exp()).sum();
                    prop_assert!(close(abc.get(&[i, k, l]), (s / 2.0).ln()));
                }
            }
        }
    }

    #[test]
    fn permutation_round_trips(t in tensor(vec![(0, 2), (1, 3), (2, 4)])) {
        let p = t.permuted(&[AxisId(2), AxisId(0), AxisId(1)]).unwrap();
        prop_assert_eq!(p.get(&[3, 1, 2]), t.get(&[1, 2, 3]));
        prop_assert_eq!(p.permuted(&[AxisId(0), AxisId(1), AxisId(2)]).unwrap(), t);
    }
}

#[test]
fn all_negative_infinity_reduces_to_negative_infinity() {
    let t = LogTensor::new(vec![(AxisId(0), 3)], vec![f64::NEG_INFINITY; 3]).unwrap();
    assert_eq!(logsumexp_reduce(&t, AxisId(0), true).unwrap().value(), Some(f64::NEG_INFINITY));
}

#[test]
fn logmmexp_survives_widely_separated_magnitudes() {
    // Row 0 of x is tiny everywhere except where y is tiny, so the naive
    // shifted product underflows; the exact answer is log 2 - 1000.
    let x = LogTensor::new(vec![(AxisId(0), 1), (AxisId(1), 2)], vec![-1000.0, 0.0]).unwrap();
    let y = LogTensor::new(vec![(AxisId(1), 2), (AxisId(2), 2)], vec![0.0, 0.0, -1000.0, -1000.0]).unwrap();
    let z = logmmexp(&x, &y, AxisId(1)).unwrap();
    for v in z.data() {
        assert!(close(*v, 2f64.ln() - 1000.0), "{v}");
    }
}

//! Binomial tail oracle, counting-function properties and the upper-bound
//! behaviour of the estimate on seeded scenarios.

mod common;

use cascade_core::estimate::{binom_tail, count_function, estimate_failures};
use cascade_core::harness::{preset_table1, run_seed, GenerateSpec, MarketSpec, NetworkSource};
use cascade_core::network::NetworkKind;
use proptest::prelude::*;

use common::binom_enumerate;

const THETAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[test]
fn tail_matches_enumeration() {
    for delta in 0..=12u32 {
        for theta in THETAS {
            for k in -1..=i64::from(delta) {
                let got = binom_tail(u64::from(delta), theta, k);
                let want = binom_enumerate(delta, theta, k);
                assert!(
                    (got - want).abs() <= 1e-12,
                    "delta {delta} theta {theta} k {k}: {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn tail_is_monotone() {
    for delta in 0..=30u64 {
        for (a, theta) in THETAS.iter().enumerate() {
            for k in -1..=delta as i64 {
                let here = binom_tail(delta, *theta, k);
                assert!(binom_tail(delta, *theta, k + 1) >= here - 1e-15);
                if let Some(next) = THETAS.get(a + 1) {
                    assert!(
                        binom_tail(delta, *next, k) <= here + 1e-15,
                        "{delta} {theta} {k} {} {here}",
                        binom_tail(delta, *next, k)
                    );
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn count_function_properties(
        k_hat in prop::collection::vec(-3i64..40, 1..60),
        theta_seed in prop::collection::vec(0.0f64..1.0, 60),
    ) {
        let theta = &theta_seed[..k_hat.len()];
        let f = count_function(&k_hat, theta);
        prop_assert_eq!(f.len(), k_hat.len() + 1);
        prop_assert!(f.windows(2).all(|w| w[0] <= w[1]));
        let est = estimate_failures(&f);
        prop_assert!(f[est] >= est);
        prop_assert!(f.iter().enumerate().skip(est + 1).all(|(tau, &v)| v < tau));
    }
}

#[test]
fn estimate_is_mostly_an_upper_bound() {
    let kinds = [
        NetworkKind::UniformRandom { link_prob: 0.2 },
        NetworkKind::UniformRandom { link_prob: 0.8 },
        NetworkKind::PowerLaw { exponent: 2.1 },
    ];
    let mut above = 0;
    let mut total = 0;
    for kind in kinds {
        let mut cfg = preset_table1();
        cfg.network = NetworkSource::Generate(GenerateSpec {
            kind,
            n: 100,
            weight: None,
            market: MarketSpec::Table1,
        });
        for seed in 100..117 {
            let out = run_seed(&cfg, seed).unwrap();
            if out.summary.estimate.unwrap() >= out.summary.terminal_failures {
                above += 1;
            }
            total += 1;
        }
    }
    assert!(total >= 50);
    assert!(above as f64 >= 0.8 * total as f64, "{above}/{total}");
}

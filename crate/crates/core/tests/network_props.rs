//! Generator output against the structural checks, and file round-trips.

mod common;

use cascade_core::network::{c_hat, generate, FinancialNetwork, NetworkGenSpec};
use cascade_core::numerics::{DenseMatrix, DenseVector};
use proptest::prelude::*;

fn attach_table(spec: &NetworkGenSpec) -> FinancialNetwork {
    let n = spec.n;
    generate(spec).unwrap().attach(
        DenseMatrix::identity(n),
        DenseVector::from_fn(n, |h| 1.0 + 6.0 * h as f64),
        DenseVector::filled(n, 100.0),
        5000.0,
    )
}

#[test]
fn generated_networks_validate() {
    for seed in 0..1000u64 {
        let n = [10, 50, 100][(seed % 3) as usize];
        for spec in [
            NetworkGenSpec::uniform(n, 0.05 + 0.9 * (seed % 7) as f64 / 6.0, seed),
            NetworkGenSpec::power_law(n, 1.5 + (seed % 5) as f64 * 0.4, seed),
        ] {
            let net = attach_table(&spec);
            assert!(net.validate().is_empty(), "seed {seed}: {:?}", net.validate());
            let chat = c_hat(&net).unwrap();
            assert!(chat.diag.iter().all(|&v| v > 0.0), "seed {seed}");
        }
    }
}

#[test]
fn power_law_degrees_are_heavy_tailed() {
    let mut ones = 0usize;
    let mut total = 0usize;
    for seed in 0..50 {
        let sk = generate(&NetworkGenSpec::power_law(100, 2.1, seed)).unwrap();
        let net = attach_table(&NetworkGenSpec::power_law(100, 2.1, seed));
        let deg = net.out_degrees();
        ones += deg.iter().filter(|&&d| d == 1).count();
        total += deg.len();
        assert!((sk.mean_degree - deg.iter().sum::<usize>() as f64 / 100.0).abs() < 1e-12);
    }
    // P(k = 1) = 1 / sum_{k=1}^{99} k^-2.1, about 0.64.
    let frac = ones as f64 / total as f64;
    assert!((0.5..0.7).contains(&frac), "{frac}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn file_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..40, prob in 0.0f64..1.0) {
        let mut net = attach_table(&NetworkGenSpec::uniform(n, prob, seed));
        net.beta = 1.0 / 3.0 + seed as f64 * 1e-7;
        net.v_lo = DenseVector::from_fn(n, |i| (i as f64 + 0.1).sqrt());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.write_file(&path).unwrap();
        let back = FinancialNetwork::read_file(&path).unwrap();
        prop_assert_eq!(back.beta.to_bits(), net.beta.to_bits());
        for i in 0..n {
            prop_assert_eq!(back.v_lo[i].to_bits(), net.v_lo[i].to_bits());
            prop_assert_eq!(back.p[i].to_bits(), net.p[i].to_bits());
            for j in 0..n {
                prop_assert_eq!(back.c[(i, j)].to_bits(), net.c[(i, j)].to_bits());
                prop_assert_eq!(back.d[(i, j)].to_bits(), net.d[(i, j)].to_bits());
            }
        }
    }
}

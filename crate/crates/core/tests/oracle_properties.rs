use noisedp::oracle::{draw_noise, CompareOutcome, Tolerance};
use noisedp::{compare, estimate_profile, AdjacencyParam, Analyzer, AnalyzerConfig, DensitySpec, OracleConfig};
use proptest::prelude::*;

fn oracle(n: usize, seed: u64) -> OracleConfig {
    OracleConfig {
        n_samples: n,
        seed,
        ..OracleConfig::default()
    }
}

#[test]
fn sound_bounds_are_never_contradicted() {
    let cfg = oracle(1_000_000, 11);
    for sigma in [0.1, 0.5, 1.0] {
        let mut specs = Vec::new();
        for b in [0.5, 1.0, 2.0] {
            specs.push(DensitySpec::laplace(0.0, b).unwrap());
        }
        for rho in [0.2, 0.5, 0.9] {
            specs.push(DensitySpec::staircase(rho, 1.0).unwrap());
        }
        for spec in specs {
            let v = Analyzer::new(spec.clone(), AnalyzerConfig::default())
                .unwrap()
                .classify(AdjacencyParam::new(sigma).unwrap());
            let p = estimate_profile(&spec, sigma, &cfg).unwrap();
            let rep = compare(&v, &p, Tolerance::default()).unwrap();
            assert_eq!(rep.outcome, CompareOutcome::Pass, "{} sigma={sigma}: {rep:?}", spec.label());
        }
    }
}

#[test]
fn doubling_samples_moves_eps_hat_within_three_standard_errors() {
    for (spec, sigma) in [
        (DensitySpec::laplace(0.0, 1.0).unwrap(), 1.0),
        (DensitySpec::laplace(0.0, 2.0).unwrap(), 0.5),
        (DensitySpec::staircase(0.5, 1.0).unwrap(), 1.0),
    ] {
        let a = estimate_profile(&spec, sigma, &oracle(500_000, 3)).unwrap();
        let b = estimate_profile(&spec, sigma, &oracle(1_000_000, 3)).unwrap();
        let se = a.eps_stderr.max(b.eps_stderr);
        assert!(
            (a.eps_hat - b.eps_hat).abs() < 3.0 * se,
            "{}: {} vs {} (se {se})",
            spec.label(),
            a.eps_hat,
            b.eps_hat
        );
    }
}

#[test]
fn zero_shift_has_no_loss() {
    for spec in [
        DensitySpec::gaussian(1.0, 2.0).unwrap(),
        DensitySpec::uniform(-1.0, 1.0).unwrap(),
        DensitySpec::staircase(0.3, 0.5).unwrap(),
    ] {
        let p = estimate_profile(&spec, 0.0, &oracle(200_000, 5)).unwrap();
        assert!(p.eps_hat < 0.05, "{}: {}", spec.label(), p.eps_hat);
    }
}

/// Every family's sampler against its own quantiles: 100 equal-mass bins,
/// each count within 5 binomial standard deviations.
#[test]
fn samplers_fill_equal_mass_bins_evenly() {
    let n = 1_000_000;
    for spec in [
        DensitySpec::laplace(0.5, 1.5).unwrap(),
        DensitySpec::gaussian(-1.0, 0.7).unwrap(),
        DensitySpec::uniform(2.0, 5.0).unwrap(),
        DensitySpec::staircase(0.4, 1.0).unwrap(),
    ] {
        let edges: Vec<f64> = (1..100).map(|i| spec.quantile(i as f64 / 100.0).unwrap()).collect();
        let mut counts = [0u64; 100];
        for x in draw_noise(&spec, n, 17) {
            counts[edges.partition_point(|&e| e <= x)] += 1;
        }
        let expect = n as f64 / 100.0;
        let sd = (n as f64 * 0.01 * 0.99).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!((c as f64 - expect).abs() <= 5.0 * sd, "{} bin {i}: {c}", spec.label());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn delta_curve_is_monotone(b in 0.3..3.0f64, sigma in 0.05..2.0f64, seed in any::<u64>()) {
        let p = estimate_profile(&DensitySpec::laplace(0.0, b).unwrap(), sigma, &oracle(100_000, seed)).unwrap();
        for w in p.delta_curve.windows(2) {
            prop_assert!(w[0].eps < w[1].eps);
            prop_assert!(w[1].delta <= w[0].delta);
        }
    }

    #[test]
    fn profiles_are_reproducible(sigma in 0.05..2.0f64, seed in any::<u64>()) {
        let spec = DensitySpec::gaussian(0.0, 1.0).unwrap();
        let a = estimate_profile(&spec, sigma, &oracle(100_000, seed)).unwrap();
        let b = estimate_profile(&spec, sigma, &oracle(100_000, seed)).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }
}

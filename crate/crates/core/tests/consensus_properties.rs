use nalgebra::{DMatrix, DVector};
use noisedp::consensus::{
    run, sequence_privacy_estimate, Graph, NoiseSchedule, SequenceConfig, SequenceEstimate, WeightMatrix,
};
use noisedp::DensitySpec;
use proptest::prelude::*;

fn laplace_iid() -> NoiseSchedule {
    NoiseSchedule::Iid {
        density: DensitySpec::laplace(0.0, 1.0).unwrap(),
    }
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    prop_oneof![
        (3usize..21).prop_map(|n| Graph::ring(n).unwrap()),
        (3usize..21).prop_map(|n| Graph::complete(n).unwrap()),
        (3usize..21, any::<u64>()).prop_map(|(n, seed)| Graph::erdos_renyi(n, 0.6, seed))
            .prop_filter_map("disconnected draw", Result::ok),
    ]
}

fn arb_schedule() -> impl Strategy<Value = NoiseSchedule> {
    prop_oneof![
        Just(NoiseSchedule::None),
        Just(laplace_iid()),
        (0.1..0.99f64).prop_map(|gamma| NoiseSchedule::DecayingIid {
            density: DensitySpec::gaussian(0.0, 1.0).unwrap(),
            gamma
        }),
        (0.1..0.99f64).prop_map(|gamma| NoiseSchedule::ZeroSumDecaying {
            density: DensitySpec::gaussian(0.0, 1.0).unwrap(),
            gamma
        }),
    ]
}

/// Second-largest eigenvalue modulus of a symmetric `W`.
fn lambda2(w: &DMatrix<f64>) -> f64 {
    let mut ev: Vec<f64> = w.clone().symmetric_eigen().eigenvalues.iter().map(|e| e.abs()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sums_are_preserved(g in arb_graph(), sched in arb_schedule(), seed in any::<u64>()) {
        let w = WeightMatrix::metropolis(&g);
        let x0: Vec<f64> = (0..g.n()).map(|i| (i as f64).sin() * 3.0).collect();
        let r = run(&w, &x0, &sched, 30, seed).unwrap();
        let mut expected: f64 = x0.iter().sum();
        for k in 0..r.k_max() {
            prop_assert!((r.xs[k + 1].sum() - r.xs_plus[k].sum()).abs() < 1e-9);
            expected += r.thetas[k].sum();
            prop_assert!((r.xs[k + 1].sum() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn trajectory_matches_closed_form(g in arb_graph(), sched in arb_schedule(), seed in any::<u64>(), k_max in 1usize..100) {
        let w = WeightMatrix::metropolis(&g);
        let x0: Vec<f64> = (0..g.n()).map(|i| i as f64).collect();
        let r = run(&w, &x0, &sched, k_max, seed).unwrap();
        // Powers of W built directly, independent of the library's recursion.
        let m = w.matrix();
        let mut pows = vec![DMatrix::identity(g.n(), g.n())];
        for _ in 0..k_max {
            let next = m * pows.last().unwrap();
            pows.push(next);
        }
        for k in 0..=k_max {
            let mut want = &pows[k] * DVector::from_column_slice(&x0);
            for l in 0..k {
                want += &pows[k - l] * &r.thetas[l];
            }
            prop_assert!((&r.xs[k] - want).amax() < 1e-10, "k = {}", k);
        }
        prop_assert!(r.trajectory_residual() < 1e-10);
    }

    #[test]
    fn noiseless_error_stays_under_envelope(g in arb_graph()) {
        let w = WeightMatrix::metropolis(&g);
        let lam = lambda2(w.matrix());
        prop_assert!((lam - w.convergence_factor()).abs() < 1e-9);
        let x0: Vec<f64> = (0..g.n()).map(|i| ((i * 13) % 7) as f64).collect();
        let r = run(&w, &x0, &NoiseSchedule::None, 100, 0).unwrap();
        let e0 = r.average_error(0);
        // Once the envelope drops below rounding the error sits at the floor
        // of the mixing arithmetic instead.
        let floor = 64.0 * f64::EPSILON * 6.0;
        for k in 0..=100 {
            let e = r.average_error(k);
            prop_assert!(e <= lam.powi(k as i32) * e0 * (1.0 + 1e-6) + floor, "k = {}: {:e}", k, e);
        }
    }

    #[test]
    fn metropolis_weights_are_doubly_stochastic(g in arb_graph()) {
        let w = WeightMatrix::metropolis(&g);
        let m = w.matrix();
        for i in 0..g.n() {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!((m.column(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(m[(i, i)] > 0.0);
            for j in 0..g.n() {
                prop_assert_eq!(m[(i, j)], m[(j, i)]);
                prop_assert_eq!(m[(i, j)] > 0.0, i == j || g.has_edge(i, j));
            }
        }
    }

    #[test]
    fn runs_are_bit_identical(g in arb_graph(), sched in arb_schedule(), seed in any::<u64>()) {
        let w = WeightMatrix::metropolis(&g);
        let x0 = vec![1.0; g.n()];
        prop_assert_eq!(run(&w, &x0, &sched, 20, seed).unwrap(), run(&w, &x0, &sched, 20, seed).unwrap());
    }
}

fn estimate(sched: &NoiseSchedule, k_max: usize) -> SequenceEstimate {
    let w = WeightMatrix::metropolis(&Graph::ring(3).unwrap());
    sequence_privacy_estimate(&w, sched, 1.0, k_max, &SequenceConfig::default()).unwrap()
}

#[test]
fn iid_laplace_first_release_carries_the_loss() {
    let e = estimate(&laplace_iid(), 3);
    assert!((e.first_release.eps_hat - 1.0).abs() < 0.05, "{:?}", e.first_release);
    for step in &e.per_step[1..] {
        assert!(step.eps_hat > 0.0 && step.eps_hat < e.first_release.eps_hat, "{step:?}");
    }
    let joint = e.joint_first_two.unwrap();
    assert!(joint.eps_hat <= e.first_release.eps_hat + 0.05, "{joint:?}");
}

/// `x⁺(k) = c(k)` keeps a `(W − I)w(0)` component at `k = 1`, so the loss dips
/// there before the `γ^k` scale takes over.
#[test]
fn zero_sum_loss_grows_as_noise_decays() {
    let sched = NoiseSchedule::ZeroSumDecaying {
        density: DensitySpec::gaussian(0.0, 1.0).unwrap(),
        gamma: 0.5,
    };
    let e = estimate(&sched, 4);
    let eps: Vec<f64> = e.per_step.iter().map(|s| s.eps_hat).collect();
    for w in eps[1..].windows(2) {
        assert!(w[1] > w[0], "{eps:?}");
    }
    assert!(eps[4] > eps[0], "{eps:?}");
    // Without independence the first release no longer bounds the pair.
    assert!(e.joint_first_two.unwrap().eps_hat > e.first_release.eps_hat + 0.1);
}

#[test]
fn sequence_estimate_rejects_bad_input() {
    let w = WeightMatrix::metropolis(&Graph::ring(3).unwrap());
    let cfg = SequenceConfig {
        i0: 3,
        ..SequenceConfig::default()
    };
    assert!(sequence_privacy_estimate(&w, &laplace_iid(), 1.0, 1, &cfg).is_err());
    assert!(sequence_privacy_estimate(&w, &laplace_iid(), -1.0, 1, &SequenceConfig::default()).is_err());
}

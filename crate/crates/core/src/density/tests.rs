use proptest::prelude::*;

use super::*;
use crate::rng::seeded;

const COUNTER: &str = r#"{"family":"piecewise","segments":[
    {"lo":"-inf","hi":0.0,"expr":"(* -0.5 z (exp z))"},
    {"lo":0.0,"hi":"inf","expr":"(* 0.5 z (exp (- z)))"}]}"#;

fn counterexample() -> DensitySpec {
    DensitySpec::from_json(COUNTER).unwrap()
}

#[test]
fn closed_form_values() {
    let lap = DensitySpec::laplace(0.0, 1.0).unwrap();
    assert!((lap.eval(0.0) - 0.5).abs() < 1e-15);
    assert!((lap.eval(2.0) - 0.5 * (-2.0f64).exp()).abs() < 1e-15);

    let uni = DensitySpec::uniform(0.0, 1.0).unwrap();
    assert_eq!(uni.eval(0.5), 1.0);
    assert_eq!(uni.eval(1.5), 0.0);

    let st = DensitySpec::staircase(0.5, 1.0).unwrap();
    assert!((st.eval(0.3) - 0.25).abs() < 1e-15);
    assert!((st.eval(-1.0) - 0.25).abs() < 1e-15);
    assert!((st.eval(1.5) - 0.125).abs() < 1e-15);
    assert!((st.eval(-2.5) - 0.0625).abs() < 1e-15);
}

#[test]
fn ln_eval_matches_eval() {
    let specs = [
        DensitySpec::laplace(0.3, 2.0).unwrap(),
        DensitySpec::gaussian(-1.0, 0.5).unwrap(),
        DensitySpec::staircase(0.7, 0.4).unwrap(),
    ];
    for s in &specs {
        for z in [-3.1, -0.2, 0.0, 0.9, 2.5] {
            assert!((s.ln_eval(z) - s.eval(z).ln()).abs() < 1e-12, "{} at {z}", s.label());
        }
    }
}

#[test]
fn masses_are_one() {
    let specs = [
        DensitySpec::laplace(0.0, 3.0).unwrap(),
        DensitySpec::gaussian(2.0, 0.1).unwrap(),
        DensitySpec::uniform(0.0, 2.0).unwrap(),
        DensitySpec::staircase(0.9, 1.0).unwrap(),
        DensitySpec::staircase(0.2, 0.5).unwrap(),
        counterexample(),
    ];
    for s in &specs {
        let grid = EvalGrid::default_for(s);
        let report = s.check_mass(&grid, 1e-8).unwrap_or_else(|e| panic!("{}: {e}", s.label()));
        assert!(report.tail_mass <= grid.tail_mass_budget() * 1.01, "{}", s.label());
    }
}

#[test]
fn mass_deficit_is_rejected() {
    let half = DensitySpec::piecewise(vec![Segment::new(0.0, 1.0, Expr::Const(0.5))]).unwrap();
    let grid = EvalGrid::default_for(&half);
    match half.check_mass(&grid, DEFAULT_TAU_MASS) {
        Err(DensityError::MassDeficit { mass, .. }) => assert!((mass - 0.5).abs() < 1e-9),
        other => panic!("expected deficit, got {other:?}"),
    }
}

#[test]
fn zero_sets() {
    let lap = DensitySpec::laplace(0.0, 1.0).unwrap();
    let zs = lap.zero_set(&EvalGrid::default_for(&lap), 0.0);
    assert!(zs.is_null() && zs.acnodes.is_empty());

    let uni = DensitySpec::uniform(0.0, 1.0).unwrap();
    let grid = EvalGrid::with_cells(-5.0, 5.0, 1000, 0.0).unwrap();
    let zs = uni.zero_set(&grid, 0.0);
    assert!((zs.total_measure - 9.0).abs() < 1e-12);
    assert_eq!(zs.intervals.len(), 2);

    let c = counterexample();
    let zs = c.zero_set(&EvalGrid::default_for(&c), c.default_tau_zero());
    assert!(zs.is_null(), "{zs:?}");
    assert_eq!(zs.acnode_count, 1);
    assert!(zs.acnodes[0].abs() < 1e-3);
}

#[test]
fn piecewise_zero_interval_is_found() {
    // Two bumps separated by a gap of width 1 on [1, 2].
    let spec = DensitySpec::piecewise(vec![
        Segment::new(0.0, 1.0, Expr::Const(0.5)),
        Segment::new(2.0, 3.0, Expr::Const(0.5)),
    ])
    .unwrap();
    let grid = EvalGrid::with_cells(0.0, 3.0, 3000, 0.0).unwrap();
    let zs = spec.zero_set(&grid, spec.default_tau_zero());
    let inner: Vec<_> = zs.intervals.iter().filter(|iv| iv.lo > 0.5 && iv.hi < 2.5).collect();
    assert_eq!(inner.len(), 1, "{zs:?}");
    assert!((inner[0].len() - 1.0).abs() < 1e-9);
}

#[test]
fn vanishing_point_of_counterexample() {
    let c = counterexample();
    let v = vanishing_points(&c, &EvalGrid::default_for(&c), DEFAULT_TAU_VANISH);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(v[0].abs() < 1e-6);

    let lap = DensitySpec::laplace(0.0, 1.0).unwrap();
    assert!(vanishing_points(&lap, &EvalGrid::default_for(&lap), DEFAULT_TAU_VANISH).is_empty());
}

#[test]
fn staircase_cdf_matches_quadrature() {
    for ratio in [0.2, 0.5, 0.9] {
        let s = DensitySpec::staircase(ratio, 0.7).unwrap();
        for z in [-5.3f64, -1.4, -0.7, -0.2, 0.0, 0.5, 0.7, 1.05, 3.9, 12.0] {
            let direct = 0.5 + s.integrate(0.0, z.max(0.0)) - s.integrate(z.min(0.0), 0.0);
            assert!((s.cdf(z).unwrap() - direct).abs() < 1e-10, "ρ={ratio} z={z}");
        }
    }
}

#[test]
fn quantile_inverts_cdf() {
    let specs = [
        DensitySpec::laplace(1.0, 2.0).unwrap(),
        DensitySpec::gaussian(0.0, 1.0).unwrap(),
        DensitySpec::uniform(-1.0, 3.0).unwrap(),
        DensitySpec::staircase(0.5, 1.0).unwrap(),
        DensitySpec::staircase(0.9, 0.3).unwrap(),
    ];
    for s in &specs {
        for p in [1e-9, 1e-4, 0.01, 0.2, 0.5, 0.77, 0.99, 1.0 - 1e-7] {
            let x = s.quantile(p).unwrap();
            assert!((s.cdf(x).unwrap() - p).abs() < 1e-9 * p.max(1e-3), "{} p={p}", s.label());
        }
    }
}

#[test]
fn gaussian_tail_survival() {
    let g = DensitySpec::gaussian(0.0, 1.0).unwrap();
    let expect = 0.5 * libm::erfc(5.0 / std::f64::consts::SQRT_2);
    assert!((g.survival(5.0).unwrap() - expect).abs() < 1e-20);
    assert!((g.mass_outside(-5.0, 5.0) - 2.0 * expect).abs() < 1e-20);
}

fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[test]
fn sampler_moments() {
    let n = 200_000;
    let mut rng = seeded(11);

    let uni = DensitySpec::uniform(2.0, 4.0).unwrap();
    let xs = Sampler::new(&uni, &EvalGrid::default_for(&uni)).fill(&mut rng, n);
    let (m, _) = sample_moments(&xs);
    // sd of the mean is (2/√12)/√n ≈ 1.3e-3
    assert!((m - 3.0).abs() < 6.5e-3);

    let lap = DensitySpec::laplace(0.0, 1.5).unwrap();
    let xs = Sampler::new(&lap, &EvalGrid::default_for(&lap)).fill(&mut rng, n);
    let (_, v) = sample_moments(&xs);
    // Var = 2b² = 4.5; sd of the sample variance ≈ √(20 b⁴ / n) ≈ 0.023
    assert!((v - 4.5).abs() < 0.12, "{v}");

    let g = DensitySpec::gaussian(1.0, 2.0).unwrap();
    let xs = Sampler::new(&g, &EvalGrid::default_for(&g)).fill(&mut rng, n);
    let (m, v) = sample_moments(&xs);
    assert!((m - 1.0).abs() < 0.025 && (v - 4.0).abs() < 0.07, "{m} {v}");
}

#[test]
fn staircase_sampler_goodness_of_fit() {
    let s = DensitySpec::staircase(0.5, 1.0).unwrap();
    let n = 200_000;
    let bins = 100;
    let xs = Sampler::new(&s, &EvalGrid::default_for(&s)).fill(&mut seeded(5), n);
    let mut counts = vec![0usize; bins];
    for x in xs {
        let u = s.cdf(x).unwrap();
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expect = n as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // χ²(99): mean 99, sd ≈ 14; five sd above the mean.
    assert!(chi2 < 99.0 + 5.0 * 14.07, "χ² = {chi2}");
}

#[test]
fn piecewise_table_sampler_mean() {
    let c = counterexample();
    let xs = Sampler::new(&c, &EvalGrid::default_for(&c)).fill(&mut seeded(3), 100_000);
    let (m, v) = sample_moments(&xs);
    // Symmetric, with E θ² = ∫ z³ e^(-z) over z > 0 = 6 and sd of the
    // sample variance √(120 - 36)/√n ≈ 0.03.
    assert!(m.abs() < 0.03, "{m}");
    assert!((v - 6.0).abs() < 0.15, "{v}");
}

#[test]
fn draws_are_reproducible() {
    let s = DensitySpec::gaussian(0.0, 1.0).unwrap();
    let mut r = seeded(9);
    let a: Vec<f64> = (0..5).map(|_| s.draw(&mut r)).collect();
    let mut r = seeded(9);
    let b: Vec<f64> = (0..5).map(|_| s.draw(&mut r)).collect();
    assert_eq!(a, b);
}

#[test]
fn json_examples() {
    let s = DensitySpec::from_json(r#"{"family":"laplace","params":{"loc":0,"scale":2}}"#).unwrap();
    assert_eq!(s, DensitySpec::laplace(0.0, 2.0).unwrap());
    assert_eq!(DensitySpec::from_json(&s.to_json()).unwrap(), s);

    let c = counterexample();
    let text = c.to_json();
    assert!(text.contains("\"-inf\"") && text.contains("\"inf\""));
    assert_eq!(DensitySpec::from_json(&text).unwrap(), c);
}

#[test]
fn json_rejections() {
    for bad in [
        r#"{"family":"laplace","params":{"loc":0,"scale":-1}}"#,
        r#"{"family":"laplace","params":{"loc":0}}"#,
        r#"{"family":"laplace","params":{"loc":0,"scale":1,"extra":2}}"#,
        r#"{"family":"cauchy","params":{}}"#,
        r#"{"family":"staircase","params":{"ratio":1.5,"width":1}}"#,
        r#"{"family":"uniform","params":{"lo":1,"hi":1}}"#,
        r#"{"family":"piecewise","segments":[]}"#,
        r#"{"family":"piecewise","segments":[{"lo":0,"hi":"huge","expr":"1"}]}"#,
        r#"{"family":"piecewise","segments":[{"lo":0,"hi":1,"expr":"(- z)"}]}"#,
        r#"{"family":"piecewise","segments":[{"lo":0,"hi":1,"expr":"(* z"}]}"#,
        r#"{"family":"piecewise","segments":[{"lo":0,"hi":2,"expr":"0.5"},{"lo":1,"hi":3,"expr":"0.5"}]}"#,
    ] {
        assert!(DensitySpec::from_json(bad).is_err(), "accepted {bad}");
    }
}

fn arb_spec() -> impl Strategy<Value = DensitySpec> {
    let num = -1e3..1e3f64;
    let pos = 1e-3..1e3f64;
    prop_oneof![
        (num.clone(), pos.clone()).prop_map(|(a, b)| DensitySpec::laplace(a, b).unwrap()),
        (num.clone(), pos.clone()).prop_map(|(a, b)| DensitySpec::gaussian(a, b).unwrap()),
        (num.clone(), pos.clone()).prop_map(|(a, w)| DensitySpec::uniform(a, a + w).unwrap()),
        (0.01..0.99f64, pos.clone()).prop_map(|(r, w)| DensitySpec::staircase(r, w).unwrap()),
        (num, pos, 0.0..10.0f64, 1u32..4).prop_map(|(lo, w, c, p)| {
            let expr = Expr::parse(&format!("(+ {c:?} (pow (abs z) {p}))")).unwrap();
            DensitySpec::piecewise(vec![
                Segment::new(f64::NEG_INFINITY, lo, Expr::Const(0.0)),
                Segment::new(lo, lo + w, expr),
            ])
            .unwrap()
        }),
    ]
}

proptest! {
    #[test]
    fn json_round_trip_is_lossless(spec in arb_spec()) {
        let text = spec.to_json();
        let back = DensitySpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn densities_are_nonnegative(spec in arb_spec(), z in -1e4..1e4f64) {
        prop_assert!(spec.eval(z) >= 0.0);
    }

    #[test]
    fn cdf_is_monotone(spec in arb_spec().prop_filter("closed form", |s| !s.is_piecewise()),
                       a in -1e4..1e4f64, d in 0.0..1e3f64) {
        prop_assert!(spec.cdf(a).unwrap() <= spec.cdf(a + d).unwrap() + 1e-15);
    }
}

use proptest::prelude::*;
use seqexp::harness::{run_simulate, serialize_report, ExperimentConfig, Format};
use seqexp::model::IncrementModel;
use seqexp::walk::{default_max_steps, run_to_boundary, simulate, Retain};
use seqexp::StreamSeed;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stopped_walk_crosses_exactly_once(nu in 0.2f64..2.0, rho in -0.9f64..0.9, a in 0.0f64..30.0, seed in any::<u64>()) {
        let model = IncrementModel::bivariate_normal(nu, 0.0, rho).unwrap();
        let walk = run_to_boundary(&model, a, default_max_steps(a, nu), &mut StreamSeed::new(seed).stream(0)).unwrap();
        let inc = walk.increments().unwrap();
        prop_assert_eq!(inc.len(), walk.tau);
        let mut s = 0.0;
        for (i, x) in inc.x.iter().enumerate() {
            s += x;
            if i + 1 < walk.tau {
                prop_assert!(s <= a);
            }
        }
        prop_assert!(walk.x_tau > a);
        prop_assert!((s - walk.x_tau).abs() < 1e-9);
        prop_assert!((walk.overshoot - (walk.x_tau - a)).abs() < 1e-12);
        let y: f64 = inc.y().sum();
        prop_assert!((y - walk.w_tau[0]).abs() < 1e-9);
    }

    #[test]
    fn retaining_increments_does_not_change_the_path(seed in any::<u64>()) {
        let model = IncrementModel::gamma_shifted(0.5, 1.0, 2.0, 1.0, 0.3).unwrap();
        let s = StreamSeed::new(seed);
        let full = simulate(&model, 8.0, 10_000, &mut s.stream(1), Retain::Increments).unwrap();
        let summary = simulate(&model, 8.0, 10_000, &mut s.stream(1), Retain::Summary).unwrap();
        prop_assert_eq!(full.tau, summary.tau);
        prop_assert_eq!(full.x_tau, summary.x_tau);
        prop_assert_eq!(full.w_tau, summary.w_tau);
    }
}

#[test]
fn exponential_overshoot_is_exponential() {
    let model = IncrementModel::positive_exponential(2.0, vec![0.0], vec![1.0], vec![1.0]).unwrap();
    let n = 20_000;
    let seed = StreamSeed::new(11);
    let mut over: Vec<f64> = (0..n)
        .map(|i| {
            simulate(&model, 5.0, 10_000, &mut seed.stream(i), Retain::Summary)
                .unwrap()
                .overshoot
        })
        .collect();
    over.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = over
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = 1.0 - (-2.0 * x).exp();
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / nf.sqrt(), "KS {d}");
}

#[test]
fn wald_first_identity_on_stopped_sums() {
    let (nu, a) = (0.5, 10.0);
    let model = IncrementModel::bivariate_normal(nu, 0.0, 0.6).unwrap();
    let seed = StreamSeed::new(12);
    let n = 40_000;
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let w = simulate(
                &model,
                a,
                default_max_steps(a, nu),
                &mut seed.stream(i),
                Retain::Summary,
            )
            .unwrap();
            w.x_tau - nu * w.tau as f64
        })
        .collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt(), "{mean}");
}

#[test]
fn runaway_walks_are_reported() {
    let model = IncrementModel::bivariate_normal(0.5, 0.0, 0.0).unwrap();
    let err = simulate(&model, 1e6, 10, &mut StreamSeed::new(0).stream(0), Retain::Summary).unwrap_err();
    assert!(matches!(err, seqexp::Error::MaxStepsExceeded { max_steps: 10, .. }));
}

#[test]
fn simulation_reports_depend_only_on_the_seed() {
    let mut cfg = ExperimentConfig::table1();
    cfg.reps = 300;
    cfg.seed = 21;
    cfg.workers = Some(1);
    let one = serialize_report(&run_simulate(&cfg).unwrap(), Format::Json, None).unwrap();
    cfg.workers = Some(5);
    let five = serialize_report(&run_simulate(&cfg).unwrap(), Format::Json, None).unwrap();
    assert_eq!(one, five);
    cfg.seed = 22;
    let other = serialize_report(&run_simulate(&cfg).unwrap(), Format::Json, None).unwrap();
    assert_ne!(one, other);
}

use seqexp::model::{analytic_moments, sample_moments, IncrementModel, ModelSpec};
use seqexp::StreamSeed;
use serde_json::json;

fn models() -> Vec<IncrementModel> {
    vec![
        IncrementModel::bivariate_normal(0.5, 0.2, 0.4).unwrap(),
        IncrementModel::gaussian(
            vec![0.3, 1.0, -0.5],
            vec![vec![1.0, 0.3, 0.1], vec![0.3, 2.0, 0.4], vec![0.1, 0.4, 0.5]],
        )
        .unwrap(),
        IncrementModel::positive_exponential(2.0, vec![0.5], vec![1.5], vec![0.7]).unwrap(),
        IncrementModel::gamma_shifted(0.5, 1.0, 2.0, 1.0, 0.3).unwrap(),
        IncrementModel::bernoulli_step(0.7, vec![1.0, 0.0], vec![0.5, -1.0], vec![1.0, 0.5]).unwrap(),
    ]
}

#[test]
fn sampled_moments_agree_with_closed_forms() {
    for (k, model) in models().iter().enumerate() {
        let exact = analytic_moments(model).unwrap();
        let sampled = sample_moments(model, 200_000, &StreamSeed::new(100 + k as u64)).unwrap();
        let exact: Vec<(String, f64)> = exact.flatten();
        let mut worst = (String::new(), 0.0);
        for ((name, est, se), (_, truth)) in sampled.entries().into_iter().zip(&exact) {
            if se > 1e-12 {
                let z = ((est - truth) / se).abs();
                if z > worst.1 {
                    worst = (name, z);
                }
            } else {
                assert!(
                    (est - truth).abs() < 1e-9,
                    "{} {name}: {est} vs {truth}",
                    model.kind_name()
                );
            }
        }
        // many correlated entries per model; 5 standard errors is a loose joint bound
        assert!(
            worst.1 < 5.0,
            "{}: {} off by {:.2} se",
            model.kind_name(),
            worst.0,
            worst.1
        );
    }
}

#[test]
fn increment_means_match_nu() {
    let seed = StreamSeed::new(9);
    for model in models() {
        let nu = analytic_moments(&model).unwrap().nu;
        let n = 100_000;
        let mut rng = seed.stream(model.fingerprint());
        let mut w = vec![0.0; model.dim_w()];
        let xs: Vec<f64> = (0..n).map(|_| model.sample_into(&mut rng, &mut w)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(
            (mean - nu).abs() < 4.0 * (var / n as f64).sqrt(),
            "{}: {mean} vs {nu}",
            model.kind_name()
        );
    }
}

#[test]
fn composite_is_sampled_not_solved() {
    let a = ModelSpec {
        kind: "bivariate-normal".into(),
        dim_w: None,
        params: json!({"nu": 0.5, "rho": 0.4}),
    };
    let b = ModelSpec {
        kind: "bivariate-normal".into(),
        dim_w: None,
        params: json!({"nu": 1.5, "rho": -0.4}),
    };
    let model = IncrementModel::composite(vec![a, b], vec![0.5, 0.5]).unwrap();
    assert!(analytic_moments(&model).is_err());
    let s = sample_moments(&model, 100_000, &StreamSeed::new(3)).unwrap();
    let nu_se = s.entries().into_iter().find(|(n, _, _)| n == "nu").unwrap().2;
    assert!((s.moments.nu - 1.0).abs() < 4.0 * nu_se);
}

#[test]
fn specs_survive_json() {
    for model in models() {
        let text = serde_json::to_string(model.spec()).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        let rebuilt = IncrementModel::new(&back).unwrap();
        assert_eq!(rebuilt.fingerprint(), model.fingerprint());
        assert_eq!(rebuilt.kind_name(), model.kind_name());
    }
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(IncrementModel::bivariate_normal(0.0, 0.0, 0.4).is_err());
    assert!(IncrementModel::bivariate_normal(0.5, 0.0, 1.5).is_err());
    assert!(IncrementModel::positive_exponential(-1.0, vec![0.0], vec![1.0], vec![1.0]).is_err());
    assert!(IncrementModel::bernoulli_step(1.5, vec![0.0], vec![1.0], vec![1.0]).is_err());
    let unknown = ModelSpec {
        kind: "cauchy".into(),
        dim_w: None,
        params: json!({}),
    };
    assert!(IncrementModel::new(&unknown).is_err());
}

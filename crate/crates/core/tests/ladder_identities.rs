use seqexp::ladder::{check_identities, ladder_moments};
use seqexp::walk::{default_ladder_max_steps, sample_ladder_variables};
use seqexp::{analytic_moments, IncrementModel, StreamSeed};

fn suite(model: &IncrementModel, seed: u64, n: usize) -> seqexp::ladder::IdentityReport {
    let base = analytic_moments(model).unwrap();
    let s = sample_ladder_variables(model, n, default_ladder_max_steps(base.nu), &StreamSeed::new(seed)).unwrap();
    check_identities(&s, &base, None).unwrap()
}

#[test]
fn identities_hold_on_normal_bernoulli_and_gamma() {
    let models = [
        IncrementModel::bivariate_normal(0.5, 0.0, 0.4).unwrap(),
        IncrementModel::bernoulli_step(0.7, vec![1.0], vec![0.5], vec![1.0]).unwrap(),
        IncrementModel::gamma_shifted(0.5, 1.0, 2.0, 1.0, 0.3).unwrap(),
    ];
    for (k, m) in models.iter().enumerate() {
        let rep = suite(m, 100 + k as u64, 100_000);
        for e in &rep.entries {
            println!(
                "{} {:>22} est {:+.5} claim {:+.5} se {:.5} r {:+.2}",
                m.kind_name(),
                e.name,
                e.estimate,
                e.claim,
                e.se,
                e.residual
            );
        }
        assert!(
            rep.max_abs_residual() < 4.0,
            "{}: {}",
            m.kind_name(),
            rep.max_abs_residual()
        );
    }
}

#[test]
fn cubic_identity_reading_is_the_joint_moment() {
    let m = IncrementModel::bernoulli_step(0.7, vec![1.0], vec![0.0], vec![0.5]).unwrap();
    let rep = suite(&m, 7, 100_000);
    println!("{:?}", rep.reading);
    assert_eq!(rep.reading.adopted, "joint");
    assert!(rep.reading.product_max_residual > 4.0);
}

#[test]
fn bernoulli_ladder_time_mean() {
    let m = IncrementModel::bernoulli_step(0.7, vec![0.0], vec![0.0], vec![1.0]).unwrap();
    let base = analytic_moments(&m).unwrap();
    let s = sample_ladder_variables(&m, 100_000, 10_000, &StreamSeed::new(11)).unwrap();
    assert!(s.x.iter().all(|x| *x == 1.0));
    let lm = ladder_moments(&s, &base).unwrap();
    assert!((lm.e_t - 2.5).abs() < 4.0 * lm.se.e_t, "{} +- {}", lm.e_t, lm.se.e_t);
}

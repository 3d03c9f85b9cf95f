use proptest::prelude::*;
use seqexp::expansion::{
    density_parts, eval_h, region_probability, t0_cdf, ExpansionContext, HVariant, Region, SignMode,
};
use seqexp::ladder::analytic_ladder_moments;
use seqexp::model::{analytic_moments, IncrementModel};
use seqexp::normal;
use seqexp::quadrature::{gauss_legendre, integrate};

fn exp_ctx(a: f64) -> ExpansionContext {
    let model = IncrementModel::positive_exponential(1.5, vec![1.0], vec![0.8], vec![0.6]).unwrap();
    let ms = analytic_moments(&model).unwrap();
    let l = analytic_ladder_moments(&model, &ms).unwrap();
    ExpansionContext::new(ms, Some(l), a).unwrap()
}

#[test]
fn integrating_out_w_leaves_rho0() {
    let ctx = exp_ctx(12.0);
    let ms = &ctx.moments;
    let sd = (ms.sigma_mat[(0, 0)] * ctx.a / ms.nu).sqrt();
    let rule = gauss_legendre(20);
    let l = ctx.ladder().unwrap();
    for x in [0.05, 0.3, 1.0, 2.5] {
        let center = ms.gamma[0] * (ctx.a + x);
        for sign in [SignMode::Plus, SignMode::Minus] {
            let total = integrate(
                |w| density_parts(&ctx, x, &[w], HVariant::General, sign).unwrap().total(),
                center - 14.0 * sd,
                center + 14.0 * sd,
                40,
                &rule,
            );
            assert!((total - l.rho0(x)).abs() < 1e-10, "x={x}: {total} vs {}", l.rho0(x));
        }
    }
}

#[test]
fn whole_space_has_unit_mass() {
    let ctx = exp_ctx(20.0);
    let inf = f64::INFINITY;
    for leading_only in [true, false] {
        for sign in [SignMode::Plus, SignMode::Minus] {
            let r = Region::Rectangle {
                x0: 0.0,
                x1: inf,
                w0: -inf,
                w1: inf,
            };
            let p = region_probability(&ctx, r, HVariant::General, sign, leading_only).unwrap();
            assert!((p - 1.0).abs() < 1e-8, "{p}");
        }
    }
}

#[test]
fn complementary_bands_add_up() {
    let ctx = exp_ctx(15.0);
    let band = |q0: f64, q1: f64| {
        region_probability(
            &ctx,
            Region::QBand {
                x0: 0.2,
                x1: 1.7,
                q0,
                q1,
            },
            HVariant::General,
            SignMode::Plus,
            false,
        )
        .unwrap()
    };
    let whole = band(f64::NEG_INFINITY, f64::INFINITY);
    let split = band(f64::NEG_INFINITY, -0.4) + band(-0.4, 0.9) + band(0.9, f64::INFINITY);
    assert!((whole - split).abs() < 1e-12);
}

proptest! {
    #[test]
    fn h_is_odd(q in -6.0f64..6.0, r in -6.0f64..6.0) {
        let ctx = exp_ctx(10.0);
        for (variant, arg) in [
            (HVariant::General, vec![q]),
            (HVariant::Positive, vec![q]),
            (HVariant::Marginal0, vec![q]),
            (HVariant::Starred, vec![q, r]),
            (HVariant::Marginal0Star, vec![q, r]),
        ] {
            let neg: Vec<f64> = arg.iter().map(|v| -v).collect();
            let h = eval_h(&arg, &ctx, variant).unwrap();
            let hn = eval_h(&neg, &ctx, variant).unwrap();
            prop_assert!((h + hn).abs() <= 1e-12 * (1.0 + h.abs()));
        }
    }

    #[test]
    fn t0_correction_scales_with_root_a(
        c in -3.0f64..3.0,
        a in 1.0f64..200.0,
        nu in 0.1f64..2.0,
        sigma in 0.2f64..3.0,
        mu3 in -2.0f64..2.0,
        sxy in -1.0f64..1.0,
    ) {
        let t1 = t0_cdf(c, a, nu, sigma, mu3, sxy).unwrap();
        prop_assume!(t1 > 0.0 && t1 < 1.0);
        let d1 = t1 - normal::cdf(c);
        let d4 = t0_cdf(c, 4.0 * a, nu, sigma, mu3, sxy).unwrap() - normal::cdf(c);
        prop_assert!((d1 - 2.0 * d4).abs() < 1e-12);
    }

    #[test]
    fn t0_cdf_is_symmetric_without_skew_terms(c in -3.0f64..3.0, a in 1.0f64..100.0) {
        let lo = t0_cdf(-c, a, 0.5, 1.0, 0.0, 0.0).unwrap();
        let hi = t0_cdf(c, a, 0.5, 1.0, 0.0, 0.0).unwrap();
        prop_assert!((lo + hi - 1.0).abs() < 1e-14);
    }
}

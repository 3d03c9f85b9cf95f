//! Renewal density of `(X_n, Z_n)` for positive increments.

use super::{gaussian_moments, HVariant};
use crate::model::MomentSet;
use crate::normal;
use crate::quadrature::{gauss_legendre, integrate};
use crate::{Error, Result};

use super::ExpansionContext;

fn h_positive(ms: &MomentSet, u: &[f64]) -> Result<f64> {
    // Positive-case H uses no ladder constants and no boundary level.
    let ctx = ExpansionContext::new(ms.clone(), None, 1.0)?;
    super::eval_h(u, &ctx, HVariant::Positive)
}

/// `r(x, z) = phi(z sqrt(nu/x)) / (nu sqrt|Sigma| (x/nu)^{m/2})
///           * {1 + sqrt(nu/x) H(z sqrt(nu/x))}`, clamped at zero.
pub fn renewal_density_rhat(x: f64, z: &[f64], moments: &MomentSet) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("renewal density needs x > 0, got {x}")));
    }
    if z.len() != moments.dim_w {
        return Err(Error::WrongDimension {
            expected: moments.dim_w,
            got: z.len(),
        });
    }
    let nu = moments.nu;
    let s = (nu / x).sqrt();
    let u: Vec<f64> = z.iter().map(|v| v * s).collect();
    let m = moments.dim_w as f64;
    let lead = normal::pdf_m(&u) / (nu * moments.sigma_det.sqrt() * (x / nu).powf(m / 2.0));
    if lead == 0.0 {
        return Ok(0.0);
    }
    let v = lead * (1.0 + s * h_positive(moments, &u)?);
    Ok(v.max(0.0))
}

/// Expected number of `n` with `a < X_n <= a + delta` and `Z_n` in the box
/// `z0 < z <= z1` under the renewal expansion (`m = 1`). The density is with
/// respect to the image of Lebesgue measure under `w -> z`, which carries
/// the factor `sqrt|Sigma|`.
pub fn renewal_slab_count(moments: &MomentSet, a: f64, delta: f64, z0: f64, z1: f64) -> Result<f64> {
    if moments.dim_w != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: moments.dim_w,
        });
    }
    if !(a > 0.0) {
        return Err(Error::DomainError(format!("renewal slab needs a > 0, got {a}")));
    }
    if !(delta > 0.0) || z1 <= z0 {
        return Ok(0.0);
    }
    let h1 = h_positive(moments, &[1.0])?;
    let h2 = h_positive(moments, &[2.0])?;
    let alpha = (h2 - 2.0 * h1) / 6.0;
    let beta = h1 - alpha;
    let nu = moments.nu;
    let panels = (delta.ceil() as usize).clamp(1, 1000) * 4;
    Ok(integrate(
        |x| {
            let s = (nu / x).sqrt();
            let (i0, i1, i3) = gaussian_moments(z0 * s, z1 * s);
            (i0 + s * (alpha * i3 + beta * i1)) / nu
        },
        a,
        a + delta,
        panels,
        &gauss_legendre(8),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{analytic_moments, IncrementModel};

    #[test]
    fn domain_and_tails() {
        let m = IncrementModel::positive_exponential(1.0, vec![0.0], vec![1.0], vec![1.0]).unwrap();
        let ms = analytic_moments(&m).unwrap();
        assert!(matches!(
            renewal_density_rhat(0.0, &[0.0], &ms),
            Err(Error::DomainError(_))
        ));
        let c = renewal_density_rhat(10.0, &[0.0], &ms).unwrap();
        let far = renewal_density_rhat(10.0, &[10.0 * (10.0f64).sqrt() / 1.0], &ms).unwrap();
        assert!(far < 1e-20 * c);
        // x-marginal: integral over z of sqrt|Sigma| r = 1/nu
        let full = renewal_slab_count(&ms, 10.0, 1.0, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!((full - 1.0).abs() < 1e-12);
        assert_eq!(renewal_slab_count(&ms, 10.0, 0.0, -1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn slab_count_matches_pointwise_integral() {
        let m = IncrementModel::positive_exponential(1.0, vec![0.5], vec![1.0], vec![1.0]).unwrap();
        let ms = analytic_moments(&m).unwrap();
        let closed = renewal_slab_count(&ms, 20.0, 2.0, -1.0, 2.5).unwrap();
        let rule = gauss_legendre(10);
        let brute = integrate(
            |x| integrate(|z| renewal_density_rhat(x, &[z], &ms).unwrap(), -1.0, 2.5, 40, &rule),
            20.0,
            22.0,
            20,
            &rule,
        ) * ms.sigma_det.sqrt();
        assert!((closed - brute).abs() < 1e-6, "{closed} vs {brute}");
    }
}

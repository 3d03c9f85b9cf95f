//! Second-order expansions for the stopped walk: the polynomials `H`, the
//! joint densities of `(X_tau - a, W_tau)` and `(X_tau - a, W_tau, tau)`,
//! the renewal density, marginal densities and distribution functions, and
//! the distribution of smooth statistics of the stopped sums.

mod marginal;
mod renewal;

pub use marginal::{
    fa_cdf, fa_cdf_grid, hall_quantile, marginal_cdf_w, marginal_cdf_w_grid, marginal_density_w, t0_bracket, t0_cdf,
    xi_statistic, SigmaStarPartition, SmoothStatistic, StatCoords,
};
pub use renewal::{renewal_density_rhat, renewal_slab_count};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ladder::LadderMoments;
use crate::linalg::{dot, mat_vec, Tensor3};
use crate::model::MomentSet;
use crate::normal;
use crate::quadrature::{gauss_legendre, integrate, Rule};
use crate::{Error, Result};

/// Which `H` polynomial to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HVariant {
    /// Joint law of `(X_tau - a, W_tau)`.
    General,
    /// Joint law of `(X_tau - a, W_tau, tau)`.
    Starred,
    /// Positive increments, no ladder term.
    Positive,
    /// Marginal law of `W_tau`.
    Marginal0,
    /// Marginal law of `(W_tau, tau)`.
    Marginal0Star,
}

/// Sign of the `q . rho_1(x)` term in the joint density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    #[default]
    Plus,
    Minus,
}

impl SignMode {
    fn factor(self) -> f64 {
        match self {
            SignMode::Plus => 1.0,
            SignMode::Minus => -1.0,
        }
    }
}

/// Population and ladder constants at boundary level `a`.
#[derive(Debug, Clone)]
pub struct ExpansionContext {
    pub moments: MomentSet,
    pub ladder: Option<LadderMoments>,
    pub a: f64,
    clamped: Arc<AtomicUsize>,
}

impl ExpansionContext {
    pub fn new(moments: MomentSet, ladder: Option<LadderMoments>, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::DomainError(format!("boundary a must be positive, got {a}")));
        }
        if let Some(l) = &ladder {
            if l.dim_w != moments.dim_w {
                return Err(Error::WrongDimension {
                    expected: moments.dim_w,
                    got: l.dim_w,
                });
            }
            if let (Some(x), Some(y)) = (l.model_fingerprint, moments.model_fingerprint) {
                if x != y {
                    return Err(Error::ModelMismatch);
                }
            }
        }
        Ok(ExpansionContext {
            moments,
            ladder,
            a,
            clamped: Arc::new(AtomicUsize::new(0)),
        })
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        ExpansionContext::new(self.moments.clone(), self.ladder.clone(), a)
    }

    pub fn ladder(&self) -> Result<&LadderMoments> {
        self.ladder.as_ref().ok_or(Error::MissingLadderMoments)
    }

    /// Ladder moments including the functions `rho`.
    pub fn ladder_rho(&self) -> Result<&LadderMoments> {
        match &self.ladder {
            Some(l) if l.has_rho() => Ok(l),
            _ => Err(Error::MissingLadderMoments),
        }
    }

    /// Number of negative density values clamped to zero so far.
    pub fn clamped_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    fn root(&self) -> f64 {
        (self.moments.nu / self.a).sqrt()
    }

    fn require_star(&self) -> Result<()> {
        if self.moments.sigma_star_regular {
            Ok(())
        } else {
            Err(Error::SingularSigma {
                which: "Sigma*",
                ratio: 0.0,
            })
        }
    }
}

/// `q = Sigma^{-1/2}(w - gamma x - gamma a) sqrt(nu/a)` for overshoot `x`.
pub fn q_point(ctx: &ExpansionContext, x: f64, w: &[f64]) -> Result<Vec<f64>> {
    let ms = &ctx.moments;
    check_len(w, ms.dim_w)?;
    let c: Vec<f64> = w.iter().zip(&ms.gamma).map(|(w, g)| w - g * (x + ctx.a)).collect();
    Ok(mat_vec(&ms.sigma_inv_sqrt, &c)
        .into_iter()
        .map(|v| v * ctx.root())
        .collect())
}

/// `q* = Sigma*^{-1/2}(w* - gamma* x - gamma* a) sqrt(nu/a)`, `w* = (w, n)`.
pub fn q_point_star(ctx: &ExpansionContext, x: f64, w_star: &[f64]) -> Result<Vec<f64>> {
    let ms = &ctx.moments;
    check_len(w_star, ms.dim_w + 1)?;
    let c: Vec<f64> = w_star
        .iter()
        .zip(&ms.gamma_star)
        .map(|(w, g)| w - g * (x + ctx.a))
        .collect();
    Ok(mat_vec(&ms.sigma_star_inv_sqrt, &c)
        .into_iter()
        .map(|v| v * ctx.root())
        .collect())
}

/// `q~ = Sigma^{-1/2}(w - gamma a) sqrt(nu/a)`.
pub fn q_tilde(ctx: &ExpansionContext, w: &[f64]) -> Result<Vec<f64>> {
    q_point(ctx, 0.0, w)
}

/// `q~* = Sigma*^{-1/2}(w* - gamma* a) sqrt(nu/a)`.
pub fn q_tilde_star(ctx: &ExpansionContext, w_star: &[f64]) -> Result<Vec<f64>> {
    q_point_star(ctx, 0.0, w_star)
}

fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::WrongDimension { expected, got: v.len() })
    }
}

fn cubic_term(t: &Tensor3, q: &[f64]) -> f64 {
    t.contract(q) / 6.0
}

fn square_term(sq_z: &[f64], q: &[f64]) -> f64 {
    0.5 * dot(sq_z, q)
}

fn xz_term(dim: f64, q: &[f64], xz: &[f64], nu: f64) -> f64 {
    (dim - dot(q, q)) * dot(xz, q) / (2.0 * nu)
}

fn ladder_term(q: &[f64], lxz: &[f64], nu: f64, e_t: f64) -> f64 {
    dot(lxz, q) / (nu * e_t.sqrt())
}

fn ex2_term(q: &[f64], dir: &[f64], nu: f64, l: &LadderMoments) -> f64 {
    dot(q, dir) * l.e_x2 / (2.0 * nu * l.e_t)
}

/// Evaluates the selected `H` polynomial at `q` (length `m`, or `m + 1`
/// for the starred variants).
pub fn eval_h(q: &[f64], ctx: &ExpansionContext, variant: HVariant) -> Result<f64> {
    let ms = &ctx.moments;
    let m = ms.dim_w as f64;
    let nu = ms.nu;
    match variant {
        HVariant::General => {
            check_len(q, ms.dim_w)?;
            let l = ctx.ladder()?;
            Ok(
                cubic_term(&ms.z_third, q) - square_term(&ms.z_sq_z, q) + xz_term(m + 2.0, q, &ms.xz, nu)
                    - ladder_term(q, &l.xz, nu, l.e_t),
            )
        }
        HVariant::Starred => {
            check_len(q, ms.dim_w + 1)?;
            ctx.require_star()?;
            let l = ctx.ladder()?;
            Ok(
                cubic_term(&ms.z_star_third, q) - square_term(&ms.z_star_sq_z, q)
                    + xz_term(m + 3.0, q, &ms.xz_star, nu)
                    - ladder_term(q, &l.xz_star, nu, l.e_t),
            )
        }
        HVariant::Positive => {
            check_len(q, ms.dim_w)?;
            Ok(cubic_term(&ms.z_third, q) - square_term(&ms.z_sq_z, q) + xz_term(m, q, &ms.xz, nu))
        }
        HVariant::Marginal0 => {
            check_len(q, ms.dim_w)?;
            let l = ctx.ladder()?;
            let dir = mat_vec(&ms.sigma_inv_sqrt, &ms.gamma);
            Ok(cubic_term(&ms.z_third, q) - square_term(&ms.z_sq_z, q)
                + xz_term(m + 2.0, q, &ms.xz, nu)
                + ex2_term(q, &dir, nu, l))
        }
        HVariant::Marginal0Star => {
            check_len(q, ms.dim_w + 1)?;
            ctx.require_star()?;
            let l = ctx.ladder()?;
            let dir = mat_vec(&ms.sigma_star_inv_sqrt, &ms.gamma_star);
            Ok(cubic_term(&ms.z_star_third, q) - square_term(&ms.z_star_sq_z, q)
                + xz_term(m + 3.0, q, &ms.xz_star, nu)
                + ex2_term(q, &dir, nu, l))
        }
    }
}

/// Leading term and `sqrt(nu/a)` correction of the joint density, unclamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityParts {
    pub leading: f64,
    pub correction: f64,
}

impl DensityParts {
    pub fn total(&self) -> f64 {
        self.leading + self.correction
    }
}

/// The two terms of the joint density at overshoot `x` and `w` (or `w*`).
pub fn density_parts(
    ctx: &ExpansionContext,
    x: f64,
    w: &[f64],
    variant: HVariant,
    sign: SignMode,
) -> Result<DensityParts> {
    let ms = &ctx.moments;
    let l = ctx.ladder_rho()?;
    let (q, det, dim, rho1) = match variant {
        HVariant::General | HVariant::Positive => (q_point(ctx, x, w)?, ms.sigma_det, ms.dim_w, l.rho1(x)),
        HVariant::Starred => {
            ctx.require_star()?;
            (
                q_point_star(ctx, x, w)?,
                ms.sigma_star_det,
                ms.dim_w + 1,
                l.rho1_star(x),
            )
        }
        HVariant::Marginal0 | HVariant::Marginal0Star => {
            return Err(Error::DomainError("marginal variants have no joint density".into()));
        }
    };
    if !(x > 0.0) {
        return Ok(DensityParts {
            leading: 0.0,
            correction: 0.0,
        });
    }
    let norm = normal::pdf_m(&q) / (det.sqrt() * (ctx.a / ms.nu).powf(dim as f64 / 2.0));
    let r0 = l.rho0(x);
    let h = eval_h(&q, ctx, variant)?;
    Ok(DensityParts {
        leading: norm * r0,
        correction: norm * ctx.root() * (h * r0 + sign.factor() * dot(&q, &rho1)),
    })
}

/// Approximate joint density, with negative values clamped to zero and
/// counted on the context.
pub fn density_qhat(ctx: &ExpansionContext, x: f64, w: &[f64], variant: HVariant, sign: SignMode) -> Result<f64> {
    let v = density_parts(ctx, x, w, variant, sign)?.total();
    if v < 0.0 {
        ctx.clamped.fetch_add(1, Ordering::Relaxed);
        return Ok(0.0);
    }
    Ok(v)
}

/// `H(q) = alpha q^3 + beta q` for `m = 1`.
fn cubic_coefficients(ctx: &ExpansionContext, variant: HVariant) -> Result<(f64, f64)> {
    let h1 = eval_h(&[1.0], ctx, variant)?;
    let h2 = eval_h(&[2.0], ctx, variant)?;
    let alpha = (h2 - 2.0 * h1) / 6.0;
    Ok((alpha, h1 - alpha))
}

/// `int_l^u phi(q) q^k dq` for `k = 0, 1, 3`.
fn gaussian_moments(l: f64, u: f64) -> (f64, f64, f64) {
    let edge = |q: f64| -> (f64, f64) {
        if q.is_infinite() {
            (0.0, 0.0)
        } else {
            let p = normal::pdf(q);
            (p, (q * q + 2.0) * p)
        }
    };
    let (pl, cl) = edge(l);
    let (pu, cu) = edge(u);
    (normal::cdf(u) - normal::cdf(l), pl - pu, cl - cu)
}

/// Bounds of a region in `(overshoot, W)` space for `m = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `x0 < x <= x1`, `w0 < w <= w1`.
    Rectangle { x0: f64, x1: f64, w0: f64, w1: f64 },
    /// `x0 < x <= x1`, `q0 < q <= q1` in standardized coordinates.
    QBand { x0: f64, x1: f64, q0: f64, q1: f64 },
}

/// Approximate probability of a region under the joint expansion (`m = 1`),
/// integrating the signed density exactly in `w` and by quadrature in `x`.
/// With `leading_only` the `sqrt(nu/a)` term is dropped.
pub fn region_probability(
    ctx: &ExpansionContext,
    region: Region,
    variant: HVariant,
    sign: SignMode,
    leading_only: bool,
) -> Result<f64> {
    let ms = &ctx.moments;
    if ms.dim_w != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: ms.dim_w,
        });
    }
    if !matches!(variant, HVariant::General | HVariant::Positive) {
        return Err(Error::DomainError(
            "region probabilities use the general or positive density".into(),
        ));
    }
    let l = ctx.ladder_rho()?;
    let (alpha, beta) = cubic_coefficients(ctx, variant)?;
    let s = if leading_only { 0.0 } else { ctx.root() };
    let sgn = sign.factor();
    let root = ctx.root();
    let sinv = ms.sigma_inv_sqrt[(0, 0)];
    let gamma = ms.gamma[0];
    let (x0, x_hi) = match region {
        Region::Rectangle { x0, x1, .. } | Region::QBand { x0, x1, .. } => (x0.max(0.0), x1),
    };
    let x1 = x_hi.min(l.support_max());
    if x1 <= x0 {
        return Ok(0.0);
    }
    let bounds = |x: f64| -> (f64, f64) {
        match region {
            Region::Rectangle { w0, w1, .. } => {
                let c = gamma * (x + ctx.a);
                ((w0 - c) * sinv * root, (w1 - c) * sinv * root)
            }
            Region::QBand { q0, q1, .. } => (q0, q1),
        }
    };
    let x_free = match region {
        Region::QBand { .. } => true,
        Region::Rectangle { .. } => gamma == 0.0,
    };
    if x_free {
        let (lo, hi) = bounds(x0);
        let (i0, i1, i3) = gaussian_moments(lo, hi);
        let r0 = l.rho0_integral(x0, x_hi);
        let r1 = l.rho1_integral(x0, x_hi)[0];
        return Ok(r0 * i0 + s * (r0 * (alpha * i3 + beta * i1) + sgn * r1 * i1));
    }
    let rule = gauss_legendre(8);
    let panels = ((x1 - x0) * 200.0).ceil().clamp(50.0, 20_000.0) as usize;
    Ok(integrate(
        |x| {
            let (lo, hi) = bounds(x);
            let (i0, i1, i3) = gaussian_moments(lo, hi);
            let r0 = l.rho0(x);
            let r1 = l.rho1(x)[0];
            r0 * i0 + s * (r0 * (alpha * i3 + beta * i1) + sgn * r1 * i1)
        },
        x0,
        x1,
        panels,
        &rule,
    ))
}

/// Numerical integral of the leading (or full, unclamped) joint density
/// over `x in (0, x_max]` and a `+-10` standard deviation box in `w`,
/// for `m <= 2`, calling the pointwise density evaluator.
pub fn density_mass(ctx: &ExpansionContext, variant: HVariant, leading_only: bool, x_panels: usize) -> Result<f64> {
    let ms = &ctx.moments;
    let m = ms.dim_w;
    if m > 2 || !matches!(variant, HVariant::General | HVariant::Positive) {
        return Err(Error::DomainError(
            "density_mass supports the general or positive density with m <= 2".into(),
        ));
    }
    let l = ctx.ladder_rho()?;
    let x_max = l.support_max();
    let rule = gauss_legendre(8);
    let w_rule = gauss_legendre(10);
    let half = 10.0 * (ctx.a / ms.nu).sqrt();
    let sd: Vec<f64> = (0..m).map(|j| ms.sigma_mat[(j, j)].sqrt().max(1e-300) * half).collect();
    let w_panels = 40;
    let inner = |x: f64| -> f64 {
        let center: Vec<f64> = ms.gamma.iter().map(|g| g * (x + ctx.a)).collect();
        let f = |w: &[f64]| -> f64 {
            match density_parts(ctx, x, w, variant, SignMode::Plus) {
                Ok(p) if leading_only => p.leading,
                Ok(p) => p.total(),
                Err(_) => f64::NAN,
            }
        };
        match m {
            1 => integrate(|w| f(&[w]), center[0] - sd[0], center[0] + sd[0], w_panels, &w_rule),
            _ => integrate(
                |w0| {
                    integrate(
                        |w1| f(&[w0, w1]),
                        center[1] - sd[1],
                        center[1] + sd[1],
                        w_panels / 2,
                        &w_rule,
                    )
                },
                center[0] - sd[0],
                center[0] + sd[0],
                w_panels / 2,
                &w_rule,
            ),
        }
    };
    Ok(integrate(inner, 0.0, x_max, x_panels, &rule))
}

/// Shared rule for callers that need repeated one-dimensional integrals.
pub fn default_rule() -> Rule {
    gauss_legendre(8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::analytic_ladder_moments;
    use crate::linalg::{SingularPolicy, Tensor3};
    use crate::model::{analytic_moments, IncrementModel, JointMoments};
    use nalgebra::DMatrix;

    fn exp_ctx(a: f64) -> ExpansionContext {
        let m = IncrementModel::positive_exponential(1.0, vec![2.0], vec![0.0], vec![1.0]).unwrap();
        let ms = analytic_moments(&m).unwrap();
        let l = analytic_ladder_moments(&m, &ms).unwrap();
        ExpansionContext::new(ms, Some(l), a).unwrap()
    }

    #[test]
    fn q_point_arithmetic() {
        // m = 1, Sigma = 1, gamma = 0, nu = 1
        let j = JointMoments::new(
            vec![1.0, 0.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            Tensor3::zeros(2),
        )
        .unwrap();
        let ms = MomentSet::from_joint(&j, SingularPolicy::Strict).unwrap();
        let ctx = ExpansionContext::new(ms, None, 4.0).unwrap();
        assert!((q_point(&ctx, 0.0, &[2.0]).unwrap()[0] - 1.0).abs() < 1e-15);
        let ctx2 = exp_ctx(9.0);
        let g = ctx2.moments.gamma[0];
        assert!(q_point(&ctx2, 1.5, &[g * 10.5]).unwrap()[0].abs() < 1e-14);
        assert!(q_tilde(&ctx2, &[g * 9.0]).unwrap()[0].abs() < 1e-14);
    }

    #[test]
    fn h_from_hand_values() {
        // EZ^3 = 0, E|Z|^2 Z = 0, nu = 1, no ladder term: H(1) = (1 + 2 - 1) EXZ / 2
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let j = JointMoments::new(vec![1.0, 0.0], cov, Tensor3::zeros(2)).unwrap();
        let ms = MomentSet::from_joint(&j, SingularPolicy::Strict).unwrap();
        let xz = ms.xz[0];
        assert!((xz - 0.5f64.sqrt()).abs() < 1e-15);
        let m = IncrementModel::positive_exponential(1.0, vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let ms0 = analytic_moments(&m).unwrap();
        let mut l = analytic_ladder_moments(&m, &ms0).unwrap();
        l.xz = vec![0.0];
        l.model_fingerprint = None;
        let ctx = ExpansionContext::new(ms, Some(l), 10.0).unwrap();
        assert!((eval_h(&[1.0], &ctx, HVariant::General).unwrap() - xz).abs() < 1e-15);
    }

    #[test]
    fn missing_ladder_is_reported() {
        let m = IncrementModel::bivariate_normal(0.5, 0.0, 0.4).unwrap();
        let ctx = ExpansionContext::new(analytic_moments(&m).unwrap(), None, 10.0).unwrap();
        assert!(matches!(
            eval_h(&[1.0], &ctx, HVariant::General),
            Err(Error::MissingLadderMoments)
        ));
        assert!(eval_h(&[1.0], &ctx, HVariant::Positive).is_ok());
    }

    #[test]
    fn exact_and_numeric_region_probabilities_agree() {
        let ctx = exp_ctx(10.0);
        let exact = region_probability(
            &ctx,
            Region::QBand {
                x0: 0.0,
                x1: f64::INFINITY,
                q0: 0.0,
                q1: f64::INFINITY,
            },
            HVariant::General,
            SignMode::Plus,
            false,
        )
        .unwrap();
        let g = ctx.moments.gamma[0];
        let big = 1e6;
        // q > 0 is w > gamma (x + a); a w-rectangle cannot express it, so
        // compare a bounded rectangle through both code paths instead
        let rect = Region::Rectangle {
            x0: 0.2,
            x1: 3.0,
            w0: g * 10.0,
            w1: big,
        };
        let numeric = region_probability(&ctx, rect, HVariant::General, SignMode::Plus, false).unwrap();
        let brute = integrate(
            |x| {
                integrate(
                    |w| {
                        density_parts(&ctx, x, &[w], HVariant::General, SignMode::Plus)
                            .unwrap()
                            .total()
                    },
                    g * 10.0,
                    g * 10.0 + 60.0,
                    200,
                    &gauss_legendre(8),
                )
            },
            0.2,
            3.0,
            100,
            &gauss_legendre(8),
        );
        assert!((numeric - brute).abs() < 1e-8, "{numeric} vs {brute}");
        assert!(exact > 0.0 && exact < 1.0);
    }
}

//! Marginal laws of `W_tau` and `(W_tau, tau)`, and distribution functions
//! of smooth statistics `Xi = sqrt(a) h(X_tau/a, W_tau/a, tau/a)`.

use std::fmt;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{eval_h, q_tilde, q_tilde_star, ExpansionContext, HVariant};
use crate::linalg::dot;
use crate::model::MomentSet;
use crate::normal;
use crate::walk::StoppedWalk;
use crate::{Error, Result};

/// Second-order density of `W_tau` (or of `(W_tau, tau)` when `starred`),
/// clamped at zero.
pub fn marginal_density_w(ctx: &ExpansionContext, w: &[f64], starred: bool) -> Result<f64> {
    let ms = &ctx.moments;
    let (q, det, dim, variant) = if starred {
        (
            q_tilde_star(ctx, w)?,
            ms.sigma_star_det,
            ms.dim_w + 1,
            HVariant::Marginal0Star,
        )
    } else {
        (q_tilde(ctx, w)?, ms.sigma_det, ms.dim_w, HVariant::Marginal0)
    };
    let lead = normal::pdf_m(&q) / (det.sqrt() * (ctx.a / ms.nu).powf(dim as f64 / 2.0));
    let v = lead * (1.0 + ctx.root() * eval_h(&q, ctx, variant)?);
    if v < 0.0 {
        ctx.clamped.fetch_add(1, Ordering::Relaxed);
        return Ok(0.0);
    }
    Ok(v)
}

fn ladder_shift(ctx: &ExpansionContext, gamma1: f64, sigma: f64) -> Result<f64> {
    if gamma1 == 0.0 {
        return Ok(0.0);
    }
    let l = ctx.ladder()?;
    Ok(gamma1 * l.e_x2 / (2.0 * ctx.moments.nu * sigma * l.e_t))
}

/// `P(W_tau < w) ~ Phi(w^) + sqrt(nu/a) phi(w^) H_1(w^)` for `m = 1`,
/// clamped to `[0, 1]`.
pub fn marginal_cdf_w(ctx: &ExpansionContext, w: f64) -> Result<f64> {
    let ms = &ctx.moments;
    if ms.dim_w != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: ms.dim_w,
        });
    }
    let nu = ms.nu;
    let sigma = ms.sigma_mat[(0, 0)].sqrt();
    let gamma = ms.gamma[0];
    let wh = (w - gamma * ctx.a) / (sigma * (ctx.a / nu).sqrt());
    let k = -ms.z_third.get(0, 0, 0) / 6.0 + ms.xz[0] / (2.0 * nu);
    let h1 = (wh * wh - 1.0) * k - ladder_shift(ctx, gamma, sigma)?;
    Ok((normal::cdf(wh) + ctx.root() * normal::pdf(wh) * h1).clamp(0.0, 1.0))
}

/// Sorts values into the order of their abscissae, so a grid evaluation is
/// nondecreasing.
fn rearrange(xs: &[f64], values: Vec<f64>) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut sorted = values;
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0; xs.len()];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sorted[k];
    }
    out
}

/// [`marginal_cdf_w`] on a grid, rearranged to be monotone.
pub fn marginal_cdf_w_grid(ctx: &ExpansionContext, ws: &[f64]) -> Result<Vec<f64>> {
    let v = ws.iter().map(|&w| marginal_cdf_w(ctx, w)).collect::<Result<Vec<_>>>()?;
    Ok(rearrange(ws, v))
}

/// How the `w` argument of a statistic is built from a stopped walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StatCoords {
    /// `w = W_tau`.
    Raw,
    /// `w = (sum (e_i - center), sum (e_i - center)^2)` from the first
    /// coordinate of the retained increments.
    Studentized { center: f64 },
}

/// `h(x, w, t)`; `None` outside the domain of `h`.
pub type StatFn = Arc<dyn Fn(f64, &[f64], f64) -> Option<f64> + Send + Sync>;

/// A smooth function `h` of the scaled stopped sums with its second-order
/// coefficients at `s0 = (1, gamma*)`.
///
/// Arguments are split as `(x, y, v*)` with `y` the first `W` coordinate and
/// `v* = (remaining W coordinates, t)`. Regularity: `h(s0) = 0`,
/// `dh/dx = 0`, `dh/dy = 1`, `grad_{v*} h = 0` at `s0`.
#[derive(Clone)]
pub struct SmoothStatistic {
    pub name: String,
    func: StatFn,
    pub coords: StatCoords,
    pub s0: Vec<f64>,
    /// `(1/2) d^2h/dy^2`.
    pub h0: f64,
    /// `d^2h / dy dv*`.
    pub h1: Vec<f64>,
    /// `(1/2)` Hessian in `v*`.
    pub a_mat: DMatrix<f64>,
    /// Largest allowed `|s - s0|` (sup norm) when evaluating `Xi`.
    pub radius: f64,
}

impl fmt::Debug for SmoothStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothStatistic")
            .field("name", &self.name)
            .field("coords", &self.coords)
            .field("s0", &self.s0)
            .field("h0", &self.h0)
            .field("h1", &self.h1)
            .field("a_mat", &self.a_mat)
            .finish()
    }
}

const REG_TOL: f64 = 1e-6;

fn point_of(moments: &MomentSet) -> Vec<f64> {
    let mut s = vec![1.0];
    s.extend_from_slice(&moments.gamma_star);
    s
}

impl SmoothStatistic {
    fn eval_at(&self, s: &[f64]) -> Option<f64> {
        let n = s.len();
        (self.func)(s[0], &s[1..n - 1], s[n - 1])
    }

    fn eval_checked(&self, s: &[f64]) -> Result<f64> {
        match self.eval_at(s) {
            Some(v) if v.is_finite() => Ok(v),
            _ => Err(Error::InvalidStatistic(format!(
                "{} is undefined near its centering point",
                self.name
            ))),
        }
    }

    fn step(&self, i: usize) -> f64 {
        1e-4 * self.s0[i].abs().max(1.0)
    }

    fn first_derivative(&self, i: usize) -> Result<f64> {
        let h = self.step(i);
        let mut p = self.s0.clone();
        let mut m = self.s0.clone();
        p[i] += h;
        m[i] -= h;
        Ok((self.eval_checked(&p)? - self.eval_checked(&m)?) / (2.0 * h))
    }

    fn second_derivative(&self, i: usize, j: usize) -> Result<f64> {
        let (hi, hj) = (self.step(i), self.step(j));
        let at = |di: f64, dj: f64| -> Result<f64> {
            let mut s = self.s0.clone();
            s[i] += di;
            s[j] += dj;
            self.eval_checked(&s)
        };
        if i == j {
            return Ok((at(hi, 0.0)? - 2.0 * at(0.0, 0.0)? + at(-hi, 0.0)?) / (hi * hi));
        }
        Ok((at(hi, hj)? - at(hi, -hj)? - at(-hi, hj)? + at(-hi, -hj)?) / (4.0 * hi * hj))
    }

    fn check_regularity(&self) -> Result<()> {
        let at0 = self.eval_checked(&self.s0)?;
        let mut bad = Vec::new();
        if at0.abs() > REG_TOL {
            bad.push(format!("h(s0) = {at0:e}"));
        }
        for i in 0..self.s0.len() {
            let d = self.first_derivative(i)?;
            let want = if i == 1 { 1.0 } else { 0.0 };
            if (d - want).abs() > REG_TOL.sqrt() * 1e-1 {
                bad.push(format!("derivative {i} = {d:e}, expected {want}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidStatistic(format!("{}: {}", self.name, bad.join("; "))))
        }
    }

    fn bare(name: &str, func: StatFn, coords: StatCoords, s0: Vec<f64>) -> Self {
        let m = s0.len() - 2;
        SmoothStatistic {
            name: name.to_string(),
            func,
            coords,
            s0,
            h0: 0.0,
            h1: vec![0.0; m],
            a_mat: DMatrix::zeros(m, m),
            radius: f64::INFINITY,
        }
    }

    /// Builds a statistic and takes its second-order coefficients by
    /// central differences at `s0 = (1, gamma*)`.
    pub fn new(name: &str, func: StatFn, coords: StatCoords, moments: &MomentSet) -> Result<Self> {
        let mut st = Self::bare(name, func, coords, point_of(moments));
        st.check_regularity()?;
        let m = st.h1.len();
        st.h0 = 0.5 * st.second_derivative(1, 1)?;
        for k in 0..m {
            st.h1[k] = st.second_derivative(1, 2 + k)?;
            for l in 0..m {
                st.a_mat[(k, l)] = 0.5 * st.second_derivative(2 + k, 2 + l)?;
            }
        }
        Ok(st)
    }

    /// Builds a statistic with known second-order coefficients; regularity
    /// is still checked numerically.
    pub fn with_derivatives(
        name: &str,
        func: StatFn,
        coords: StatCoords,
        moments: &MomentSet,
        h0: f64,
        h1: Vec<f64>,
        a_mat: DMatrix<f64>,
    ) -> Result<Self> {
        let mut st = Self::bare(name, func, coords, point_of(moments));
        let m = st.h1.len();
        if h1.len() != m || a_mat.nrows() != m || a_mat.ncols() != m {
            return Err(Error::WrongDimension {
                expected: m,
                got: h1.len(),
            });
        }
        st.check_regularity()?;
        st.h0 = h0;
        st.h1 = h1;
        st.a_mat = a_mat;
        Ok(st)
    }

    /// The self-normalized statistic scaled to unit slope,
    /// `Xi = (sigma / sqrt(nu)) T0`, acting on `(Y, V)` where
    /// `Y = sum (e_i - mu)` and `V = sum (e_i - mu)^2`.
    ///
    /// `h(x, y, v, t) = (sigma / sqrt(nu)) y / sqrt(v - y^2 / t)`, centred at
    /// `(1, 0, sigma^2/nu, 1/nu)`.
    pub fn t_statistic(nu: f64, sigma: f64, mu: f64) -> Result<Self> {
        if !(nu > 0.0 && sigma > 0.0) {
            return Err(Error::DomainError(format!(
                "need nu > 0 and sigma > 0, got {nu}, {sigma}"
            )));
        }
        let scale = sigma / nu.sqrt();
        let func: StatFn = Arc::new(move |_x, w, t| {
            let d = w[1] - w[0] * w[0] / t;
            (d > 0.0 && t > 0.0).then(|| scale * w[0] / d.sqrt())
        });
        let mut st = Self::bare(
            "t",
            func,
            StatCoords::Studentized { center: mu },
            vec![1.0, 0.0, sigma * sigma / nu, 1.0 / nu],
        );
        st.check_regularity()?;
        st.h1 = vec![-nu / (2.0 * sigma * sigma), 0.0];
        Ok(st)
    }

    /// `h(x, w, t) = w_1 - gamma_1`, so `Xi = (Y_tau - gamma_1 a) / sqrt(a)`.
    pub fn centered_sum(moments: &MomentSet) -> Result<Self> {
        let g = moments.gamma[0];
        let func: StatFn = Arc::new(move |_x, w, _t| Some(w[0] - g));
        let st = Self::bare("centered_sum", func, StatCoords::Raw, point_of(moments));
        st.check_regularity()?;
        Ok(st)
    }

    /// Number of `v*` coordinates.
    pub fn dim_v(&self) -> usize {
        self.h1.len()
    }
}

/// Block form of `Sigma*` with `Y - gamma_1 X` first and
/// `V* - gamma_2 X` after it.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaStarPartition {
    pub s11: f64,
    pub s12: Vec<f64>,
    pub s22: DMatrix<f64>,
    /// `Sigma_11 - Sigma_12 Sigma_22^{-1} Sigma_21`.
    pub s11_2: f64,
    /// `Sigma_22 - Sigma_21 Sigma_12 / Sigma_11`.
    pub s22_1: DMatrix<f64>,
    pub gamma1: f64,
    pub gamma2: Vec<f64>,
}

impl SigmaStarPartition {
    pub fn new(moments: &MomentSet) -> Result<Self> {
        let s = &moments.sigma_star_mat;
        let n = s.nrows();
        let s11 = s[(0, 0)];
        let s12: Vec<f64> = (1..n).map(|j| s[(0, j)]).collect();
        let s22 = s.view((1, 1), (n - 1, n - 1)).into_owned();
        let singular = |which: &'static str| Error::SingularSigma { which, ratio: 0.0 };
        if !(s11 > 0.0) {
            return Err(singular("Sigma_11"));
        }
        let s22_inv = s22.clone().try_inverse().ok_or_else(|| singular("Sigma_22"))?;
        let v = nalgebra::DVector::from_column_slice(&s12);
        let s11_2 = s11 - (v.transpose() * &s22_inv * &v)[(0, 0)];
        let s22_1 = &s22 - &v * v.transpose() / s11;
        let scale = s11.abs().max(s22.amax());
        if !(s11_2 > 1e-12 * scale) {
            return Err(singular("Sigma_11.2"));
        }
        if s22_1.clone().cholesky().is_none() {
            return Err(singular("Sigma_22.1"));
        }
        Ok(SigmaStarPartition {
            s11,
            s12,
            s22,
            s11_2,
            s22_1,
            gamma1: moments.gamma_star[0],
            gamma2: moments.gamma_star[1..].to_vec(),
        })
    }

    pub fn s21(&self) -> &[f64] {
        &self.s12
    }
}

/// `F_a(c) ~ P(Xi <= c)` for a regular smooth statistic, clamped to `[0, 1]`.
pub fn fa_cdf(c: f64, ctx: &ExpansionContext, part: &SigmaStarPartition, stat: &SmoothStatistic) -> Result<f64> {
    let ms = &ctx.moments;
    if stat.dim_v() != part.s12.len() {
        return Err(Error::WrongDimension {
            expected: part.s12.len(),
            got: stat.dim_v(),
        });
    }
    let nu = ms.nu;
    let sigma = part.s11.sqrt();
    let g1 = part.gamma1;
    let ch = c * nu.sqrt() / sigma;
    let c2 = ch * ch;
    let mut lin = vec![0.0; ms.dim_w + 1];
    lin[0] = -g1;
    lin[1] = 1.0;
    let k3 = ms.joint.third.contract(&lin);
    let exy = ms.joint.cov[(0, 1)] - g1 * ms.joint.cov[(0, 0)];
    let s21 = part.s21();
    let a = &stat.a_mat;
    let quad = {
        let v = nalgebra::DVector::from_column_slice(s21);
        (v.transpose() * a * &v)[(0, 0)]
    };
    let trace = (a * &part.s22).trace();
    let bracket = (-k3 / (6.0 * sigma.powi(3)) + exy / (2.0 * nu * sigma)) * (c2 - 1.0)
        - ladder_shift(ctx, g1, sigma)?
        - sigma * c2 * stat.h0 / nu
        - c2 * dot(&stat.h1, s21) / (nu * sigma)
        - (c2 - 1.0) * quad / (nu * sigma.powi(3))
        - trace / (nu * sigma);
    Ok((normal::cdf(ch) + normal::pdf(ch) * ctx.root() * bracket).clamp(0.0, 1.0))
}

/// [`fa_cdf`] on a grid, rearranged to be monotone.
pub fn fa_cdf_grid(
    cs: &[f64],
    ctx: &ExpansionContext,
    part: &SigmaStarPartition,
    stat: &SmoothStatistic,
) -> Result<Vec<f64>> {
    let v = cs
        .iter()
        .map(|&c| fa_cdf(c, ctx, part, stat))
        .collect::<Result<Vec<_>>>()?;
    Ok(rearrange(cs, v))
}

/// `mu3 (1 + 2c^2) / (6 sigma^3) - Sigma_xy / (2 nu sigma)`.
pub fn t0_bracket(c: f64, nu: f64, sigma: f64, mu3: f64, sigma_xy: f64) -> f64 {
    mu3 * (1.0 + 2.0 * c * c) / (6.0 * sigma.powi(3)) - sigma_xy / (2.0 * nu * sigma)
}

fn check_t0_args(a: f64, nu: f64, sigma: f64) -> Result<()> {
    if !(a > 0.0 && nu > 0.0 && sigma > 0.0) {
        return Err(Error::DomainError(format!(
            "need a, nu, sigma > 0, got a = {a}, nu = {nu}, sigma = {sigma}"
        )));
    }
    Ok(())
}

/// `P(T0 <= c) ~ Phi(c) + phi(c) sqrt(nu/a) {mu3 (1 + 2c^2)/(6 sigma^3)
/// - Sigma_xy/(2 nu sigma)}`, clamped to `[0, 1]`.
pub fn t0_cdf(c: f64, a: f64, nu: f64, sigma: f64, mu3: f64, sigma_xy: f64) -> Result<f64> {
    check_t0_args(a, nu, sigma)?;
    let v = normal::cdf(c) + normal::pdf(c) * (nu / a).sqrt() * t0_bracket(c, nu, sigma, mu3, sigma_xy);
    Ok(v.clamp(0.0, 1.0))
}

/// Corrected `p`-quantile of `T0`: `z_p - sqrt(nu/a) bracket(z_p)`.
pub fn hall_quantile(p: f64, a: f64, nu: f64, sigma: f64, mu3: f64, sigma_xy: f64) -> Result<f64> {
    check_t0_args(a, nu, sigma)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("probability must lie in (0, 1), got {p}")));
    }
    let z = normal::quantile(p);
    Ok(z - (nu / a).sqrt() * t0_bracket(z, nu, sigma, mu3, sigma_xy))
}

/// `Xi = sqrt(a) h(X_tau/a, w/a, tau/a)` for one stopped walk.
pub fn xi_statistic(walk: &StoppedWalk, stat: &SmoothStatistic, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::DomainError(format!("boundary a must be positive, got {a}")));
    }
    let w: Vec<f64> = match stat.coords {
        StatCoords::Raw => walk.w_tau.clone(),
        StatCoords::Studentized { center } => {
            let inc = walk.increments()?;
            let (mut y, mut v) = (0.0, 0.0);
            for e in inc.y() {
                let d = e - center;
                y += d;
                v += d * d;
            }
            vec![y, v]
        }
    };
    let mut s = Vec::with_capacity(w.len() + 2);
    s.push(walk.x_tau / a);
    s.extend(w.iter().map(|v| v / a));
    s.push(walk.tau as f64 / a);
    if s.len() != stat.s0.len() {
        return Err(Error::WrongDimension {
            expected: stat.s0.len() - 2,
            got: w.len(),
        });
    }
    let dist = s.iter().zip(&stat.s0).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    if dist > stat.radius {
        return Err(Error::OutOfNeighborhood);
    }
    match stat.eval_at(&s) {
        Some(v) if v.is_finite() => Ok(a.sqrt() * v),
        _ => Err(Error::OutOfNeighborhood),
    }
}

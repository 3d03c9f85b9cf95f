//! Ladder-variable constants `ET`, `EX~`, `EX~^2`, the functions
//! `rho_0`, `rho_1`, `rho_1*`, and Monte Carlo checks of the stopped-sum
//! identities they rely on.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, mat_vec};
use crate::model::{IncrementModel, MomentSet};
use crate::stats::{mean_se, studentize, Estimate};
use crate::walk::LadderSample;
use crate::{Error, Result};

/// Where a [`LadderMoments`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LadderSource {
    Analytic,
    Empirical { n: usize },
}

/// Standard errors of the scalar ladder moments (zero when analytic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSe {
    pub e_t: f64,
    pub e_x: f64,
    pub e_x2: f64,
    pub xz: Vec<f64>,
    pub xz_star: Vec<f64>,
    pub t_z: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Survival {
    /// Ladder heights sorted ascending with suffix sums of the paired
    /// `Z~` (`m` per row) and `Z~*` (`m + 1` per row).
    Empirical {
        x_sorted: Vec<f64>,
        z_suffix: Vec<f64>,
        zs_suffix: Vec<f64>,
        abs_z_suffix: Vec<f64>,
        z: Vec<f64>,
        zs: Vec<f64>,
    },
    /// `X~ = X ~ Exp(rate)`; `E[Z; X >= x] = -rate x e^{-rate x} dir`.
    Exponential {
        rate: f64,
        dir: Vec<f64>,
        dir_star: Vec<f64>,
    },
    /// Only the scalar constants are known; every `rho` evaluates to NaN.
    Unavailable,
}

/// Ladder constants entering the expansions.
///
/// `Z~ = Z_T / sqrt(ET)` and `Z~* = Z*_T / sqrt(ET)`.
#[derive(Debug, Clone)]
pub struct LadderMoments {
    pub dim_w: usize,
    pub source: LadderSource,
    pub nu: f64,
    pub e_t: f64,
    pub e_x: f64,
    pub e_x2: f64,
    /// `E[X~ Z~]`.
    pub xz: Vec<f64>,
    /// `E[X~ Z~*]`.
    pub xz_star: Vec<f64>,
    /// `E[T Z~]`.
    pub t_z: Vec<f64>,
    pub se: LadderSe,
    pub model_fingerprint: Option<u64>,
    survival: Survival,
}

/// Selects one of the three ladder functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho {
    Rho0,
    Rho1,
    Rho1Star,
}

fn col_means(rows: &[f64], width: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    (0..width)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| rows[i * width + j]).collect();
            let e = mean_se(&col);
            (e.mean, e.se)
        })
        .unzip()
}

/// Empirical ladder moments from `sample`, standardizing with `base`.
pub fn ladder_moments(sample: &LadderSample, base: &MomentSet) -> Result<LadderMoments> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::InvalidCount("empty ladder sample".into()));
    }
    if sample.dim_w != base.dim_w {
        return Err(Error::WrongDimension {
            expected: base.dim_w,
            got: sample.dim_w,
        });
    }
    let m = base.dim_w;
    let t: Vec<f64> = sample.t.iter().map(|&t| t as f64).collect();
    let et = mean_se(&t);
    let ex = mean_se(&sample.x);
    let x2: Vec<f64> = sample.x.iter().map(|x| x * x).collect();
    let ex2 = mean_se(&x2);
    let root = et.mean.sqrt();

    let mut z = Vec::with_capacity(n * m);
    let mut zs = Vec::with_capacity(n * (m + 1));
    for i in 0..n {
        let w = sample.w_draw(i);
        z.extend(base.standardize(sample.x[i], w).into_iter().map(|v| v / root));
        zs.extend(
            base.standardize_star(sample.x[i], w, t[i])
                .into_iter()
                .map(|v| v / root),
        );
    }
    let weighted = |rows: &[f64], width: usize, weight: &[f64]| -> Vec<f64> {
        (0..n)
            .flat_map(|i| (0..width).map(move |j| (i, j)))
            .map(|(i, j)| weight[i] * rows[i * width + j])
            .collect()
    };
    let (xz, xz_se) = col_means(&weighted(&z, m, &sample.x), m, n);
    let (xz_star, xz_star_se) = col_means(&weighted(&zs, m + 1, &sample.x), m + 1, n);
    let (t_z, t_z_se) = col_means(&weighted(&z, m, &t), m, n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sample.x[a].total_cmp(&sample.x[b]));
    let x_sorted: Vec<f64> = order.iter().map(|&i| sample.x[i]).collect();
    let suffix = |rows: &[f64], width: usize| -> Vec<f64> {
        let mut out = vec![0.0; (n + 1) * width];
        for k in (0..n).rev() {
            let i = order[k];
            for j in 0..width {
                out[k * width + j] = out[(k + 1) * width + j] + rows[i * width + j];
            }
        }
        out
    };
    let z_suffix = suffix(&z, m);
    let zs_suffix = suffix(&zs, m + 1);
    let norms: Vec<f64> = (0..n)
        .map(|i| dot(&z[i * m..(i + 1) * m], &z[i * m..(i + 1) * m]).sqrt())
        .collect();
    let abs_z_suffix = suffix(&norms, 1);
    let z_sorted: Vec<f64> = order.iter().flat_map(|&i| z[i * m..(i + 1) * m].to_vec()).collect();
    let zs_sorted: Vec<f64> = order
        .iter()
        .flat_map(|&i| zs[i * (m + 1)..(i + 1) * (m + 1)].to_vec())
        .collect();

    Ok(LadderMoments {
        dim_w: m,
        source: LadderSource::Empirical { n },
        nu: base.nu,
        e_t: et.mean,
        e_x: ex.mean,
        e_x2: ex2.mean,
        xz,
        xz_star,
        t_z,
        se: LadderSe {
            e_t: et.se,
            e_x: ex.se,
            e_x2: ex2.se,
            xz: xz_se,
            xz_star: xz_star_se,
            t_z: t_z_se,
        },
        model_fingerprint: sample.model_fingerprint,
        survival: Survival::Empirical {
            x_sorted,
            z_suffix,
            zs_suffix,
            abs_z_suffix,
            z: z_sorted,
            zs: zs_sorted,
        },
    })
}

/// Exact ladder moments where they are known in closed form: for
/// `positive-exponential` models `T = 1` and `X~ = X`.
pub fn analytic_ladder_moments(model: &IncrementModel, base: &MomentSet) -> Result<LadderMoments> {
    let (rate, intercept) = model
        .exponential_params()
        .ok_or_else(|| Error::NoClosedForm(format!("ladder law of `{}`", model.kind_name())))?;
    let m = base.dim_w;
    // W - gamma X = c (1 - rate X) + noise, and 1 - X/nu = 1 - rate X
    let dir = mat_vec(&base.sigma_inv_sqrt, intercept);
    let mut c_star = intercept.to_vec();
    c_star.push(1.0);
    let dir_star = mat_vec(&base.sigma_star_inv_sqrt, &c_star);
    Ok(LadderMoments {
        dim_w: m,
        source: LadderSource::Analytic,
        nu: base.nu,
        e_t: 1.0,
        e_x: 1.0 / rate,
        e_x2: 2.0 / (rate * rate),
        xz: base.xz.clone(),
        xz_star: base.xz_star.clone(),
        t_z: vec![0.0; m],
        se: LadderSe {
            e_t: 0.0,
            e_x: 0.0,
            e_x2: 0.0,
            xz: vec![0.0; m],
            xz_star: vec![0.0; m + 1],
            t_z: vec![0.0; m],
        },
        model_fingerprint: Some(model.fingerprint()),
        survival: Survival::Exponential { rate, dir, dir_star },
    })
}

impl LadderMoments {
    fn rho_scale0(&self) -> f64 {
        1.0 / (self.nu * self.e_t)
    }

    fn rho_scale1(&self) -> f64 {
        1.0 / (self.nu * self.e_t.sqrt())
    }

    /// `rho_0(x) = P(X~ >= x) / (nu ET)`, zero for `x <= 0`.
    pub fn rho0(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        match &self.survival {
            Survival::Empirical { x_sorted, .. } => {
                let n = x_sorted.len();
                let k = x_sorted.partition_point(|v| *v < x);
                (n - k) as f64 / n as f64 * self.rho_scale0()
            }
            Survival::Exponential { rate, .. } => (-rate * x).exp() * self.rho_scale0(),
            Survival::Unavailable => f64::NAN,
        }
    }

    fn rho1_generic(&self, x: f64, star: bool) -> Vec<f64> {
        let width = self.dim_w + usize::from(star);
        if !(x > 0.0) {
            return vec![0.0; width];
        }
        match &self.survival {
            Survival::Empirical {
                x_sorted,
                z_suffix,
                zs_suffix,
                ..
            } => {
                let n = x_sorted.len();
                let k = x_sorted.partition_point(|v| *v < x);
                let suf = if star { zs_suffix } else { z_suffix };
                let s = self.rho_scale1() / n as f64;
                suf[k * width..(k + 1) * width].iter().map(|v| v * s).collect()
            }
            Survival::Exponential { rate, dir, dir_star } => {
                let d = if star { dir_star } else { dir };
                let f = -rate * x * (-rate * x).exp() * self.rho_scale1();
                d.iter().map(|v| v * f).collect()
            }
            Survival::Unavailable => vec![f64::NAN; width],
        }
    }

    /// `rho_1(x) = E[Z~; X~ >= x] / (nu sqrt(ET))`.
    pub fn rho1(&self, x: f64) -> Vec<f64> {
        self.rho1_generic(x, false)
    }

    /// `rho_1*(x) = E[Z~*; X~ >= x] / (nu sqrt(ET))`.
    pub fn rho1_star(&self, x: f64) -> Vec<f64> {
        self.rho1_generic(x, true)
    }

    /// `E[|Z~|; X~ >= x] / (nu sqrt(ET))`, an envelope for `|rho_1(x)|`.
    pub fn rho1_envelope(&self, x: f64) -> Option<f64> {
        if !(x > 0.0) {
            return Some(0.0);
        }
        match &self.survival {
            Survival::Empirical {
                x_sorted, abs_z_suffix, ..
            } => {
                let n = x_sorted.len();
                let k = x_sorted.partition_point(|v| *v < x);
                Some(abs_z_suffix[k] / n as f64 * self.rho_scale1())
            }
            Survival::Exponential { .. } | Survival::Unavailable => None,
        }
    }

    /// Evaluates the selected function; `rho0` returns a one-element vector.
    pub fn rho_eval(&self, x: f64, which: Rho) -> Vec<f64> {
        match which {
            Rho::Rho0 => vec![self.rho0(x)],
            Rho::Rho1 => self.rho1(x),
            Rho::Rho1Star => self.rho1_star(x),
        }
    }

    /// `int_lo^hi rho_0`.
    pub fn rho0_integral(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.max(0.0), hi.max(0.0));
        if hi <= lo {
            return 0.0;
        }
        match &self.survival {
            Survival::Empirical { x_sorted, .. } => {
                let n = x_sorted.len();
                let k = x_sorted.partition_point(|v| *v <= lo);
                let s: f64 = x_sorted[k..].iter().map(|x| x.min(hi) - lo).sum();
                s / n as f64 * self.rho_scale0()
            }
            Survival::Exponential { rate, .. } => ((-rate * lo).exp() - (-rate * hi).exp()) / rate * self.rho_scale0(),
            Survival::Unavailable => f64::NAN,
        }
    }

    fn rho1_integral_generic(&self, lo: f64, hi: f64, star: bool) -> Vec<f64> {
        let width = self.dim_w + usize::from(star);
        let (lo, hi) = (lo.max(0.0), hi.max(0.0));
        if hi <= lo {
            return vec![0.0; width];
        }
        match &self.survival {
            Survival::Empirical { x_sorted, z, zs, .. } => {
                let n = x_sorted.len();
                let rows = if star { zs } else { z };
                let k = x_sorted.partition_point(|v| *v <= lo);
                let mut out = vec![0.0; width];
                for (i, x) in x_sorted.iter().enumerate().skip(k) {
                    let len = x.min(hi) - lo;
                    for j in 0..width {
                        out[j] += len * rows[i * width + j];
                    }
                }
                let s = self.rho_scale1() / n as f64;
                out.iter().map(|v| v * s).collect()
            }
            Survival::Exponential { rate, dir, dir_star } => {
                let d = if star { dir_star } else { dir };
                let g = |x: f64| {
                    if x.is_infinite() {
                        0.0
                    } else {
                        (rate * x + 1.0) * (-rate * x).exp() / rate
                    }
                };
                let f = (g(hi) - g(lo)) * self.rho_scale1();
                d.iter().map(|v| v * f).collect()
            }
            Survival::Unavailable => vec![f64::NAN; width],
        }
    }

    /// `int_lo^hi rho_1`.
    pub fn rho1_integral(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.rho1_integral_generic(lo, hi, false)
    }

    /// `int_lo^hi rho_1*`.
    pub fn rho1_star_integral(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.rho1_integral_generic(lo, hi, true)
    }

    /// Right end of the support of `rho_0`, cut at the `1e-12` tail quantile
    /// for unbounded analytic laws.
    pub fn support_max(&self) -> f64 {
        match &self.survival {
            Survival::Empirical { x_sorted, .. } => x_sorted.last().copied().unwrap_or(0.0),
            Survival::Exponential { rate, .. } => -(1e-12f64).ln() / rate,
            Survival::Unavailable => 0.0,
        }
    }

    /// Whether `rho_0`, `rho_1` and `rho_1*` can be evaluated.
    pub fn has_rho(&self) -> bool {
        !matches!(self.survival, Survival::Unavailable)
    }

    pub fn scalars(&self) -> LadderScalars {
        LadderScalars {
            dim_w: self.dim_w,
            nu: self.nu,
            e_t: self.e_t,
            e_x: self.e_x,
            e_x2: self.e_x2,
            xz: self.xz.clone(),
            xz_star: self.xz_star.clone(),
            t_z: self.t_z.clone(),
        }
    }

    /// Ladder constants without the functions `rho`.
    pub fn from_scalars(s: &LadderScalars) -> Self {
        let m = s.dim_w;
        LadderMoments {
            dim_w: m,
            source: LadderSource::Analytic,
            nu: s.nu,
            e_t: s.e_t,
            e_x: s.e_x,
            e_x2: s.e_x2,
            xz: s.xz.clone(),
            xz_star: s.xz_star.clone(),
            t_z: s.t_z.clone(),
            se: LadderSe {
                e_t: 0.0,
                e_x: 0.0,
                e_x2: 0.0,
                xz: vec![0.0; m],
                xz_star: vec![0.0; m + 1],
                t_z: vec![0.0; m],
            },
            model_fingerprint: None,
            survival: Survival::Unavailable,
        }
    }
}

/// The scalar part of [`LadderMoments`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderScalars {
    pub dim_w: usize,
    pub nu: f64,
    pub e_t: f64,
    pub e_x: f64,
    pub e_x2: f64,
    pub xz: Vec<f64>,
    pub xz_star: Vec<f64>,
    pub t_z: Vec<f64>,
}

/// One identity check: per-draw left and right sides averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub name: String,
    pub claim: f64,
    pub estimate: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub se: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub residual: f64,
}

/// Which reading of the `ET q.Z~` term in the cubic ladder identities
/// matched the simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingVerdict {
    /// `E[T (q.Z~)]`.
    #[serde(with = "crate::stats::nonfinite")]
    pub joint_max_residual: f64,
    /// `ET (q.E Z~)`.
    #[serde(with = "crate::stats::nonfinite")]
    pub product_max_residual: f64,
    pub adopted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub n: usize,
    pub entries: Vec<IdentityResidual>,
    pub reading: ReadingVerdict,
}

impl IdentityReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.name.starts_with("eq15_product"))
            .map(|e| e.residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&IdentityResidual> {
        self.entries.iter().find(|e| e.name == name)
    }
}

struct Checker {
    entries: Vec<IdentityResidual>,
}

impl Checker {
    fn push(&mut self, name: String, lhs: &[f64], rhs: &[f64]) {
        let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let d: Estimate = mean_se(&diff);
        let estimate = mean_se(lhs).mean;
        let claim = mean_se(rhs).mean;
        self.entries.push(IdentityResidual {
            name,
            claim,
            estimate,
            se: d.se,
            residual: studentize(d.mean, 0.0, d.se),
        });
    }
}

/// Studentized residuals of the stopped-sum identities on independent
/// first-ladder draws, with `zeta = Z_T = Sigma^{-1/2}(W~ - gamma X~)`.
///
/// `q` is the direction for the cubic identities; `None` uses `e_1`.
pub fn check_identities(sample: &LadderSample, base: &MomentSet, q: Option<&[f64]>) -> Result<IdentityReport> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidCount(
            "identity checks need at least two ladder draws".into(),
        ));
    }
    let m = base.dim_w;
    if sample.dim_w != m {
        return Err(Error::WrongDimension {
            expected: m,
            got: sample.dim_w,
        });
    }
    let mut e1 = vec![0.0; m];
    e1[0] = 1.0;
    let q = q.unwrap_or(&e1);
    if q.len() != m {
        return Err(Error::WrongDimension {
            expected: m,
            got: q.len(),
        });
    }
    let t: Vec<f64> = sample.t.iter().map(|&t| t as f64).collect();
    let x = &sample.x;
    let zeta: Vec<Vec<f64>> = (0..n).map(|i| base.standardize(x[i], sample.w_draw(i))).collect();
    let resid: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            sample
                .w_draw(i)
                .iter()
                .zip(&base.gamma)
                .map(|(w, g)| w - g * x[i])
                .collect()
        })
        .collect();
    let col = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..n).map(f).collect() };
    let mut c = Checker { entries: Vec::new() };

    for j in 0..m {
        let s2 = base.z_cov[(j, j)];
        let k3 = base.z_third.get(j, j, j);
        c.push(format!("wald1[{j}]"), &col(&|i| zeta[i][j]), &vec![0.0; n]);
        c.push(
            format!("wald2[{j}]"),
            &col(&|i| zeta[i][j].powi(2)),
            &col(&|i| t[i] * s2),
        );
        c.push(
            format!("wald3[{j}]"),
            &col(&|i| zeta[i][j].powi(3)),
            &col(&|i| 3.0 * s2 * t[i] * zeta[i][j] + t[i] * k3),
        );
        let cov_xw = base.joint.cov[(0, j + 1)];
        let mu_w = base.joint.mean[j + 1];
        c.push(
            format!("lemma42[{j}]"),
            &col(&|i| (x[i] - t[i] * base.nu) * (sample.w_draw(i)[j] - t[i] * mu_w)),
            &col(&|i| t[i] * cov_xw),
        );
    }
    c.push("ladder_mean".into(), x, &col(&|i| base.nu * t[i]));
    for j in 0..m {
        c.push(
            format!("ladder_direction[{j}]"),
            &col(&|i| sample.w_draw(i)[j]),
            &col(&|i| base.gamma[j] * x[i]),
        );
    }
    for a in 0..m {
        for b in a..m {
            let s = base.sigma_mat[(a, b)];
            c.push(
                format!("ladder_cov[{a}][{b}]"),
                &col(&|i| resid[i][a] * resid[i][b]),
                &col(&|i| t[i] * s),
            );
        }
    }
    for j in 0..m {
        c.push(
            format!("eq17[{j}]"),
            &col(&|i| (x[i] / base.nu - t[i]) * zeta[i][j]),
            &col(&|i| t[i] * base.xz[j] / base.nu),
        );
    }

    let qz: Vec<f64> = zeta.iter().map(|z| dot(q, z)).collect();
    let qcq = dot(q, &mat_vec(&base.z_cov, q));
    let cubic = base.z_third.contract(q);
    let sq = dot(&base.z_sq_z, q);
    let et_hat = mean_se(&t).mean;
    let lhs15 = col(&|i| qz[i].powi(3));
    c.push(
        "eq15_joint".into(),
        &lhs15,
        &col(&|i| t[i] * cubic + 3.0 * qcq * t[i] * qz[i]),
    );
    c.push(
        "eq15_product".into(),
        &lhs15,
        &col(&|i| t[i] * cubic + 3.0 * qcq * et_hat * qz[i]),
    );
    let z_norm2: Vec<f64> = zeta.iter().map(|z| dot(z, z)).collect();
    // with Cov Z = C: tr(C) T q.zeta + 2 T (Cq).zeta, i.e. (m + 2) T q.zeta when C = I
    let trace = (0..m).map(|j| base.z_cov[(j, j)]).sum::<f64>();
    let cq = mat_vec(&base.z_cov, q);
    c.push(
        "eq16_joint".into(),
        &col(&|i| z_norm2[i] * qz[i]),
        &col(&|i| t[i] * sq + trace * t[i] * qz[i] + 2.0 * t[i] * dot(&cq, &zeta[i])),
    );

    let joint = c
        .entries
        .iter()
        .find(|e| e.name == "eq15_joint")
        .map(|e| e.residual.abs())
        .unwrap_or(0.0);
    let product = c
        .entries
        .iter()
        .find(|e| e.name == "eq15_product")
        .map(|e| e.residual.abs())
        .unwrap_or(0.0);
    let adopted = if joint < 4.0 && (product >= 4.0 || joint <= product) {
        "joint"
    } else if product < 4.0 {
        "product"
    } else {
        "neither"
    };
    Ok(IdentityReport {
        n,
        entries: c.entries,
        reading: ReadingVerdict {
            joint_max_residual: joint,
            product_max_residual: product,
            adopted: adopted.into(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SingularPolicy;
    use crate::model::analytic_moments;
    use crate::rng::StreamSeed;
    use crate::walk::sample_ladder_variables;

    #[test]
    fn exponential_rho_closed_forms() {
        let m = IncrementModel::positive_exponential(1.0, vec![0.0], vec![0.0], vec![1.0]).unwrap();
        let base = analytic_moments(&m).unwrap();
        let lm = analytic_ladder_moments(&m, &base).unwrap();
        assert!((lm.rho0(0.5) - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(lm.rho0(-1.0), 0.0);
        assert_eq!(lm.rho1(-1.0), vec![0.0]);
        assert_eq!(lm.rho1_star(0.0), vec![0.0, 0.0]);
        assert!((lm.rho0_integral(0.0, f64::INFINITY) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ladder() {
        let m = IncrementModel::point_mass(1.0, vec![0.0]).unwrap();
        let base = MomentSet::from_joint(&m.joint_moments().unwrap(), SingularPolicy::Pseudo).unwrap();
        let s = sample_ladder_variables(&m, 50, 10, &StreamSeed::new(3)).unwrap();
        let lm = ladder_moments(&s, &base).unwrap();
        assert_eq!((lm.e_t, lm.e_x, lm.e_x2), (1.0, 1.0, 1.0));
        assert_eq!(lm.xz, vec![0.0]);
        assert_eq!(lm.t_z, vec![0.0]);
        let rep = check_identities(&s, &base, None).unwrap();
        assert!(rep.entries.iter().all(|e| e.residual == 0.0), "{rep:?}");
    }

    #[test]
    fn empirical_rho_is_a_step_function() {
        let m = IncrementModel::bivariate_normal(0.5, 0.0, 0.4).unwrap();
        let base = analytic_moments(&m).unwrap();
        let s = sample_ladder_variables(&m, 2000, 2000, &StreamSeed::new(5)).unwrap();
        let lm = ladder_moments(&s, &base).unwrap();
        let x0 = s.x[0];
        // left-continuous at an atom of the sample: the atom counts in P(X~ >= x0)
        assert!(lm.rho0(x0) > lm.rho0(x0 + 1e-12));
        assert!((lm.rho0(1e-300) - 1.0 / (lm.nu * lm.e_t)).abs() < 1e-12);
        let total = lm.rho0_integral(0.0, lm.support_max() + 1.0);
        assert!((total - lm.e_x / (lm.nu * lm.e_t)).abs() < 1e-12);
        let r1 = lm.rho1_integral(0.0, f64::INFINITY);
        assert!((r1[0] - lm.xz[0] / (lm.nu * lm.e_t.sqrt())).abs() < 1e-12);
    }
}

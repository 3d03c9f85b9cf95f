//! Population moments of one increment and the derived constants used by the
//! expansions.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::IncrementModel;
use crate::linalg::{inv_sqrt, mat_vec, SingularPolicy, Tensor3};
use crate::rng::StreamSeed;
use crate::{Error, Result};

/// Mean, covariance and third central moments of `U = (X, W)`, `X` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct JointMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub third: Tensor3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    third: Vec<f64>,
}

impl From<JointMoments> for JointRepr {
    fn from(j: JointMoments) -> Self {
        JointRepr {
            cov: rows(&j.cov),
            mean: j.mean,
            third: j.third.data,
        }
    }
}

impl TryFrom<JointRepr> for JointMoments {
    type Error = Error;

    fn try_from(r: JointRepr) -> Result<Self> {
        let d = r.mean.len();
        if r.cov.len() != d || r.cov.iter().any(|row| row.len() != d) || r.third.len() != d * d * d {
            return Err(Error::InvalidModel("joint moments: inconsistent dimensions".into()));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| r.cov[i][j]);
        let mut third = Tensor3::zeros(d);
        third.data = r.third;
        JointMoments::new(r.mean, cov, third)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

impl JointMoments {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, third: Tensor3) -> Result<Self> {
        let d = mean.len();
        if d < 2 || cov.nrows() != d || cov.ncols() != d || third.dim != d {
            return Err(Error::InvalidModel(
                "joint moments: need matching (m+1)-dimensional entries".into(),
            ));
        }
        Ok(JointMoments { mean, cov, third })
    }

    pub fn dim_w(&self) -> usize {
        self.mean.len() - 1
    }

    /// Hash of the exact bit patterns of every entry.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        self.mean.iter().for_each(|x| eat(*x));
        self.cov.iter().for_each(|x| eat(*x));
        self.third.data.iter().for_each(|x| eat(*x));
        h
    }
}

/// Every population constant entering the expansions.
///
/// `Z = Sigma^{-1/2}(W - gamma X)` and `Z* = Sigma*^{-1/2}(W* - gamma* X)`
/// where `W* = (W, n)` appends the time coordinate, whose increment is 1.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub dim_w: usize,
    pub joint: JointMoments,
    pub nu: f64,
    pub gamma: Vec<f64>,
    pub gamma_star: Vec<f64>,
    pub sigma_mat: DMatrix<f64>,
    pub sigma_star_mat: DMatrix<f64>,
    pub sigma_inv_sqrt: DMatrix<f64>,
    pub sigma_star_inv_sqrt: DMatrix<f64>,
    pub sigma_det: f64,
    pub sigma_star_det: f64,
    pub sigma_regular: bool,
    pub sigma_star_regular: bool,
    /// `Z = z_map (U - EU)`.
    pub z_map: DMatrix<f64>,
    pub z_star_map: DMatrix<f64>,
    pub z_cov: DMatrix<f64>,
    pub z_star_cov: DMatrix<f64>,
    pub z_third: Tensor3,
    pub z_star_third: Tensor3,
    /// `E[|Z|^2 Z]`.
    pub z_sq_z: Vec<f64>,
    pub z_star_sq_z: Vec<f64>,
    /// `E[X Z]`.
    pub xz: Vec<f64>,
    pub xz_star: Vec<f64>,
    /// `Var(Y - gamma_1 X)`, the (1,1) entry of `Sigma`.
    pub sigma2: f64,
    /// `Var(Y)`.
    pub var_y: f64,
    /// `E(Y - mu)^3`.
    pub mu3: f64,
    /// `Cov(X, Y)`.
    pub sigma_xy: f64,
    /// `E[Y]`.
    pub mu: f64,
    /// Identity of the model the moments describe, when known.
    pub model_fingerprint: Option<u64>,
}

impl MomentSet {
    /// Derives all constants from the joint moments of `(X, W)`.
    ///
    /// With [`SingularPolicy::Strict`] a singular `Sigma` is an error; with
    /// `Pseudo` null directions of `Z` are set to zero. `Sigma*` is always
    /// inverted on its range and flagged through `sigma_star_regular`.
    pub fn from_joint(joint: &JointMoments, policy: SingularPolicy) -> Result<Self> {
        let d = joint.mean.len();
        let m = d - 1;
        let nu = joint.mean[0];
        if !(nu > 0.0) {
            return Err(Error::NonPositiveDrift(nu));
        }
        let gamma: Vec<f64> = joint.mean[1..].iter().map(|w| w / nu).collect();
        let mut gamma_star = gamma.clone();
        gamma_star.push(1.0 / nu);

        // W - gamma X = D U and W* - gamma* X = D* U (up to constants).
        let mut dmat = DMatrix::zeros(m, d);
        for j in 0..m {
            dmat[(j, 0)] = -gamma[j];
            dmat[(j, j + 1)] = 1.0;
        }
        let mut dstar = DMatrix::zeros(m + 1, d);
        dstar.view_mut((0, 0), (m, d)).copy_from(&dmat);
        dstar[(m, 0)] = -1.0 / nu;

        let sym = |a: DMatrix<f64>| (&a + a.transpose()) * 0.5;
        let sigma_mat = sym(&dmat * &joint.cov * dmat.transpose());
        let sigma_star_mat = sym(&dstar * &joint.cov * dstar.transpose());
        let s = inv_sqrt(&sigma_mat, policy, "Sigma")?;
        let s_star = inv_sqrt(&sigma_star_mat, SingularPolicy::Pseudo, "Sigma*")?;

        let z_map = &s.inv_sqrt * &dmat;
        let z_star_map = &s_star.inv_sqrt * &dstar;
        let z_cov = sym(&z_map * &joint.cov * z_map.transpose());
        let z_star_cov = sym(&z_star_map * &joint.cov * z_star_map.transpose());
        let z_third = joint.third.transform(&z_map);
        let z_star_third = joint.third.transform(&z_star_map);
        let z_sq_z = z_third.trace_vec();
        let z_star_sq_z = z_star_third.trace_vec();
        let cov_x: Vec<f64> = joint.cov.column(0).iter().cloned().collect();
        let xz = mat_vec(&z_map, &cov_x);
        let xz_star = mat_vec(&z_star_map, &cov_x);

        Ok(MomentSet {
            dim_w: m,
            nu,
            sigma2: sigma_mat[(0, 0)],
            var_y: joint.cov[(1, 1)],
            mu3: joint.third.get(1, 1, 1),
            sigma_xy: joint.cov[(0, 1)],
            mu: joint.mean[1],
            model_fingerprint: None,
            joint: joint.clone(),
            gamma,
            gamma_star,
            sigma_det: s.det,
            sigma_star_det: s_star.det,
            sigma_regular: s.regular,
            sigma_star_regular: s_star.regular,
            sigma_inv_sqrt: s.inv_sqrt,
            sigma_star_inv_sqrt: s_star.inv_sqrt,
            sigma_mat,
            sigma_star_mat,
            z_map,
            z_star_map,
            z_cov,
            z_star_cov,
            z_third,
            z_star_third,
            z_sq_z,
            z_star_sq_z,
            xz,
            xz_star,
        })
    }

    /// `Sigma^{-1/2}(w - gamma x)` for a (partial) sum `(x, w)`.
    pub fn standardize(&self, x: f64, w: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = w.iter().zip(&self.gamma).map(|(wj, g)| wj - g * x).collect();
        mat_vec(&self.sigma_inv_sqrt, &c)
    }

    /// `Sigma*^{-1/2}(w* - gamma* x)` with `w* = (w, n)`.
    pub fn standardize_star(&self, x: f64, w: &[f64], n: f64) -> Vec<f64> {
        let mut c: Vec<f64> = w.iter().zip(&self.gamma).map(|(wj, g)| wj - g * x).collect();
        c.push(n - x / self.nu);
        mat_vec(&self.sigma_star_inv_sqrt, &c)
    }

    /// `sigma = sqrt(Var(Y - gamma_1 X))`.
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Named scalar entries, in a fixed order; used for standard errors and
    /// entrywise comparisons.
    pub fn flatten(&self) -> Vec<(String, f64)> {
        let mut out = vec![("nu".to_string(), self.nu)];
        let vec_entries = |out: &mut Vec<(String, f64)>, name: &str, v: &[f64]| {
            for (i, x) in v.iter().enumerate() {
                out.push((format!("{name}[{i}]"), *x));
            }
        };
        let mat_entries = |out: &mut Vec<(String, f64)>, name: &str, m: &DMatrix<f64>| {
            for i in 0..m.nrows() {
                for j in i..m.ncols() {
                    out.push((format!("{name}[{i}][{j}]"), m[(i, j)]));
                }
            }
        };
        let tensor_entries = |out: &mut Vec<(String, f64)>, name: &str, t: &Tensor3| {
            for i in 0..t.dim {
                for j in i..t.dim {
                    for k in j..t.dim {
                        out.push((format!("{name}[{i}][{j}][{k}]"), t.get(i, j, k)));
                    }
                }
            }
        };
        vec_entries(&mut out, "gamma", &self.gamma);
        vec_entries(&mut out, "gamma_star", &self.gamma_star);
        mat_entries(&mut out, "sigma", &self.sigma_mat);
        mat_entries(&mut out, "sigma_star", &self.sigma_star_mat);
        tensor_entries(&mut out, "z_third", &self.z_third);
        tensor_entries(&mut out, "z_star_third", &self.z_star_third);
        vec_entries(&mut out, "z_sq_z", &self.z_sq_z);
        vec_entries(&mut out, "z_star_sq_z", &self.z_star_sq_z);
        vec_entries(&mut out, "xz", &self.xz);
        vec_entries(&mut out, "xz_star", &self.xz_star);
        for (name, v) in [
            ("sigma2", self.sigma2),
            ("var_y", self.var_y),
            ("mu3", self.mu3),
            ("sigma_xy", self.sigma_xy),
            ("mu", self.mu),
        ] {
            out.push((name.to_string(), v));
        }
        out
    }

    /// JSON view: the joint moments (enough to rebuild the set exactly) plus
    /// every derived constant.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "joint": self.joint,
            "nu": self.nu,
            "gamma": self.gamma,
            "gamma_star": self.gamma_star,
            "sigma_mat": rows(&self.sigma_mat),
            "sigma_star_mat": rows(&self.sigma_star_mat),
            "z_third": self.z_third.data,
            "z_star_third": self.z_star_third.data,
            "z_sq_z": self.z_sq_z,
            "z_star_sq_z": self.z_star_sq_z,
            "xz": self.xz,
            "xz_star": self.xz_star,
            "sigma2": self.sigma2,
            "var_y": self.var_y,
            "mu3": self.mu3,
            "sigma_xy": self.sigma_xy,
            "mu": self.mu,
        })
    }

    /// Rebuilds from the `joint` entry of [`to_json`](Self::to_json).
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let joint = v
            .get("joint")
            .ok_or_else(|| Error::InvalidModel("moments: missing `joint`".into()))?;
        let joint: JointMoments = serde_json::from_value(joint.clone())?;
        MomentSet::from_joint(&joint, SingularPolicy::Strict)
    }
}

/// Exact population moments of a model with closed-form moments.
pub fn analytic_moments(model: &IncrementModel) -> Result<MomentSet> {
    let mut ms = MomentSet::from_joint(&model.joint_moments()?, SingularPolicy::Strict)?;
    ms.model_fingerprint = Some(model.fingerprint());
    Ok(ms)
}

/// A [`MomentSet`] estimated by simulation, with standard errors.
#[derive(Debug, Clone)]
pub struct SampledMoments {
    pub moments: MomentSet,
    pub n: usize,
    /// Delete-a-group jackknife standard errors, aligned with
    /// [`MomentSet::flatten`].
    pub se: Vec<(String, f64)>,
}

impl SampledMoments {
    /// `(name, estimate, se)` triples.
    pub fn entries(&self) -> Vec<(String, f64, f64)> {
        self.moments
            .flatten()
            .into_iter()
            .zip(&self.se)
            .map(|((name, v), (_, se))| (name, v, *se))
            .collect()
    }
}

pub const MIN_SAMPLE_MOMENTS: usize = 10_000;
const JACKKNIFE_GROUPS: usize = 200;
const PILOT_DRAWS: usize = 1000;

#[derive(Clone)]
struct PowerSums {
    d: usize,
    n: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

impl PowerSums {
    fn new(d: usize) -> Self {
        PowerSums {
            d,
            n: 0.0,
            s1: vec![0.0; d],
            s2: vec![0.0; d * d],
            s3: vec![0.0; d * d * d],
        }
    }

    fn push(&mut self, u: &[f64]) {
        let d = self.d;
        self.n += 1.0;
        for i in 0..d {
            self.s1[i] += u[i];
            for j in 0..d {
                let uij = u[i] * u[j];
                self.s2[i * d + j] += uij;
                for k in 0..d {
                    self.s3[(i * d + j) * d + k] += uij * u[k];
                }
            }
        }
    }

    fn combine(&mut self, other: &PowerSums, sign: f64) {
        self.n += sign * other.n;
        for (a, b) in self.s1.iter_mut().zip(&other.s1) {
            *a += sign * b;
        }
        for (a, b) in self.s2.iter_mut().zip(&other.s2) {
            *a += sign * b;
        }
        for (a, b) in self.s3.iter_mut().zip(&other.s3) {
            *a += sign * b;
        }
    }

    fn joint(&self, shift: &[f64]) -> Result<JointMoments> {
        let d = self.d;
        let n = self.n;
        let m1: Vec<f64> = self.s1.iter().map(|s| s / n).collect();
        let m2 = |i: usize, j: usize| self.s2[i * d + j] / n;
        let cov = DMatrix::from_fn(d, d, |i, j| m2(i, j) - m1[i] * m1[j]);
        let mut third = Tensor3::zeros(d);
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    let m3 = self.s3[(i * d + j) * d + k] / n;
                    let c = m3 - m1[i] * m2(j, k) - m1[j] * m2(i, k) - m1[k] * m2(i, j) + 2.0 * m1[i] * m1[j] * m1[k];
                    third.add(i, j, k, c);
                }
            }
        }
        let mean = m1.iter().zip(shift).map(|(a, b)| a + b).collect();
        JointMoments::new(mean, cov, third)
    }
}

fn draw_sums(model: &IncrementModel, count: usize, seed: &StreamSeed, index: u64, shift: &[f64]) -> PowerSums {
    let d = model.dim_w() + 1;
    let mut rng = seed.stream(index);
    let mut sums = PowerSums::new(d);
    let mut u = vec![0.0; d];
    let mut w = vec![0.0; d - 1];
    for _ in 0..count {
        let x = model.sample_into(&mut rng, &mut w);
        u[0] = x - shift[0];
        for j in 1..d {
            u[j] = w[j - 1] - shift[j];
        }
        sums.push(&u);
    }
    sums
}

fn grouped_sums(model: &IncrementModel, n: usize, seed: &StreamSeed) -> Result<(Vec<PowerSums>, Vec<f64>)> {
    if n < MIN_SAMPLE_MOMENTS {
        return Err(Error::InvalidCount(format!(
            "sample_moments needs n >= {MIN_SAMPLE_MOMENTS}, got {n}"
        )));
    }
    let d = model.dim_w() + 1;
    // a pilot mean keeps the raw power sums well conditioned
    let pilot = draw_sums(model, PILOT_DRAWS, &seed.derive(u64::MAX), 0, &vec![0.0; d]);
    let shift: Vec<f64> = pilot.s1.iter().map(|s| s / pilot.n).collect();
    let g = JACKKNIFE_GROUPS;
    let groups: Vec<PowerSums> = (0..g)
        .into_par_iter()
        .map(|k| {
            let count = n / g + usize::from(k < n % g);
            draw_sums(model, count, seed, k as u64, &shift)
        })
        .collect();
    Ok((groups, shift))
}

/// Joint moments of `(X, W)` from `n` simulated increments.
pub fn sample_joint_moments(model: &IncrementModel, n: usize, seed: &StreamSeed) -> Result<JointMoments> {
    let (groups, shift) = grouped_sums(model, n, seed)?;
    let mut total = PowerSums::new(model.dim_w() + 1);
    for g in &groups {
        total.combine(g, 1.0);
    }
    total.joint(&shift)
}

/// Moments estimated from `n >= 10^4` simulated increments; `Z` uses the
/// empirical `Sigma^{-1/2}`.
pub fn sample_moments(model: &IncrementModel, n: usize, seed: &StreamSeed) -> Result<SampledMoments> {
    let (groups, shift) = grouped_sums(model, n, seed)?;
    let d = model.dim_w() + 1;
    let mut total = PowerSums::new(d);
    for g in &groups {
        total.combine(g, 1.0);
    }
    let mut moments = MomentSet::from_joint(&total.joint(&shift)?, SingularPolicy::Strict)?;
    moments.model_fingerprint = Some(model.fingerprint());
    let leave_out: Vec<Vec<f64>> = groups
        .par_iter()
        .map(|g| {
            let mut s = total.clone();
            s.combine(g, -1.0);
            let ms = MomentSet::from_joint(&s.joint(&shift)?, SingularPolicy::Strict)?;
            Ok(ms.flatten().into_iter().map(|(_, v)| v).collect())
        })
        .collect::<Result<_>>()?;
    let k = leave_out.len() as f64;
    let se = moments
        .flatten()
        .into_iter()
        .enumerate()
        .map(|(e, (name, _))| {
            let mean = leave_out.iter().map(|r| r[e]).sum::<f64>() / k;
            let ss: f64 = leave_out.iter().map(|r| (r[e] - mean).powi(2)).sum();
            (name, ((k - 1.0) / k * ss).sqrt())
        })
        .collect();
    Ok(SampledMoments { moments, n, se })
}

//! Increment laws for the bivariate-and-beyond random walk `(X_n, W_n)`.
//!
//! A model is read from a JSON object `{"kind", "dim_w", "params"}`; the
//! accepted kinds and their parameters are
//!
//! | kind | params |
//! |------|--------|
//! | `bivariate-normal` | `nu`, `mu` (0), `rho`, `sd_x` (1), `sd_y` (1) |
//! | `gaussian-general` | `mean` (length m+1, X first), `cov` ((m+1)x(m+1)) |
//! | `positive-exponential` | `rate`, `intercept`, `slope`, `noise_sd` (length m each) |
//! | `gamma-shifted` | `nu`, `x_sd` (1), `shape`, `scale`, `shift` (-shape*scale), `coupling` (0) |
//! | `bernoulli-step` | `p`, `intercept`, `slope`, `noise_sd` (length m each) |
//! | `composite` | `components` (model objects), `weights` |
//!
//! In `positive-exponential` and `bernoulli-step`,
//! `W_j = intercept_j + slope_j X + noise_sd_j N_j` with independent standard
//! normals `N_j`; missing vectors default to zero intercept, zero slope and
//! unit noise. `gamma-shifted` has `X = nu + x_sd N` and
//! `Y = G + shift + coupling (X - nu)` with `G ~ Gamma(shape, scale)`.
//! `composite` draws each increment from one component picked with the given
//! weights.
//!
//! Cramér's condition is assumed, not checked, for the continuous kinds.

mod moments;

pub use moments::{
    analytic_moments, sample_joint_moments, sample_moments, JointMoments, MomentSet, SampledMoments, MIN_SAMPLE_MOMENTS,
};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::linalg::{sqrt_psd, Tensor3};
use crate::{Error, Result};

/// Serialized model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim_w: Option<usize>,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct BivariateNormalParams {
    nu: f64,
    #[serde(default)]
    mu: f64,
    rho: f64,
    #[serde(default = "one")]
    sd_x: f64,
    #[serde(default = "one")]
    sd_y: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearWParams {
    #[serde(default)]
    rate: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    intercept: Option<Vec<f64>>,
    #[serde(default)]
    slope: Option<Vec<f64>>,
    #[serde(default)]
    noise_sd: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaShiftedParams {
    nu: f64,
    #[serde(default = "one")]
    x_sd: f64,
    shape: f64,
    scale: f64,
    #[serde(default)]
    shift: Option<f64>,
    #[serde(default)]
    coupling: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompositeParams {
    components: Vec<ModelSpec>,
    weights: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

/// `W = intercept + slope * X + noise_sd .* N`.
#[derive(Debug, Clone)]
struct LinearW {
    intercept: Vec<f64>,
    slope: Vec<f64>,
    noise_sd: Vec<f64>,
}

impl LinearW {
    fn from_params(p: &LinearWParams, dim_w: usize) -> Result<Self> {
        let take = |v: &Option<Vec<f64>>, default: f64, name: &str| -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![default; dim_w]),
                Some(v) if v.len() == dim_w => Ok(v.clone()),
                Some(v) => Err(Error::InvalidModel(format!(
                    "`{name}` has length {}, expected dim_w = {dim_w}",
                    v.len()
                ))),
            }
        };
        let lw = LinearW {
            intercept: take(&p.intercept, 0.0, "intercept")?,
            slope: take(&p.slope, 0.0, "slope")?,
            noise_sd: take(&p.noise_sd, 1.0, "noise_sd")?,
        };
        if lw.noise_sd.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidModel("noise_sd must be finite and nonnegative".into()));
        }
        Ok(lw)
    }

    fn fill<R: Rng + ?Sized>(&self, x: f64, rng: &mut R, w: &mut [f64]) {
        for (j, wj) in w.iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(rng);
            *wj = self.intercept[j] + self.slope[j] * x + self.noise_sd[j] * n;
        }
    }
}

#[derive(Debug, Clone)]
enum Kind {
    BivariateNormal(BivariateNormalParams),
    GaussianGeneral {
        mean: Vec<f64>,
        cov: DMatrix<f64>,
        root: DMatrix<f64>,
    },
    PositiveExponential {
        rate: f64,
        w: LinearW,
    },
    GammaShifted {
        p: GammaShiftedParams,
        shift: f64,
        gamma: Gamma<f64>,
    },
    BernoulliStep {
        p: f64,
        w: LinearW,
    },
    Composite {
        components: Vec<IncrementModel>,
        cumulative: Vec<f64>,
        weights: Vec<f64>,
    },
}

/// A sampleable joint law for one increment `(X, W)`, `W` in `R^m`.
#[derive(Debug, Clone)]
pub struct IncrementModel {
    spec: ModelSpec,
    dim_w: usize,
    kind: Kind,
}

fn parse<T: for<'de> Deserialize<'de>>(kind: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone()).map_err(|e| Error::InvalidModel(format!("{kind}: {e}")))
}

fn check_dim(declared: Option<usize>, actual: usize, kind: &str) -> Result<usize> {
    if actual == 0 {
        return Err(Error::InvalidModel(format!("{kind}: dim_w must be positive")));
    }
    match declared {
        Some(d) if d != actual => Err(Error::InvalidModel(format!(
            "{kind}: dim_w = {d} but parameters imply {actual}"
        ))),
        _ => Ok(actual),
    }
}

fn vec_len(p: &LinearWParams) -> Option<usize> {
    [&p.intercept, &p.slope, &p.noise_sd]
        .iter()
        .find_map(|v| v.as_ref().map(|v| v.len()))
}

impl IncrementModel {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let kind_name = spec.kind.as_str();
        let (dim_w, kind) = match kind_name {
            "bivariate-normal" => {
                let p: BivariateNormalParams = parse(kind_name, &spec.params)?;
                if !(-1.0..=1.0).contains(&p.rho) || p.sd_x < 0.0 || p.sd_y < 0.0 {
                    return Err(Error::InvalidModel(
                        "bivariate-normal: need |rho| <= 1 and sd >= 0".into(),
                    ));
                }
                (check_dim(spec.dim_w, 1, kind_name)?, Kind::BivariateNormal(p))
            }
            "gaussian-general" => {
                let p: GaussianParams = parse(kind_name, &spec.params)?;
                let d = p.mean.len();
                if d < 2 || p.cov.len() != d || p.cov.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidModel(
                        "gaussian-general: mean has length m+1 >= 2 and cov is (m+1)x(m+1)".into(),
                    ));
                }
                let cov = DMatrix::from_fn(d, d, |i, j| p.cov[i][j]);
                if (&cov - cov.transpose()).abs().max() > 1e-12 {
                    return Err(Error::InvalidModel("gaussian-general: cov must be symmetric".into()));
                }
                let root = sqrt_psd(&cov);
                (
                    check_dim(spec.dim_w, d - 1, kind_name)?,
                    Kind::GaussianGeneral {
                        mean: p.mean,
                        cov,
                        root,
                    },
                )
            }
            "positive-exponential" => {
                let p: LinearWParams = parse(kind_name, &spec.params)?;
                let rate = p
                    .rate
                    .ok_or_else(|| Error::InvalidModel("positive-exponential: missing `rate`".into()))?;
                if p.p.is_some() {
                    return Err(Error::InvalidModel("positive-exponential: unknown field `p`".into()));
                }
                if !(rate > 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidModel(
                        "positive-exponential: rate must be positive".into(),
                    ));
                }
                let m = check_dim(spec.dim_w, vec_len(&p).or(spec.dim_w).unwrap_or(1), kind_name)?;
                let w = LinearW::from_params(&p, m)?;
                (m, Kind::PositiveExponential { rate, w })
            }
            "gamma-shifted" => {
                let p: GammaShiftedParams = parse(kind_name, &spec.params)?;
                let gamma =
                    Gamma::new(p.shape, p.scale).map_err(|e| Error::InvalidModel(format!("gamma-shifted: {e}")))?;
                let shift = p.shift.unwrap_or(-p.shape * p.scale);
                if p.x_sd < 0.0 {
                    return Err(Error::InvalidModel("gamma-shifted: x_sd must be nonnegative".into()));
                }
                (
                    check_dim(spec.dim_w, 1, kind_name)?,
                    Kind::GammaShifted { p, shift, gamma },
                )
            }
            "bernoulli-step" => {
                let p: LinearWParams = parse(kind_name, &spec.params)?;
                let prob =
                    p.p.ok_or_else(|| Error::InvalidModel("bernoulli-step: missing `p`".into()))?;
                if p.rate.is_some() {
                    return Err(Error::InvalidModel("bernoulli-step: unknown field `rate`".into()));
                }
                if !(0.0..=1.0).contains(&prob) {
                    return Err(Error::InvalidModel("bernoulli-step: p must lie in [0, 1]".into()));
                }
                let m = check_dim(spec.dim_w, vec_len(&p).or(spec.dim_w).unwrap_or(1), kind_name)?;
                let w = LinearW::from_params(&p, m)?;
                (m, Kind::BernoulliStep { p: prob, w })
            }
            "composite" => {
                let p: CompositeParams = parse(kind_name, &spec.params)?;
                if p.components.is_empty() || p.components.len() != p.weights.len() {
                    return Err(Error::InvalidModel(
                        "composite: need one weight per component and at least one component".into(),
                    ));
                }
                if p.weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(Error::InvalidModel("composite: weights must be nonnegative".into()));
                }
                let total: f64 = p.weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::InvalidModel("composite: weights sum to zero".into()));
                }
                let components = p
                    .components
                    .iter()
                    .map(IncrementModel::from_spec_unchecked)
                    .collect::<Result<Vec<_>>>()?;
                let m = components[0].dim_w;
                if components.iter().any(|c| c.dim_w != m) {
                    return Err(Error::InvalidModel("composite: components differ in dim_w".into()));
                }
                let weights: Vec<f64> = p.weights.iter().map(|w| w / total).collect();
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                (
                    check_dim(spec.dim_w, m, kind_name)?,
                    Kind::Composite {
                        components,
                        cumulative,
                        weights,
                    },
                )
            }
            other => return Err(Error::InvalidModel(format!("unknown model kind `{other}`"))),
        };
        let mut spec = spec.clone();
        spec.dim_w = Some(dim_w);
        Ok(IncrementModel { spec, dim_w, kind })
    }

    /// Like [`from_spec`](Self::from_spec) but also rejects `E[X] <= 0`:
    /// every model driven to a boundary needs positive drift.
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let m = Self::from_spec_unchecked(spec)?;
        let nu = m.mean_x();
        if !(nu > 0.0) {
            return Err(Error::NonPositiveDrift(nu));
        }
        Ok(m)
    }

    fn from_spec_unchecked(spec: &ModelSpec) -> Result<Self> {
        Self::from_spec(spec)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_value(v.clone()).map_err(|e| Error::InvalidModel(e.to_string()))?;
        Self::new(&spec)
    }

    fn build(kind: &str, dim_w: usize, params: Value) -> Result<Self> {
        Self::new(&ModelSpec {
            kind: kind.into(),
            dim_w: Some(dim_w),
            params,
        })
    }

    /// `X ~ N(nu, 1)`, `Y ~ N(mu, 1)` with correlation `rho`.
    pub fn bivariate_normal(nu: f64, mu: f64, rho: f64) -> Result<Self> {
        Self::build("bivariate-normal", 1, json!({"nu": nu, "mu": mu, "rho": rho}))
    }

    /// Jointly Gaussian `(X, W)`; `mean[0]` and row/column 0 of `cov` refer to `X`.
    pub fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> Result<Self> {
        let m = mean.len().saturating_sub(1);
        Self::build("gaussian-general", m, json!({"mean": mean, "cov": cov}))
    }

    /// Degenerate increment `(x, w)` with probability one.
    pub fn point_mass(x: f64, w: Vec<f64>) -> Result<Self> {
        let d = w.len() + 1;
        let mut mean = vec![x];
        mean.extend(w);
        Self::gaussian(mean, vec![vec![0.0; d]; d])
    }

    pub fn positive_exponential(rate: f64, intercept: Vec<f64>, slope: Vec<f64>, noise_sd: Vec<f64>) -> Result<Self> {
        let m = intercept.len();
        Self::build(
            "positive-exponential",
            m,
            json!({"rate": rate, "intercept": intercept, "slope": slope, "noise_sd": noise_sd}),
        )
    }

    pub fn gamma_shifted(nu: f64, x_sd: f64, shape: f64, scale: f64, coupling: f64) -> Result<Self> {
        Self::build(
            "gamma-shifted",
            1,
            json!({"nu": nu, "x_sd": x_sd, "shape": shape, "scale": scale, "coupling": coupling}),
        )
    }

    pub fn bernoulli_step(p: f64, intercept: Vec<f64>, slope: Vec<f64>, noise_sd: Vec<f64>) -> Result<Self> {
        let m = intercept.len();
        Self::build(
            "bernoulli-step",
            m,
            json!({"p": p, "intercept": intercept, "slope": slope, "noise_sd": noise_sd}),
        )
    }

    pub fn composite(components: Vec<ModelSpec>, weights: Vec<f64>) -> Result<Self> {
        let m = components.first().and_then(|c| c.dim_w).unwrap_or(1);
        Self::build("composite", m, json!({"components": components, "weights": weights}))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn kind_name(&self) -> &str {
        &self.spec.kind
    }

    pub fn dim_w(&self) -> usize {
        self.dim_w
    }

    /// Stable hash of the model description.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(&self.spec).unwrap_or_default();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    /// `(rate, intercept)` for `positive-exponential` models.
    pub fn exponential_params(&self) -> Option<(f64, &[f64])> {
        match &self.kind {
            Kind::PositiveExponential { rate, w } => Some((*rate, &w.intercept)),
            _ => None,
        }
    }

    /// `nu = E[X]`.
    pub fn mean_x(&self) -> f64 {
        match &self.kind {
            Kind::BivariateNormal(p) => p.nu,
            Kind::GaussianGeneral { mean, .. } => mean[0],
            Kind::PositiveExponential { rate, .. } => 1.0 / rate,
            Kind::GammaShifted { p, .. } => p.nu,
            Kind::BernoulliStep { p, .. } => 2.0 * p - 1.0,
            Kind::Composite {
                components, weights, ..
            } => components.iter().zip(weights).map(|(c, w)| w * c.mean_x()).sum(),
        }
    }

    /// Whether `X > 0` almost surely (the "positive case").
    pub fn is_positive(&self) -> bool {
        match &self.kind {
            Kind::PositiveExponential { .. } => true,
            Kind::GaussianGeneral { mean, cov, .. } => mean[0] > 0.0 && cov[(0, 0)] == 0.0,
            Kind::BivariateNormal(p) => p.nu > 0.0 && p.sd_x == 0.0,
            Kind::GammaShifted { p, .. } => p.nu > 0.0 && p.x_sd == 0.0,
            Kind::BernoulliStep { p, .. } => *p == 1.0,
            Kind::Composite { components, .. } => components.iter().all(|c| c.is_positive()),
        }
    }

    /// Draws one increment, writing `W` into `w` and returning `X`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut [f64]) -> f64 {
        debug_assert_eq!(w.len(), self.dim_w);
        match &self.kind {
            Kind::BivariateNormal(p) => {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                w[0] = p.mu + p.sd_y * (p.rho * z1 + (1.0 - p.rho * p.rho).sqrt() * z2);
                p.nu + p.sd_x * z1
            }
            Kind::GaussianGeneral { mean, root, .. } => {
                let d = mean.len();
                let mut z = [0.0f64; 16];
                let mut zv;
                let z: &mut [f64] = if d <= 16 {
                    &mut z[..d]
                } else {
                    zv = vec![0.0; d];
                    &mut zv
                };
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(rng);
                }
                let mut x = mean[0];
                for k in 0..d {
                    x += root[(0, k)] * z[k];
                }
                for (j, wj) in w.iter_mut().enumerate() {
                    let mut s = mean[j + 1];
                    for k in 0..d {
                        s += root[(j + 1, k)] * z[k];
                    }
                    *wj = s;
                }
                x
            }
            Kind::PositiveExponential { rate, w: lw } => {
                let e: f64 = Exp1.sample(rng);
                let x = e / rate;
                lw.fill(x, rng, w);
                x
            }
            Kind::GammaShifted { p, shift, gamma } => {
                let n: f64 = StandardNormal.sample(rng);
                let g = gamma.sample(rng);
                let xc = p.x_sd * n;
                w[0] = g + shift + p.coupling * xc;
                p.nu + xc
            }
            Kind::BernoulliStep { p, w: lw } => {
                let u: f64 = rng.random();
                let x = if u < *p { 1.0 } else { -1.0 };
                lw.fill(x, rng, w);
                x
            }
            Kind::Composite {
                components, cumulative, ..
            } => {
                let u: f64 = rng.random();
                let k = cumulative.partition_point(|c| *c <= u).min(components.len() - 1);
                components[k].sample_into(rng, w)
            }
        }
    }

    /// One draw `(x, w)` from the increment law.
    pub fn sample_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, Vec<f64>) {
        let mut w = vec![0.0; self.dim_w];
        let x = self.sample_into(rng, &mut w);
        (x, w)
    }

    /// Exact mean, covariance and third central moments of `(X, W)`.
    pub fn joint_moments(&self) -> Result<JointMoments> {
        let m = self.dim_w;
        let d = m + 1;
        let mix = match &self.kind {
            Kind::BivariateNormal(p) => LinearMix {
                mean: vec![p.nu, p.mu],
                loadings: DMatrix::from_row_slice(
                    2,
                    2,
                    &[p.sd_x, 0.0, p.sd_y * p.rho, p.sd_y * (1.0 - p.rho * p.rho).sqrt()],
                ),
                var: vec![1.0, 1.0],
                third: vec![0.0, 0.0],
            },
            Kind::GaussianGeneral { mean, cov, .. } => {
                return JointMoments::new(mean.clone(), cov.clone(), Tensor3::zeros(d));
            }
            Kind::PositiveExponential { rate, w } => {
                let mu_x = 1.0 / rate;
                linear_w_mix(mu_x, mu_x * mu_x, 2.0 * mu_x.powi(3), w)
            }
            Kind::GammaShifted { p, shift, .. } => {
                let k = p.shape;
                let th = p.scale;
                LinearMix {
                    mean: vec![p.nu, k * th + shift],
                    loadings: DMatrix::from_row_slice(2, 2, &[p.x_sd, 0.0, p.coupling * p.x_sd, 1.0]),
                    var: vec![1.0, k * th * th],
                    third: vec![0.0, 2.0 * k * th.powi(3)],
                }
            }
            Kind::BernoulliStep { p, w } => {
                let q = 1.0 - p;
                linear_w_mix(2.0 * p - 1.0, 4.0 * p * q, 8.0 * p * q * (q - p), w)
            }
            Kind::Composite { .. } => return Err(Error::NoClosedForm(self.spec.kind.clone())),
        };
        mix.joint()
    }
}

/// `(X, W)` written as `mean + B S` for independent, centred sources `S`.
struct LinearMix {
    mean: Vec<f64>,
    loadings: DMatrix<f64>,
    var: Vec<f64>,
    third: Vec<f64>,
}

fn linear_w_mix(mu_x: f64, var_x: f64, third_x: f64, w: &LinearW) -> LinearMix {
    let m = w.intercept.len();
    let d = m + 1;
    let mut mean = vec![mu_x];
    mean.extend((0..m).map(|j| w.intercept[j] + w.slope[j] * mu_x));
    let mut b = DMatrix::zeros(d, d);
    b[(0, 0)] = 1.0;
    for j in 0..m {
        b[(j + 1, 0)] = w.slope[j];
        b[(j + 1, j + 1)] = w.noise_sd[j];
    }
    let mut var = vec![var_x];
    var.extend(std::iter::repeat_n(1.0, m));
    let mut third = vec![third_x];
    third.extend(std::iter::repeat_n(0.0, m));
    LinearMix {
        mean,
        loadings: b,
        var,
        third,
    }
}

impl LinearMix {
    fn joint(&self) -> Result<JointMoments> {
        let d = self.mean.len();
        let s = self.var.len();
        let b = &self.loadings;
        let cov = DMatrix::from_fn(d, d, |i, j| (0..s).map(|k| b[(i, k)] * b[(j, k)] * self.var[k]).sum());
        let mut t = Tensor3::zeros(d);
        for k in 0..s {
            if self.third[k] == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    for l in 0..d {
                        t.add(i, j, l, b[(i, k)] * b[(j, k)] * b[(l, k)] * self.third[k]);
                    }
                }
            }
        }
        JointMoments::new(self.mean.clone(), cov, t)
    }
}

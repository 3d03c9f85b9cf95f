use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::json;

use crate::inference::Method;
use crate::model::{IncrementModel, ModelSpec};
use crate::{Error, Result};

/// Statistic compared against its expansion by the CDF experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticChoice {
    /// `T0 = (Ybar - mu) / (sigma0_hat / sqrt(tau))`.
    #[default]
    T0,
    /// `T` with the `tau - 1` variance estimate.
    T,
    /// Standardized `W_tau`, `(Y_tau - gamma a) / (sigma sqrt(a / nu))`.
    WMarginal,
    /// `(Y_tau - gamma_1 a) / sqrt(a)` through the smooth-statistic expansion.
    CenteredSum,
}

impl fmt::Display for StatisticChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StatisticChoice::T0 => "t0",
            StatisticChoice::T => "t",
            StatisticChoice::WMarginal => "w_marginal",
            StatisticChoice::CenteredSum => "centered_sum",
        };
        f.write_str(s)
    }
}

impl FromStr for StatisticChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(json!(s)).map_err(|_| Error::config("statistic", format!("unknown statistic `{s}`")))
    }
}

/// Report encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::config("format", format!("expected `json` or `csv`, got `{s}`"))),
        }
    }
}

/// A `z` interval for renewal counts; `null` bounds are infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZBox(pub Option<f64>, pub Option<f64>);

impl ZBox {
    pub fn lo(&self) -> f64 {
        self.0.unwrap_or(f64::NEG_INFINITY)
    }

    pub fn hi(&self) -> f64 {
        self.1.unwrap_or(f64::INFINITY)
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr<T> {
        Many(Vec<T>),
        One(T),
    }
    Ok(match Repr::deserialize(d)? {
        Repr::Many(v) => v,
        Repr::One(v) => vec![v],
    })
}

fn default_alpha() -> f64 {
    0.05
}
fn default_reps() -> usize {
    10_000
}
fn default_seed() -> u64 {
    42
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_c_grid() -> Vec<f64> {
    vec![-2.0, -1.645, -1.0, 0.0, 1.0, 1.645, 2.0]
}
fn default_ladder_draws() -> usize {
    100_000
}
fn default_moment_draws() -> usize {
    1_000_000
}
fn default_delta() -> f64 {
    1.0
}
fn default_z_boxes() -> Vec<ZBox> {
    vec![ZBox(None, None), ZBox(Some(-1.0), Some(1.0)), ZBox(Some(0.0), None)]
}

/// One experiment: models, boundary levels and Monte Carlo settings.
///
/// `model` and `a` accept a single value or a list; cells are the product
/// `a x model`, `a` outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "one_or_many")]
    pub model: Vec<ModelSpec>,
    #[serde(deserialize_with = "one_or_many")]
    pub a: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Thread count; never written to reports, which do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub statistic: StatisticChoice,
    #[serde(default = "default_c_grid")]
    pub c_grid: Vec<f64>,
    /// True mean of `Y`; taken from the model when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default = "default_ladder_draws")]
    pub ladder_draws: usize,
    #[serde(default = "default_moment_draws")]
    pub moment_draws: usize,
    /// Slab width for renewal counts.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_z_boxes")]
    pub z_boxes: Vec<ZBox>,
    /// Adds the Monte Carlo discrimination of the `rho_1` sign to the
    /// identity report.
    #[serde(default)]
    pub sign_check: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    /// Defaults for everything but the models and boundary levels.
    pub fn new(model: Vec<ModelSpec>, a: Vec<f64>) -> Self {
        ExperimentConfig {
            model,
            a,
            alpha: default_alpha(),
            reps: default_reps(),
            seed: default_seed(),
            workers: None,
            methods: default_methods(),
            statistic: StatisticChoice::default(),
            c_grid: default_c_grid(),
            mu: None,
            max_steps: None,
            ladder_draws: default_ladder_draws(),
            moment_draws: default_moment_draws(),
            delta: default_delta(),
            z_boxes: default_z_boxes(),
            sign_check: false,
            out: None,
            format: None,
        }
    }

    /// The coverage study: bivariate normal with unit variances,
    /// `a in {10, 25}`, `nu in {0.5, 0.25}`, `rho in {0.4, 0.8}`, 5% one-sided
    /// errors, 10,000 replications.
    pub fn table1() -> Self {
        let mut models = Vec::new();
        for nu in [0.5, 0.25] {
            for rho in [0.4, 0.8] {
                models.push(bivariate_spec(nu, rho));
            }
        }
        ExperimentConfig::new(models, vec![10.0, 25.0])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::config("config", e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Checks ranges and builds every model.
    pub fn validate(&self) -> Result<Vec<IncrementModel>> {
        if self.reps == 0 {
            return Err(Error::config("reps", "replication count must be at least 1"));
        }
        if self.a.is_empty() {
            return Err(Error::config("a", "at least one boundary level is required"));
        }
        if let Some(a) = self.a.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::config(
                "a",
                format!("boundary levels must be positive and finite, got {a}"),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::config(
                "alpha",
                format!("must lie in (0, 0.5), got {}", self.alpha),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("c_grid", "must be a non-empty list of finite values"));
        }
        if self.max_steps == Some(0) {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if self.ladder_draws == 0 {
            return Err(Error::config("ladder_draws", "must be at least 1"));
        }
        if self.moment_draws < crate::model::MIN_SAMPLE_MOMENTS {
            return Err(Error::config(
                "moment_draws",
                format!("must be at least {}", crate::model::MIN_SAMPLE_MOMENTS),
            ));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::config(
                "delta",
                format!("must be finite and >= 0, got {}", self.delta),
            ));
        }
        if self.z_boxes.iter().any(|b| b.lo().is_nan() || b.hi().is_nan()) {
            return Err(Error::config("z_boxes", "bounds must be numbers or null"));
        }
        if self.model.is_empty() {
            return Err(Error::config("model", "at least one model is required"));
        }
        self.model
            .iter()
            .map(|m| {
                IncrementModel::new(m).map_err(|e| match e {
                    Error::NonPositiveDrift(_) | Error::InvalidModel(_) => Error::config("model", e.to_string()),
                    other => other,
                })
            })
            .collect()
    }
}

/// `bivariate-normal` spec with unit variances and `mu = 0`.
pub fn bivariate_spec(nu: f64, rho: f64) -> ModelSpec {
    ModelSpec {
        kind: "bivariate-normal".into(),
        dim_w: None,
        params: json!({"nu": nu, "rho": rho}),
    }
}

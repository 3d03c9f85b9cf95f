use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CsvCell, Report};
use super::{
    cell_seed, check_rejections, in_pool, max_steps, model_ladder, model_moments, ExperimentConfig, TAG_LADDER,
    TAG_WALKS,
};
use crate::expansion::{q_point, region_probability, renewal_slab_count, ExpansionContext, HVariant, Region, SignMode};
use crate::inference::t_statistics;
use crate::ladder::{check_identities, IdentityReport, LadderScalars};
use crate::linalg::mat_vec;
use crate::model::{IncrementModel, ModelSpec};
use crate::stats::{binomial_se, mean_se, studentize};
use crate::walk::{
    default_ladder_max_steps, default_max_steps, run_to_boundary, sample_ladder_variables, simulate, Retain,
};
use crate::{Error, Result};

/// Identity residuals for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCell {
    pub model: ModelSpec,
    pub report: IdentityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySuite {
    pub config: ExperimentConfig,
    pub cells: Vec<IdentityCell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sign_discrimination: Vec<SignReport>,
}

impl Report for IdentitySuite {
    fn csv_header(&self) -> Vec<String> {
        ["model", "name", "claim", "estimate", "se", "residual"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let mut rows = Vec::new();
        for (k, cell) in self.cells.iter().enumerate() {
            let label = format!("{}#{}", cell.model.kind, k);
            for e in &cell.report.entries {
                rows.push(vec![
                    label.clone().into(),
                    e.name.clone().into(),
                    e.claim.into(),
                    e.estimate.into(),
                    e.se.into(),
                    e.residual.into(),
                ]);
            }
        }
        rows
    }
}

/// Ladder-variable identities for every configured model at
/// `ladder_draws` draws, plus the sign discrimination when requested.
pub fn run_identity_checks(cfg: &ExperimentConfig) -> Result<IdentitySuite> {
    let models = cfg.validate()?;
    let mut cells = Vec::new();
    for (k, model) in models.iter().enumerate() {
        let (ms, _) = model_moments(model, cfg, k)?;
        let sample = in_pool(cfg.workers, || {
            sample_ladder_variables(
                model,
                cfg.ladder_draws,
                default_ladder_max_steps(ms.nu),
                &cell_seed(cfg, k, TAG_LADDER),
            )
        })??;
        cells.push(IdentityCell {
            model: model.spec().clone(),
            report: check_identities(&sample, &ms, None)?,
        });
    }
    let sign_discrimination = if cfg.sign_check {
        run_sign_discrimination(cfg)?
    } else {
        Vec::new()
    };
    Ok(IdentitySuite {
        config: cfg.clone(),
        cells,
        sign_discrimination,
    })
}

/// Simulated and predicted probability of one region of
/// `(X_tau - a, q)` space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignRegion {
    pub name: String,
    pub x0: f64,
    pub x1: Option<f64>,
    pub q0: Option<f64>,
    pub q1: Option<f64>,
    pub empirical: f64,
    pub se: f64,
    pub plus: f64,
    pub minus: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub z_plus: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub z_minus: f64,
}

/// Which sign of the `q . rho_1` term the simulated joint law supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub a: f64,
    pub model: String,
    pub reps: usize,
    pub rejected: usize,
    pub regions: Vec<SignRegion>,
    /// Sum of squared studentized gaps.
    pub chi2_plus: f64,
    pub chi2_minus: f64,
    /// `None` when no region separates the two predictions by more than
    /// three binomial standard errors at the predicted probability.
    pub supported: Option<SignMode>,
}

fn opt(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Compares both signs of the joint-density correction with simulated
/// `(X_tau - a, q)` on every configured `(a, model)` with `m = 1`.
pub fn run_sign_discrimination(cfg: &ExperimentConfig) -> Result<Vec<SignReport>> {
    let models = cfg.validate()?;
    let mut out = Vec::new();
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let this = index;
            index += 1;
            if model.dim_w() != 1 {
                continue;
            }
            let (ms, _) = model_moments(model, cfg, this)?;
            let ladder = model_ladder(model, &ms, cfg, this)?;
            let split = ladder.e_x2 / (2.0 * ladder.e_x);
            let ctx = ExpansionContext::new(ms.clone(), Some(ladder), a)?;
            let steps = max_steps(cfg, a, ms.nu);
            let seed = cell_seed(cfg, this, TAG_WALKS);
            let raw: Vec<Option<(f64, f64)>> = in_pool(cfg.workers, || {
                (0..cfg.reps)
                    .into_par_iter()
                    .map(
                        |i| match simulate(model, a, steps, &mut seed.stream(i as u64), Retain::Summary) {
                            Ok(w) => Ok(Some((w.overshoot, q_point(&ctx, w.overshoot, &w.w_tau)?[0]))),
                            Err(Error::MaxStepsExceeded { .. }) => Ok(None),
                            Err(e) => Err(e),
                        },
                    )
                    .collect::<Result<Vec<_>>>()
            })??;
            let rejected = raw.iter().filter(|v| v.is_none()).count();
            check_rejections(rejected, cfg.reps)?;
            let pts: Vec<(f64, f64)> = raw.into_iter().flatten().collect();
            let inf = f64::INFINITY;
            let specs = [
                ("q > 0", 0.0, inf, 0.0, inf),
                ("q > 1", 0.0, inf, 1.0, inf),
                ("q <= -1", 0.0, inf, -inf, -1.0),
                ("q > 0, short overshoot", 0.0, split, 0.0, inf),
                ("q > 0, long overshoot", split, inf, 0.0, inf),
                ("q <= 0, long overshoot", split, inf, -inf, 0.0),
            ];
            let mut regions = Vec::new();
            let (mut c_plus, mut c_minus) = (0.0, 0.0);
            let mut separated = false;
            for (name, x0, x1, q0, q1) in specs {
                let hits = pts
                    .iter()
                    .filter(|(x, q)| *x > x0 && *x <= x1 && *q > q0 && *q <= q1)
                    .count();
                let n = pts.len();
                let empirical = hits as f64 / n as f64;
                let se = binomial_se((hits as f64 + 0.5) / (n as f64 + 1.0), n);
                let region = Region::QBand { x0, x1, q0, q1 };
                let plus = region_probability(&ctx, region, HVariant::General, SignMode::Plus, false)?;
                let minus = region_probability(&ctx, region, HVariant::General, SignMode::Minus, false)?;
                let (z_plus, z_minus) = (studentize(empirical, plus, se), studentize(empirical, minus, se));
                c_plus += z_plus * z_plus;
                c_minus += z_minus * z_minus;
                separated |= (plus - minus).abs() > 3.0 * binomial_se((0.5 * (plus + minus)).clamp(0.0, 1.0), n);
                regions.push(SignRegion {
                    name: name.into(),
                    x0,
                    x1: opt(x1),
                    q0: opt(q0),
                    q1: opt(q1),
                    empirical,
                    se,
                    plus,
                    minus,
                    z_plus,
                    z_minus,
                });
            }
            out.push(SignReport {
                a,
                model: model.kind_name().to_string(),
                reps: cfg.reps,
                rejected,
                regions,
                chi2_plus: c_plus,
                chi2_minus: c_minus,
                supported: separated.then_some(if c_plus <= c_minus {
                    SignMode::Plus
                } else {
                    SignMode::Minus
                }),
            });
        }
    }
    Ok(out)
}

/// Mean number of renewal epochs in one slab against the expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalRow {
    pub a: f64,
    pub model: String,
    pub delta: f64,
    pub z0: Option<f64>,
    pub z1: Option<f64>,
    pub expected: f64,
    pub observed: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub se: f64,
    #[serde(with = "crate::stats::nonfinite")]
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalReport {
    pub config: ExperimentConfig,
    pub rejected: usize,
    pub rows: Vec<RenewalRow>,
}

impl Report for RenewalReport {
    fn csv_header(&self) -> Vec<String> {
        ["a", "model", "delta", "z0", "z1", "expected", "observed", "se", "z"]
            .map(String::from)
            .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let bound = |b: Option<f64>, lo: bool| -> CsvCell {
            b.map(CsvCell::Num)
                .unwrap_or_else(|| if lo { "-inf".into() } else { "inf".into() })
        };
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.a.into(),
                    r.model.clone().into(),
                    r.delta.into(),
                    bound(r.z0, true),
                    bound(r.z1, false),
                    r.expected.into(),
                    r.observed.into(),
                    r.se.into(),
                    r.z.into(),
                ]
            })
            .collect()
    }
}

/// Counts `n` with `a < X_n <= a + delta` and `Z_n` in each box along one
/// renewal path; `None` if the path does not leave the slab in time.
fn renewal_path(
    model: &IncrementModel,
    a: f64,
    delta: f64,
    boxes: &[(f64, f64)],
    s: f64,
    gamma: f64,
    steps: usize,
    rng: &mut crate::rng::SimRng,
) -> Option<Vec<f64>> {
    let mut counts = vec![0.0; boxes.len()];
    let (mut x, mut y) = (0.0, 0.0);
    let mut w = [0.0];
    for _ in 0..steps {
        x += model.sample_into(rng, &mut w);
        y += w[0];
        if x > a + delta {
            return Some(counts);
        }
        if x > a {
            let z = s * (y - gamma * x);
            for (c, (lo, hi)) in counts.iter_mut().zip(boxes) {
                if z > *lo && z <= *hi {
                    *c += 1.0;
                }
            }
        }
    }
    None
}

/// Renewal counts of `(X_n, Z_n)` in slabs `(a, a + delta]` and the
/// configured `z` boxes against the renewal-density expansion.
pub fn run_renewal_check(cfg: &ExperimentConfig) -> Result<RenewalReport> {
    let models = cfg.validate()?;
    let mut rows = Vec::new();
    let mut rejected_total = 0;
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let this = index;
            index += 1;
            if !model.is_positive() {
                return Err(Error::config("model", "renewal checks need positive increments"));
            }
            let (ms, _) = model_moments(model, cfg, this)?;
            if ms.dim_w != 1 {
                return Err(Error::WrongDimension {
                    expected: 1,
                    got: ms.dim_w,
                });
            }
            let boxes: Vec<(f64, f64)> = cfg.z_boxes.iter().map(|b| (b.lo(), b.hi())).collect();
            let s = mat_vec(&ms.sigma_inv_sqrt, &[1.0])[0];
            let gamma = ms.gamma[0];
            let steps = cfg.max_steps.unwrap_or_else(|| default_max_steps(a + cfg.delta, ms.nu));
            let seed = cell_seed(cfg, this, TAG_WALKS);
            let paths: Vec<Option<Vec<f64>>> = in_pool(cfg.workers, || {
                (0..cfg.reps)
                    .into_par_iter()
                    .map(|i| renewal_path(model, a, cfg.delta, &boxes, s, gamma, steps, &mut seed.stream(i as u64)))
                    .collect()
            })?;
            let rejected = paths.iter().filter(|p| p.is_none()).count();
            check_rejections(rejected, cfg.reps)?;
            rejected_total += rejected;
            let ok: Vec<&Vec<f64>> = paths.iter().flatten().collect();
            for (k, b) in cfg.z_boxes.iter().enumerate() {
                let col: Vec<f64> = ok.iter().map(|p| p[k]).collect();
                let est = mean_se(&col);
                let expected = renewal_slab_count(&ms, a, cfg.delta, b.lo(), b.hi())?;
                rows.push(RenewalRow {
                    a,
                    model: model.kind_name().to_string(),
                    delta: cfg.delta,
                    z0: b.0,
                    z1: b.1,
                    expected,
                    observed: est.mean,
                    se: est.se,
                    z: studentize(est.mean, expected, est.se),
                });
            }
        }
    }
    Ok(RenewalReport {
        config: cfg.clone(),
        rejected: rejected_total,
        rows,
    })
}

/// One simulated stopped walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub rep: usize,
    pub tau: usize,
    pub x_tau: f64,
    pub overshoot: f64,
    pub w_tau: Vec<f64>,
    pub t: Option<f64>,
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub a: f64,
    pub model: String,
    pub rejected: usize,
    pub rows: Vec<SimRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: ExperimentConfig,
    pub cells: Vec<SimCell>,
}

impl Report for SimulationReport {
    fn csv_header(&self) -> Vec<String> {
        let m = self
            .cells
            .iter()
            .flat_map(|c| c.rows.first())
            .map(|r| r.w_tau.len())
            .next()
            .unwrap_or(1);
        let mut h: Vec<String> = ["a", "model", "rep", "tau", "x_tau", "overshoot"]
            .map(String::from)
            .to_vec();
        h.extend((1..=m).map(|j| format!("w{j}")));
        h.extend(["t".to_string(), "t0".to_string()]);
        h
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let opt = |v: Option<f64>| v.map(CsvCell::Num).unwrap_or_else(|| "".into());
        let mut rows = Vec::new();
        for c in &self.cells {
            for r in &c.rows {
                let mut row: Vec<CsvCell> = vec![
                    c.a.into(),
                    c.model.clone().into(),
                    r.rep.into(),
                    r.tau.into(),
                    r.x_tau.into(),
                    r.overshoot.into(),
                ];
                row.extend(r.w_tau.iter().map(|v| CsvCell::Num(*v)));
                row.push(opt(r.t));
                row.push(opt(r.t0));
                rows.push(row);
            }
        }
        rows
    }
}

/// Stopped walks with their t-statistics, one row per replication.
pub fn run_simulate(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    let models = cfg.validate()?;
    let mut cells = Vec::new();
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let (ms, _) = model_moments(model, cfg, index)?;
            let mu = cfg.mu.unwrap_or(ms.mu);
            let steps = max_steps(cfg, a, ms.nu);
            let seed = cell_seed(cfg, index, TAG_WALKS);
            let raw: Vec<Option<SimRow>> = in_pool(cfg.workers, || {
                (0..cfg.reps)
                    .into_par_iter()
                    .map(|i| match run_to_boundary(model, a, steps, &mut seed.stream(i as u64)) {
                        Ok(w) => {
                            let (t, t0) = match t_statistics(&w, mu) {
                                Ok((t, t0)) => (Some(t), Some(t0)),
                                Err(Error::TooFewObservations(_)) | Err(Error::DegenerateVariance) => (None, None),
                                Err(e) => return Err(e),
                            };
                            Ok(Some(SimRow {
                                rep: i,
                                tau: w.tau,
                                x_tau: w.x_tau,
                                overshoot: w.overshoot,
                                w_tau: w.w_tau,
                                t,
                                t0,
                            }))
                        }
                        Err(Error::MaxStepsExceeded { .. }) => Ok(None),
                        Err(e) => Err(e),
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let rejected = raw.iter().filter(|r| r.is_none()).count();
            check_rejections(rejected, cfg.reps)?;
            cells.push(SimCell {
                a,
                model: model.kind_name().to_string(),
                rejected,
                rows: raw.into_iter().flatten().collect(),
            });
            index += 1;
        }
    }
    Ok(SimulationReport {
        config: cfg.clone(),
        cells,
    })
}

/// Constants of the t-statistic expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T0Constants {
    pub nu: f64,
    /// `sqrt(Var Y)`.
    pub sigma: f64,
    pub mu3: f64,
    pub sigma_xy: f64,
}

/// Population and ladder constants of the first configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsReport {
    pub model: ModelSpec,
    pub sampled: bool,
    pub t0: T0Constants,
    /// Joint moments and every derived constant, as written by
    /// `MomentSet::to_json`.
    pub moments: serde_json::Value,
    pub ladder: Option<LadderScalars>,
}

impl Report for MomentsReport {
    fn csv_header(&self) -> Vec<String> {
        vec!["name".into(), "value".into()]
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let mut rows: Vec<Vec<CsvCell>> = vec![
            vec!["t0.nu".into(), self.t0.nu.into()],
            vec!["t0.sigma".into(), self.t0.sigma.into()],
            vec!["t0.mu3".into(), self.t0.mu3.into()],
            vec!["t0.sigma_xy".into(), self.t0.sigma_xy.into()],
        ];
        if let Ok(ms) = crate::model::MomentSet::from_json(&self.moments) {
            rows.extend(ms.flatten().into_iter().map(|(k, v)| vec![k.into(), v.into()]));
        }
        if let Some(l) = &self.ladder {
            rows.push(vec!["ladder.e_t".into(), l.e_t.into()]);
            rows.push(vec!["ladder.e_x".into(), l.e_x.into()]);
            rows.push(vec!["ladder.e_x2".into(), l.e_x2.into()]);
            for (j, v) in l.xz.iter().enumerate() {
                rows.push(vec![format!("ladder.xz[{j}]").into(), (*v).into()]);
            }
        }
        rows
    }
}

/// Constants of `cfg.model[0]`; ladder constants are exact or sampled
/// with `ladder_draws` epochs.
pub fn run_moments(cfg: &ExperimentConfig) -> Result<MomentsReport> {
    let models = cfg.validate()?;
    let model = &models[0];
    let (ms, sampled) = model_moments(model, cfg, 0)?;
    let ladder = in_pool(cfg.workers, || model_ladder(model, &ms, cfg, 0))??;
    Ok(MomentsReport {
        model: model.spec().clone(),
        sampled,
        t0: T0Constants {
            nu: ms.nu,
            sigma: ms.var_y.sqrt(),
            mu3: ms.mu3,
            sigma_xy: ms.sigma_xy,
        },
        moments: ms.to_json(),
        ladder: Some(ladder.scalars()),
    })
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CsvCell, Report};
use super::{
    cell_seed, check_rejections, in_pool, max_steps, model_ladder, model_moments, ExperimentConfig, StatisticChoice,
    TAG_WALKS,
};
use crate::expansion::{
    fa_cdf, marginal_cdf_w, t0_cdf, xi_statistic, ExpansionContext, SigmaStarPartition, SmoothStatistic, StatCoords,
};
use crate::inference::t_statistics;
use crate::model::{IncrementModel, MomentSet};
use crate::normal;
use crate::stats::{binomial_se, studentize};
use crate::walk::{simulate, Retain, StoppedWalk};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub c: f64,
    pub empirical: f64,
    pub se: f64,
    pub phi: f64,
    pub expansion: f64,
    /// `(empirical - phi) / se`.
    #[serde(with = "crate::stats::nonfinite")]
    pub z_phi: f64,
    /// `(empirical - expansion) / se`.
    #[serde(with = "crate::stats::nonfinite")]
    pub z_expansion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfCell {
    pub a: f64,
    pub model: String,
    pub statistic: String,
    pub reps: usize,
    pub rejected: usize,
    pub rows: Vec<CdfRow>,
    /// Largest `|empirical - phi|` over the grid.
    pub sup_phi: f64,
    /// Largest `|empirical - expansion|` over the grid.
    pub sup_expansion: f64,
    /// For `T`: sup-distance between the empirical laws of `T` and `T0`
    /// computed from the same walks.
    pub paired_t_t0_sup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CdfCell>,
}

impl Report for CdfReport {
    fn csv_header(&self) -> Vec<String> {
        [
            "a",
            "model",
            "statistic",
            "c",
            "empirical",
            "se",
            "phi",
            "expansion",
            "z_phi",
            "z_expansion",
        ]
        .map(String::from)
        .to_vec()
    }

    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            for r in &cell.rows {
                rows.push(vec![
                    cell.a.into(),
                    cell.model.clone().into(),
                    cell.statistic.clone().into(),
                    r.c.into(),
                    r.empirical.into(),
                    r.se.into(),
                    r.phi.into(),
                    r.expansion.into(),
                    r.z_phi.into(),
                    r.z_expansion.into(),
                ]);
            }
        }
        rows
    }
}

/// Empirical `P(V <= c)` from sorted values.
fn ecdf(sorted: &[f64], c: f64) -> f64 {
    sorted.partition_point(|v| *v <= c) as f64 / sorted.len() as f64
}

/// `sup_x |F_1(x) - F_2(x)|` for two samples.
fn two_sample_sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

struct Evaluated {
    values: Vec<f64>,
    paired: Option<Vec<f64>>,
    rejected: usize,
}

/// Simulates `reps` walks and applies `stat`; `None` marks a rejected
/// replication.
fn simulate_values<F>(
    cfg: &ExperimentConfig,
    model: &IncrementModel,
    a: f64,
    nu: f64,
    index: usize,
    retain: Retain,
    stat: F,
) -> Result<Vec<Option<(f64, f64)>>>
where
    F: Fn(&StoppedWalk) -> Result<Option<(f64, f64)>> + Sync,
{
    let steps = max_steps(cfg, a, nu);
    let seed = cell_seed(cfg, index, TAG_WALKS);
    in_pool(cfg.workers, || {
        (0..cfg.reps)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed.stream(i as u64);
                match simulate(model, a, steps, &mut rng, retain) {
                    Ok(w) => stat(&w),
                    Err(Error::MaxStepsExceeded { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })?
}

fn collect(raw: Vec<Option<(f64, f64)>>, paired: bool) -> Evaluated {
    let rejected = raw.iter().filter(|v| v.is_none()).count();
    let mut values: Vec<f64> = raw.iter().flatten().map(|p| p.0).collect();
    values.sort_by(f64::total_cmp);
    let paired = paired.then(|| {
        let mut v: Vec<f64> = raw.iter().flatten().map(|p| p.1).collect();
        v.sort_by(f64::total_cmp);
        v
    });
    Evaluated {
        values,
        paired,
        rejected,
    }
}

fn build_cell<F>(
    cfg: &ExperimentConfig,
    a: f64,
    model: &str,
    statistic: &str,
    ev: Evaluated,
    expansion: F,
) -> Result<CdfCell>
where
    F: Fn(f64) -> Result<f64>,
{
    check_rejections(ev.rejected, cfg.reps)?;
    let n = ev.values.len();
    let mut rows = Vec::with_capacity(cfg.c_grid.len());
    for &c in &cfg.c_grid {
        let empirical = ecdf(&ev.values, c);
        let se = binomial_se(empirical, n);
        let phi = normal::cdf(c);
        let expansion = expansion(c)?;
        rows.push(CdfRow {
            c,
            empirical,
            se,
            phi,
            expansion,
            z_phi: studentize(empirical, phi, se),
            z_expansion: studentize(empirical, expansion, se),
        });
    }
    let sup = |f: fn(&CdfRow) -> f64| rows.iter().map(|r| (r.empirical - f(r)).abs()).fold(0.0, f64::max);
    Ok(CdfCell {
        a,
        model: model.to_string(),
        statistic: statistic.to_string(),
        reps: cfg.reps,
        rejected: ev.rejected,
        sup_phi: sup(|r| r.phi),
        sup_expansion: sup(|r| r.expansion),
        paired_t_t0_sup: ev.paired.as_ref().map(|p| two_sample_sup(&ev.values, p)),
        rows,
    })
}

fn t_values(walk: &StoppedWalk, mu: f64, use_t: bool) -> Result<Option<(f64, f64)>> {
    match t_statistics(walk, mu) {
        Ok((t, t0)) => Ok(Some(if use_t { (t, t0) } else { (t0, t) })),
        Err(Error::TooFewObservations(_)) | Err(Error::DegenerateVariance) => Ok(None),
        Err(e) => Err(e),
    }
}

fn require_m1(ms: &MomentSet) -> Result<()> {
    if ms.dim_w != 1 {
        return Err(Error::WrongDimension {
            expected: 1,
            got: ms.dim_w,
        });
    }
    Ok(())
}

/// Empirical distribution of the chosen statistic against `Phi` and against
/// its second-order expansion.
pub fn run_cdf_compare(cfg: &ExperimentConfig, statistic: StatisticChoice) -> Result<CdfReport> {
    let models = cfg.validate()?;
    let mut cells = Vec::new();
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let (ms, _) = model_moments(model, cfg, index)?;
            let name = statistic.to_string();
            let kind = model.kind_name();
            let cell = match statistic {
                StatisticChoice::T0 | StatisticChoice::T => {
                    let mu = cfg.mu.unwrap_or(ms.mu);
                    let use_t = statistic == StatisticChoice::T;
                    let raw = simulate_values(cfg, model, a, ms.nu, index, Retain::Increments, |w| {
                        t_values(w, mu, use_t)
                    })?;
                    let ev = collect(raw, use_t);
                    let sigma = ms.var_y.sqrt();
                    build_cell(cfg, a, kind, &name, ev, |c| {
                        t0_cdf(c, a, ms.nu, sigma, ms.mu3, ms.sigma_xy)
                    })?
                }
                StatisticChoice::WMarginal => {
                    require_m1(&ms)?;
                    let ladder = if ms.gamma[0] != 0.0 {
                        Some(model_ladder(model, &ms, cfg, index)?)
                    } else {
                        None
                    };
                    let ctx = ExpansionContext::new(ms.clone(), ladder, a)?;
                    let g = ms.gamma[0];
                    let scale = ms.sigma_mat[(0, 0)].sqrt() * (a / ms.nu).sqrt();
                    let raw = simulate_values(cfg, model, a, ms.nu, index, Retain::Summary, |w| {
                        Ok(Some(((w.w_tau[0] - g * a) / scale, 0.0)))
                    })?;
                    build_cell(cfg, a, kind, &name, collect(raw, false), |c| {
                        marginal_cdf_w(&ctx, g * a + c * scale)
                    })?
                }
                StatisticChoice::CenteredSum => {
                    let stat = SmoothStatistic::centered_sum(&ms)?;
                    fa_cell(cfg, model, &ms, a, index, &stat)?
                }
            };
            cells.push(cell);
            index += 1;
        }
    }
    Ok(CdfReport {
        config: cfg.clone(),
        cells,
    })
}

fn fa_cell(
    cfg: &ExperimentConfig,
    model: &IncrementModel,
    ms: &MomentSet,
    a: f64,
    index: usize,
    stat: &SmoothStatistic,
) -> Result<CdfCell> {
    if stat.coords != StatCoords::Raw {
        return Err(Error::InvalidStatistic(format!(
            "{}: custom statistics must act on W_tau directly",
            stat.name
        )));
    }
    let part = SigmaStarPartition::new(ms)?;
    let ladder = if part.gamma1 != 0.0 {
        Some(model_ladder(model, ms, cfg, index)?)
    } else {
        None
    };
    let ctx = ExpansionContext::new(ms.clone(), ladder, a)?;
    let raw = simulate_values(cfg, model, a, ms.nu, index, Retain::Summary, |w| {
        match xi_statistic(w, stat, a) {
            Ok(v) => Ok(Some((v, 0.0))),
            Err(Error::OutOfNeighborhood) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    build_cell(cfg, a, model.kind_name(), &stat.name, collect(raw, false), |c| {
        fa_cdf(c, &ctx, &part, stat)
    })
}

/// [`run_cdf_compare`] for a user-supplied smooth statistic of `W_tau`.
pub fn run_cdf_compare_with(cfg: &ExperimentConfig, stat: &SmoothStatistic) -> Result<CdfReport> {
    let models = cfg.validate()?;
    let mut cells = Vec::new();
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let (ms, _) = model_moments(model, cfg, index)?;
            cells.push(fa_cell(cfg, model, &ms, a, index, stat)?);
            index += 1;
        }
    }
    Ok(CdfReport {
        config: cfg.clone(),
        cells,
    })
}

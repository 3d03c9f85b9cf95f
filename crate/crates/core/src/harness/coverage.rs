use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{CsvCell, Report};
use super::{cell_seed, check_rejections, describe, in_pool, max_steps, model_moments, ExperimentConfig, TAG_WALKS};
use crate::inference::{interval, ConfidenceInterval, Method};
use crate::model::IncrementModel;
use crate::stats::binomial_se;
use crate::walk::run_to_boundary;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Covered,
    Upper,
    Lower,
    Rejected,
}

fn classify(ci: &ConfidenceInterval, mu: f64) -> Outcome {
    if ci.contains(mu) {
        Outcome::Covered
    } else if mu > ci.ucl {
        Outcome::Upper
    } else {
        Outcome::Lower
    }
}

/// Simulates one walk and classifies every requested interval.
fn replicate(
    model: &IncrementModel,
    a: f64,
    steps: usize,
    mu: f64,
    cfg: &ExperimentConfig,
    rng: &mut crate::rng::SimRng,
) -> Result<Vec<Outcome>> {
    let k = cfg.methods.len();
    let walk = match run_to_boundary(model, a, steps, rng) {
        Ok(w) => w,
        Err(Error::MaxStepsExceeded { .. }) => return Ok(vec![Outcome::Rejected; k]),
        Err(e) => return Err(e),
    };
    if walk.tau < 2 {
        return Ok(vec![Outcome::Rejected; k]);
    }
    cfg.methods
        .iter()
        .map(|&m| match interval(&walk, cfg.alpha, m) {
            Ok(ci) => Ok(classify(&ci, mu)),
            Err(Error::DegenerateVariance) => {
                let y_bar = walk.w_tau[0] / walk.tau as f64;
                let ci = ConfidenceInterval {
                    lcl: y_bar,
                    ucl: y_bar,
                    method: m,
                    alpha: cfg.alpha,
                };
                Ok(classify(&ci, mu))
            }
            Err(Error::NonPositiveNuHat(_)) => Ok(Outcome::Rejected),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSe {
    pub coverage: f64,
    pub upper_error: f64,
    pub lower_error: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCounts {
    pub covered: usize,
    pub upper: usize,
    pub lower: usize,
}

/// Tallies for one `(a, model, method)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub a: f64,
    pub nu: f64,
    pub rho: Option<f64>,
    pub model: String,
    pub method: Method,
    pub coverage: f64,
    /// `P(mu > UCL)`.
    pub upper_error: f64,
    /// `P(mu < LCL)`.
    pub lower_error: f64,
    pub se: CoverageSe,
    pub rejected: usize,
    pub reps: usize,
    pub counts: CoverageCounts,
}

impl CoverageCell {
    fn from_counts(a: f64, nu: f64, rho: Option<f64>, model: &str, method: Method, outcomes: &[Outcome]) -> Self {
        let reps = outcomes.len();
        let count = |o: Outcome| outcomes.iter().filter(|x| **x == o).count();
        let counts = CoverageCounts {
            covered: count(Outcome::Covered),
            upper: count(Outcome::Upper),
            lower: count(Outcome::Lower),
        };
        let rejected = count(Outcome::Rejected);
        let n = reps as f64;
        let (c, u, l) = (
            counts.covered as f64 / n,
            counts.upper as f64 / n,
            counts.lower as f64 / n,
        );
        CoverageCell {
            a,
            nu,
            rho,
            model: model.to_string(),
            method,
            coverage: c,
            upper_error: u,
            lower_error: l,
            se: CoverageSe {
                coverage: binomial_se(c, reps),
                upper_error: binomial_se(u, reps),
                lower_error: binomial_se(l, reps),
            },
            rejected,
            reps,
            counts,
        }
    }

    /// `|P(upper) - alpha| + |P(lower) - alpha|`.
    pub fn bias(&self, alpha: f64) -> f64 {
        (self.upper_error - alpha).abs() + (self.lower_error - alpha).abs()
    }

    fn setting_label(&self) -> String {
        match self.rho {
            Some(r) => format!("a={} nu={} rho={}", self.a, self.nu, r),
            None => format!("a={} nu={} model={}", self.a, self.nu, self.model),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: ExperimentConfig,
    pub cells: Vec<CoverageCell>,
}

impl CoverageReport {
    pub fn cell(&self, a: f64, nu: f64, rho: f64, method: Method) -> Option<&CoverageCell> {
        self.cells
            .iter()
            .find(|c| c.a == a && c.nu == nu && c.rho == Some(rho) && c.method == method)
    }

    fn settings(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            let l = c.setting_label();
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    fn methods(&self) -> Vec<Method> {
        let mut out = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.method) {
                out.push(c.method);
            }
        }
        out
    }
}

impl Report for CoverageReport {
    fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["interval".to_string()];
        h.extend(self.settings());
        h
    }

    /// Three rows per method: coverage, `P(mu >= UCL)`, `P(mu <= LCL)`.
    fn csv_rows(&self) -> Vec<Vec<CsvCell>> {
        let settings = self.settings();
        let mut rows = Vec::new();
        for m in self.methods() {
            let t = m.tag();
            let labels = [
                m.label().to_string(),
                format!("P(mu >= UCL{t})"),
                format!("P(mu <= LCL{t})"),
            ];
            for (k, label) in labels.into_iter().enumerate() {
                let mut row = vec![CsvCell::Text(label)];
                for s in &settings {
                    let cell = self.cells.iter().find(|c| c.method == m && &c.setting_label() == s);
                    row.push(match cell {
                        Some(c) => CsvCell::Num([c.coverage, c.upper_error, c.lower_error][k]),
                        None => CsvCell::Text(String::new()),
                    });
                }
                rows.push(row);
            }
        }
        rows
    }
}

/// Coverage and one-sided error probabilities of the configured intervals.
pub fn run_coverage(cfg: &ExperimentConfig) -> Result<CoverageReport> {
    let models = cfg.validate()?;
    let mut cells = Vec::new();
    let mut index = 0;
    for &a in &cfg.a {
        for model in &models {
            let (ms, _) = model_moments(model, cfg, index)?;
            let mu = cfg.mu.unwrap_or(ms.mu);
            let (nu, rho) = describe(&ms);
            let steps = max_steps(cfg, a, nu);
            let seed = cell_seed(cfg, index, TAG_WALKS);
            let outcomes: Vec<Vec<Outcome>> = in_pool(cfg.workers, || {
                (0..cfg.reps)
                    .into_par_iter()
                    .map(|i| replicate(model, a, steps, mu, cfg, &mut seed.stream(i as u64)))
                    .collect::<Result<Vec<_>>>()
            })??;
            for (k, &method) in cfg.methods.iter().enumerate() {
                let col: Vec<Outcome> = outcomes.iter().map(|o| o[k]).collect();
                let cell = CoverageCell::from_counts(a, nu, rho, model.kind_name(), method, &col);
                check_rejections(cell.rejected, cell.reps)?;
                cells.push(cell);
            }
            index += 1;
        }
    }
    Ok(CoverageReport {
        config: cfg.clone(),
        cells,
    })
}

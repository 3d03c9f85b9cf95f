//! Monte Carlo experiments and their reports.
//!
//! Every replication draws from its own stream `(cell seed, replication
//! index)` and results are reduced in replication order, so reports do not
//! depend on the number of worker threads.

mod cdf;
mod checks;
mod config;
mod coverage;
mod report;

pub use cdf::{run_cdf_compare, run_cdf_compare_with, CdfCell, CdfReport, CdfRow};
pub use checks::{
    run_identity_checks, run_moments, run_renewal_check, run_sign_discrimination, run_simulate, IdentityCell,
    IdentitySuite, MomentsReport, RenewalReport, RenewalRow, SignRegion, SignReport, SimCell, SimRow, SimulationReport,
    T0Constants,
};
pub use config::{bivariate_spec, ExperimentConfig, Format, StatisticChoice, ZBox};
pub use coverage::{run_coverage, CoverageCell, CoverageCounts, CoverageReport, CoverageSe};
pub use report::{format_float, parse_report, serialize_report, to_json_string, CsvCell, Report, FULL_DIGITS};

use crate::ladder::{analytic_ladder_moments, ladder_moments, LadderMoments};
use crate::linalg::SingularPolicy;
use crate::model::{analytic_moments, sample_moments, IncrementModel, MomentSet};
use crate::rng::StreamSeed;
use crate::walk::{default_ladder_max_steps, default_max_steps, sample_ladder_variables};
use crate::{Error, Result};

const TAG_WALKS: u64 = 0;
const TAG_LADDER: u64 = 1;
const TAG_MOMENTS: u64 = 2;

/// Stream seed for one purpose within one cell.
fn cell_seed(cfg: &ExperimentConfig, cell: usize, tag: u64) -> StreamSeed {
    StreamSeed::new(cfg.seed).derive(cell as u64).derive(tag)
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
fn in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Closed-form moments when available, otherwise a sample estimate.
fn model_moments(model: &IncrementModel, cfg: &ExperimentConfig, cell: usize) -> Result<(MomentSet, bool)> {
    match analytic_moments(model) {
        Ok(ms) => Ok((ms, false)),
        Err(Error::NoClosedForm(_)) => {
            let s = sample_moments(model, cfg.moment_draws, &cell_seed(cfg, cell, TAG_MOMENTS))?;
            Ok((s.moments, true))
        }
        Err(Error::SingularSigma { .. }) => {
            let j = model.joint_moments()?;
            let mut ms = MomentSet::from_joint(&j, SingularPolicy::Pseudo)?;
            ms.model_fingerprint = Some(model.fingerprint());
            Ok((ms, false))
        }
        Err(e) => Err(e),
    }
}

/// Exact ladder moments when available, otherwise `ladder_draws` sampled
/// ladder epochs.
fn model_ladder(model: &IncrementModel, ms: &MomentSet, cfg: &ExperimentConfig, cell: usize) -> Result<LadderMoments> {
    match analytic_ladder_moments(model, ms) {
        Ok(l) => Ok(l),
        Err(Error::NoClosedForm(_)) => {
            let sample = sample_ladder_variables(
                model,
                cfg.ladder_draws,
                default_ladder_max_steps(ms.nu),
                &cell_seed(cfg, cell, TAG_LADDER),
            )?;
            ladder_moments(&sample, ms)
        }
        Err(e) => Err(e),
    }
}

fn max_steps(cfg: &ExperimentConfig, a: f64, nu: f64) -> usize {
    cfg.max_steps.unwrap_or_else(|| default_max_steps(a, nu))
}

/// `(nu, corr(X, Y))` of a model.
fn describe(ms: &MomentSet) -> (f64, Option<f64>) {
    let vx = ms.joint.cov[(0, 0)];
    let rho = (vx > 0.0 && ms.var_y > 0.0).then(|| ms.sigma_xy / (vx * ms.var_y).sqrt());
    (ms.nu, rho)
}

fn check_rejections(rejected: usize, reps: usize) -> Result<()> {
    if rejected * 100 > reps {
        return Err(Error::TooManyRejections { rejected, reps });
    }
    Ok(())
}

//! t-statistics, plug-in estimates and confidence intervals for the mean of
//! `Y` after sequential sampling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::normal;
use crate::walk::StoppedWalk;
use crate::{Error, Result};

/// Whether the skewness `mu3` is estimated or set to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mu3Mode {
    Zero,
    Estimated,
}

/// Plug-in estimates from one stopped walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginEstimates {
    pub nu_hat: f64,
    /// Square root of `sum (e_i - Ybar)^2 / (tau - 1)`.
    pub sigma_hat: f64,
    /// Square root of `sum (e_i - Ybar)^2 / tau`.
    pub sigma0_hat: f64,
    pub mu3_hat: f64,
    pub sigma_xy_hat: f64,
    pub y_bar: f64,
    pub tau: usize,
}

fn sample_stats(walk: &StoppedWalk) -> Result<(usize, f64, f64)> {
    let inc = walk.increments()?;
    let tau = inc.len();
    if tau < 2 {
        return Err(Error::TooFewObservations(tau));
    }
    let n = tau as f64;
    let y_bar = inc.y().sum::<f64>() / n;
    let ss: f64 = inc.y().map(|e| (e - y_bar) * (e - y_bar)).sum();
    if !(ss > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok((tau, y_bar, ss))
}

/// `(T, T0)` with `T = (Ybar - mu) / (sigma_hat / sqrt(tau))` and `T0` the
/// same with `sigma0_hat`.
pub fn t_statistics(walk: &StoppedWalk, mu: f64) -> Result<(f64, f64)> {
    let (tau, y_bar, ss) = sample_stats(walk)?;
    let n = tau as f64;
    let s = (ss / (n - 1.0)).sqrt();
    let s0 = (ss / n).sqrt();
    let d = (y_bar - mu) * n.sqrt();
    Ok((d / s, d / s0))
}

pub fn plugin_estimates(walk: &StoppedWalk, mode: Mu3Mode) -> Result<PluginEstimates> {
    let (tau, y_bar, ss) = sample_stats(walk)?;
    let inc = walk.increments()?;
    let n = tau as f64;
    let x_sum: f64 = inc.x.iter().sum();
    let nu_hat = x_sum / n;
    let xe: f64 = inc.x.iter().zip(inc.y()).map(|(x, e)| x * e).sum();
    let mu3_hat = match mode {
        Mu3Mode::Zero => 0.0,
        Mu3Mode::Estimated => inc.y().map(|e| (e - y_bar).powi(3)).sum::<f64>() / n,
    };
    Ok(PluginEstimates {
        nu_hat,
        sigma_hat: (ss / (n - 1.0)).sqrt(),
        sigma0_hat: (ss / n).sqrt(),
        mu3_hat,
        sigma_xy_hat: xe / n - nu_hat * y_bar,
        y_bar,
        tau,
    })
}

/// Interval construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "anscombe")]
    Anscombe,
    #[serde(rename = "corrected-zero-mu3")]
    CorrectedZeroMu3,
    #[serde(rename = "corrected-estimated-mu3")]
    CorrectedEstimatedMu3,
}

impl Method {
    pub const ALL: [Method; 3] = [
        Method::Anscombe,
        Method::CorrectedZeroMu3,
        Method::CorrectedEstimatedMu3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Anscombe => "anscombe",
            Method::CorrectedZeroMu3 => "corrected-zero-mu3",
            Method::CorrectedEstimatedMu3 => "corrected-estimated-mu3",
        }
    }

    /// Interval label in the coverage table, e.g. `(LCL_0, UCL_0)`.
    pub fn label(self) -> &'static str {
        match self {
            Method::Anscombe => "(LCL_0, UCL_0)",
            Method::CorrectedZeroMu3 => "(LCL_1^(1), UCL_1^(1))",
            Method::CorrectedEstimatedMu3 => "(LCL_1^(2), UCL_1^(2))",
        }
    }

    /// Suffix used in the error-probability rows, e.g. `UCL_0`.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Anscombe => "_0",
            Method::CorrectedZeroMu3 => "_1^(1)",
            Method::CorrectedEstimatedMu3 => "_1^(2)",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("methods", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lcl: f64,
    pub ucl: f64,
    pub method: Method,
    pub alpha: f64,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.ucl - self.lcl
    }

    pub fn contains(&self, mu: f64) -> bool {
        self.lcl <= mu && mu <= self.ucl
    }
}

fn z_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::DomainError(format!("alpha must lie in (0, 0.5], got {alpha}")));
    }
    Ok(normal::quantile(1.0 - alpha))
}

/// `Ybar +- z_alpha sigma_hat / sqrt(tau)`.
pub fn ci_anscombe(walk: &StoppedWalk, alpha: f64) -> Result<ConfidenceInterval> {
    let z = z_alpha(alpha)?;
    let (tau, y_bar, ss) = sample_stats(walk)?;
    let n = tau as f64;
    let half = z * (ss / (n - 1.0)).sqrt() / n.sqrt();
    Ok(ConfidenceInterval {
        lcl: y_bar - half,
        ucl: y_bar + half,
        method: Method::Anscombe,
        alpha,
    })
}

/// Shift of the corrected interval relative to the Anscombe interval.
pub fn corrected_shift(est: &PluginEstimates, a: f64, z: f64) -> Result<f64> {
    if !(est.nu_hat > 0.0) {
        return Err(Error::NonPositiveNuHat(est.nu_hat));
    }
    if !(a > 0.0) {
        return Err(Error::DomainError(format!("boundary a must be positive, got {a}")));
    }
    let s = est.sigma_hat;
    let bracket = est.mu3_hat * (1.0 + 2.0 * z * z) / (6.0 * s.powi(3)) - est.sigma_xy_hat / (2.0 * est.nu_hat * s);
    Ok(s / (est.tau as f64).sqrt() * (est.nu_hat / a).sqrt() * bracket)
}

/// Anscombe interval translated by the second-order bias correction.
pub fn ci_corrected(walk: &StoppedWalk, alpha: f64, mode: Mu3Mode) -> Result<ConfidenceInterval> {
    let base = ci_anscombe(walk, alpha)?;
    let est = plugin_estimates(walk, mode)?;
    let shift = corrected_shift(&est, walk.a, z_alpha(alpha)?)?;
    Ok(ConfidenceInterval {
        lcl: base.lcl + shift,
        ucl: base.ucl + shift,
        method: match mode {
            Mu3Mode::Zero => Method::CorrectedZeroMu3,
            Mu3Mode::Estimated => Method::CorrectedEstimatedMu3,
        },
        alpha,
    })
}

/// Interval for `method`.
pub fn interval(walk: &StoppedWalk, alpha: f64, method: Method) -> Result<ConfidenceInterval> {
    match method {
        Method::Anscombe => ci_anscombe(walk, alpha),
        Method::CorrectedZeroMu3 => ci_corrected(walk, alpha, Mu3Mode::Zero),
        Method::CorrectedEstimatedMu3 => ci_corrected(walk, alpha, Mu3Mode::Estimated),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::Increments;
    use proptest::prelude::*;

    pub(crate) fn walk_of(x: Vec<f64>, e: Vec<f64>, a: f64) -> StoppedWalk {
        let x_tau = x.iter().sum();
        let y_tau = e.iter().sum();
        StoppedWalk {
            tau: x.len(),
            a,
            x_tau,
            w_tau: vec![y_tau],
            overshoot: x_tau - a,
            increments: Some(Increments { dim_w: 1, x, w: e }),
        }
    }

    #[test]
    fn hand_examples() {
        let w = walk_of(vec![1.0; 4], vec![1.0, 2.0, 3.0, 2.0], 3.5);
        assert_eq!(t_statistics(&w, 2.0).unwrap(), (0.0, 0.0));
        let p = plugin_estimates(&w, Mu3Mode::Estimated).unwrap();
        assert_eq!(p.nu_hat, 1.0);
        assert!(p.sigma_xy_hat.abs() < 1e-15);
        assert!(p.mu3_hat.abs() < 1e-15);
        assert!((p.sigma_hat.powi(2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.sigma0_hat.powi(2) - 3.0 * p.sigma_hat.powi(2) / 4.0).abs() < 1e-15);
        let ci = ci_anscombe(&w, 0.05).unwrap();
        assert!(
            (ci.lcl - 1.3285).abs() < 1e-4 && (ci.ucl - 2.6715).abs() < 1e-4,
            "{ci:?}"
        );
        let cc = ci_corrected(&w, 0.05, Mu3Mode::Estimated).unwrap();
        assert!((cc.lcl - ci.lcl).abs() < 1e-15 && (cc.ucl - ci.ucl).abs() < 1e-15);
        let half = ci_anscombe(&w, 0.5).unwrap();
        assert_eq!(half.lcl, half.ucl);

        let w2 = walk_of(vec![1.0, 1.0], vec![0.0, 2.0], 1.5);
        let (t, t0) = t_statistics(&w2, 0.0).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!((t0 - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn error_cases() {
        let flat = walk_of(vec![1.0; 3], vec![2.0; 3], 2.5);
        assert!(matches!(t_statistics(&flat, 0.0), Err(Error::DegenerateVariance)));
        assert!(matches!(ci_anscombe(&flat, 0.05), Err(Error::DegenerateVariance)));
        let one = walk_of(vec![2.0], vec![1.0], 1.0);
        assert!(matches!(t_statistics(&one, 0.0), Err(Error::TooFewObservations(1))));
        let back = walk_of(vec![3.0, -2.0, -1.5], vec![1.0, 0.0, 2.0], 0.5);
        assert!(matches!(
            ci_corrected(&back, 0.05, Mu3Mode::Zero),
            Err(Error::NonPositiveNuHat(_))
        ));
        let mut bare = walk_of(vec![1.0, 1.0], vec![0.0, 1.0], 1.5);
        bare.increments = None;
        assert!(matches!(
            plugin_estimates(&bare, Mu3Mode::Zero),
            Err(Error::IncrementsNotRetained)
        ));
    }

    #[test]
    fn positive_covariance_shifts_down() {
        let w = walk_of(vec![0.5, 1.5, 0.2, 2.0], vec![0.0, 1.0, -0.5, 1.5], 4.0);
        let est = plugin_estimates(&w, Mu3Mode::Zero).unwrap();
        assert!(est.sigma_xy_hat > 0.0);
        let a = ci_anscombe(&w, 0.05).unwrap();
        let c = ci_corrected(&w, 0.05, Mu3Mode::Zero).unwrap();
        let expect =
            est.sigma_hat / 2.0 * (est.nu_hat / 4.0).sqrt() * est.sigma_xy_hat / (2.0 * est.nu_hat * est.sigma_hat);
        assert!((a.lcl - c.lcl - expect).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("other".parse::<Method>().is_err());
    }

    fn walk_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (3usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(0.05f64..3.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn corrected_is_a_translation((x, e) in walk_strategy(), alpha in 0.01f64..0.3) {
            let w = walk_of(x, e, 2.0);
            let a = ci_anscombe(&w, alpha).unwrap();
            for mode in [Mu3Mode::Zero, Mu3Mode::Estimated] {
                let c = ci_corrected(&w, alpha, mode).unwrap();
                let est = plugin_estimates(&w, mode).unwrap();
                let shift = corrected_shift(&est, 2.0, normal::quantile(1.0 - alpha)).unwrap();
                prop_assert!((c.width() - a.width()).abs() <= 1e-12 * a.width().max(1.0));
                prop_assert!((c.lcl - a.lcl - shift).abs() <= 1e-12 * (1.0 + a.lcl.abs()));
            }
        }

        #[test]
        fn location_equivariance((x, e) in walk_strategy(), k in -10.0f64..10.0) {
            let w = walk_of(x.clone(), e.clone(), 2.0);
            let shifted = walk_of(x, e.iter().map(|v| v + k).collect(), 2.0);
            let (p, q) = (
                plugin_estimates(&w, Mu3Mode::Estimated).unwrap(),
                plugin_estimates(&shifted, Mu3Mode::Estimated).unwrap(),
            );
            let scale = 1.0 + k.abs() * p.nu_hat;
            prop_assert!((p.sigma_xy_hat - q.sigma_xy_hat).abs() < 1e-9 * scale);
            prop_assert!((p.mu3_hat - q.mu3_hat).abs() < 1e-8 * (1.0 + p.sigma_hat.powi(3)));
            for m in Method::ALL {
                let a = interval(&w, 0.05, m).unwrap();
                let b = interval(&shifted, 0.05, m).unwrap();
                prop_assert!((b.lcl - a.lcl - k).abs() < 1e-9 * (1.0 + k.abs()));
                prop_assert!((b.width() - a.width()).abs() < 1e-9);
            }
        }

        #[test]
        fn t_and_t0_agree_in_sign((x, e) in walk_strategy(), mu in -3.0f64..3.0) {
            let w = walk_of(x, e, 2.0);
            let (t, t0) = t_statistics(&w, mu).unwrap();
            prop_assert!(t * t0 >= 0.0);
            prop_assert!(t.abs() <= t0.abs());
        }
    }
}

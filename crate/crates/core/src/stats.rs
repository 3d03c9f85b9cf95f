//! Sample means with standard errors.

use serde::{Deserialize, Serialize};

/// A Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Mean and `sd / sqrt(n)` (sample sd with `n - 1`).
pub fn mean_se(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Estimate { mean, se: f64::NAN };
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Estimate {
        mean,
        se: (ss / (n - 1) as f64 / n as f64).sqrt(),
    }
}

/// Binomial standard error of a proportion estimated from `n` trials.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `(estimate - claim) / se`, treating differences at round-off level as zero.
pub fn studentize(estimate: f64, claim: f64, se: f64) -> f64 {
    let diff = estimate - claim;
    let scale = 1.0 + estimate.abs().max(claim.abs());
    if diff.abs() <= 1e-12 * scale {
        return 0.0;
    }
    if !(se > 0.0) {
        return diff.signum() * f64::INFINITY;
    }
    diff / se
}

/// Serde adapter that writes non-finite floats as the strings `"inf"`,
/// `"-inf"` and `"nan"`.
pub mod nonfinite {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("expected a number, got `{other}`"))),
            },
        }
    }
}

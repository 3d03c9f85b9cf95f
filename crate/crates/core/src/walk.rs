//! Random walks stopped at the first crossing of a constant boundary, and
//! their strict ascending ladder epochs.

use rand::Rng;
use rayon::prelude::*;

use crate::model::IncrementModel;
use crate::rng::StreamSeed;
use crate::{Error, Result};

/// Per-step increments of a walk; `w` is stored row-major, `dim_w` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub dim_w: usize,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Increments {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `W` increment of step `i` (0-based).
    pub fn w_step(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim_w..(i + 1) * self.dim_w]
    }

    /// First coordinate `e_i` of every `W` increment.
    pub fn y(&self) -> impl Iterator<Item = f64> + '_ {
        self.w.chunks(self.dim_w).map(|c| c[0])
    }
}

/// One path stopped at `tau = inf{n : X_n > a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppedWalk {
    pub tau: usize,
    pub a: f64,
    pub x_tau: f64,
    pub w_tau: Vec<f64>,
    pub overshoot: f64,
    /// `None` when run with [`Retain::Summary`].
    pub increments: Option<Increments>,
}

impl StoppedWalk {
    pub fn increments(&self) -> Result<&Increments> {
        self.increments.as_ref().ok_or(Error::IncrementsNotRetained)
    }
}

/// Whether a simulated walk keeps its increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retain {
    Increments,
    Summary,
}

/// `ceil(50 (a + 1) / nu)`.
pub fn default_max_steps(a: f64, nu: f64) -> usize {
    (50.0 * (a + 1.0) / nu).ceil().max(1.0) as usize
}

/// Step guard for ladder sampling: `ceil(1000 / nu)`.
pub fn default_ladder_max_steps(nu: f64) -> usize {
    (1000.0 / nu).ceil().max(1.0) as usize
}

/// Runs the walk until `X_n > a`, keeping its increments.
pub fn run_to_boundary<R: Rng + ?Sized>(
    model: &IncrementModel,
    a: f64,
    max_steps: usize,
    rng: &mut R,
) -> Result<StoppedWalk> {
    simulate(model, a, max_steps, rng, Retain::Increments)
}

/// Runs the walk until `X_n > a`.
pub fn simulate<R: Rng + ?Sized>(
    model: &IncrementModel,
    a: f64,
    max_steps: usize,
    rng: &mut R,
    retain: Retain,
) -> Result<StoppedWalk> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::DomainError(format!(
            "boundary a must be finite and >= 0, got {a}"
        )));
    }
    if max_steps == 0 {
        return Err(Error::InvalidCount("max_steps must be at least 1".into()));
    }
    let m = model.dim_w();
    let mut w_sum = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut x_sum = 0.0;
    let mut incs = match retain {
        Retain::Increments => Some(Increments {
            dim_w: m,
            x: Vec::new(),
            w: Vec::new(),
        }),
        Retain::Summary => None,
    };
    for n in 1..=max_steps {
        let x = model.sample_into(rng, &mut w);
        x_sum += x;
        for (s, v) in w_sum.iter_mut().zip(&w) {
            *s += v;
        }
        if let Some(inc) = incs.as_mut() {
            inc.x.push(x);
            inc.w.extend_from_slice(&w);
        }
        if x_sum > a {
            return Ok(StoppedWalk {
                tau: n,
                a,
                x_tau: x_sum,
                w_tau: w_sum,
                overshoot: x_sum - a,
                increments: incs,
            });
        }
    }
    Err(Error::MaxStepsExceeded {
        failures: 1,
        attempted: 1,
        max_steps,
    })
}

/// One strict ascending ladder epoch and the increments since the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderEpoch {
    /// `T_k`.
    pub epoch: usize,
    /// `T_k - T_{k-1}`.
    pub gap: usize,
    /// `X_{T_k} - X_{T_{k-1}} > 0`.
    pub dx: f64,
    /// `W_{T_k} - W_{T_{k-1}}`.
    pub dw: Vec<f64>,
}

/// All strict ascending ladder epochs of a finite path (`X_0 = 0`).
pub fn ladder_epochs(x_increments: &[f64], w_increments: &[f64], dim_w: usize) -> Result<Vec<LadderEpoch>> {
    if w_increments.len() != x_increments.len() * dim_w {
        return Err(Error::WrongDimension {
            expected: x_increments.len() * dim_w,
            got: w_increments.len(),
        });
    }
    let mut out = Vec::new();
    let mut x = 0.0;
    let mut w = vec![0.0; dim_w];
    let mut record = 0.0;
    let mut w_at_record = vec![0.0; dim_w];
    let mut last = 0;
    for (i, dx) in x_increments.iter().enumerate() {
        x += dx;
        for (j, wj) in w.iter_mut().enumerate() {
            *wj += w_increments[i * dim_w + j];
        }
        if x > record {
            let n = i + 1;
            out.push(LadderEpoch {
                epoch: n,
                gap: n - last,
                dx: x - record,
                dw: w.iter().zip(&w_at_record).map(|(a, b)| a - b).collect(),
            });
            record = x;
            w_at_record.copy_from_slice(&w);
            last = n;
        }
    }
    if out.is_empty() {
        return Err(Error::NoLadderEpoch);
    }
    Ok(out)
}

/// Independent draws of the first ladder variables `(T, X~, W~)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderSample {
    pub dim_w: usize,
    pub t: Vec<usize>,
    pub x: Vec<f64>,
    /// Row-major, `dim_w` per draw.
    pub w: Vec<f64>,
    /// [`IncrementModel::fingerprint`] of the generating model.
    pub model_fingerprint: Option<u64>,
}

impl LadderSample {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn w_draw(&self, i: usize) -> &[f64] {
        &self.w[i * self.dim_w..(i + 1) * self.dim_w]
    }
}

/// `n` first-ladder draws, each from a fresh walk on stream `i` of `seed`.
pub fn sample_ladder_variables(
    model: &IncrementModel,
    n: usize,
    max_steps: usize,
    seed: &StreamSeed,
) -> Result<LadderSample> {
    if n == 0 {
        return Err(Error::InvalidCount("ladder sample size must be at least 1".into()));
    }
    let draws: Vec<Option<StoppedWalk>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.stream(i as u64);
            simulate(model, 0.0, max_steps, &mut rng, Retain::Summary).ok()
        })
        .collect();
    let failures = draws.iter().filter(|d| d.is_none()).count();
    if failures > 0 {
        return Err(Error::MaxStepsExceeded {
            failures,
            attempted: n,
            max_steps,
        });
    }
    let m = model.dim_w();
    let mut out = LadderSample {
        dim_w: m,
        t: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        w: Vec::with_capacity(n * m),
        model_fingerprint: Some(model.fingerprint()),
    };
    for d in draws.into_iter().flatten() {
        out.t.push(d.tau);
        out.x.push(d.x_tau);
        out.w.extend_from_slice(&d.w_tau);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_walk() {
        let m = IncrementModel::point_mass(1.0, vec![0.0]).unwrap();
        let mut rng = StreamSeed::new(0).stream(0);
        let w = run_to_boundary(&m, 2.5, 10, &mut rng).unwrap();
        assert_eq!(w.tau, 3);
        assert_eq!(w.x_tau, 3.0);
        assert_eq!(w.overshoot, 0.5);
        let w0 = run_to_boundary(&m, 0.0, 10, &mut rng).unwrap();
        assert_eq!(w0.tau, 1);
        assert!(matches!(
            run_to_boundary(&m, 20.0, 5, &mut rng),
            Err(Error::MaxStepsExceeded { max_steps: 5, .. })
        ));
    }

    #[test]
    fn hand_walked_epochs() {
        let e = ladder_epochs(&[-1.0, 2.0], &[0.5, 1.0], 1).unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].epoch, 2);
        assert_eq!(e[0].dx, 1.0);
        assert_eq!(e[0].dw, vec![1.5]);
        let all = ladder_epochs(&[1.0, 2.0, 0.5], &[0.0; 3], 1).unwrap();
        assert_eq!(all.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(all.iter().map(|e| e.dx).collect::<Vec<_>>(), vec![1.0, 2.0, 0.5]);
        assert!(matches!(
            ladder_epochs(&[-1.0, 1.0], &[0.0; 2], 1),
            Err(Error::NoLadderEpoch)
        ));
    }

    #[test]
    fn empty_ladder_request() {
        let m = IncrementModel::bivariate_normal(0.5, 0.0, 0.4).unwrap();
        assert!(matches!(
            sample_ladder_variables(&m, 0, 100, &StreamSeed::new(1)),
            Err(Error::InvalidCount(_))
        ));
    }
}

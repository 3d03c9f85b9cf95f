//! Small dense helpers: symmetric (inverse) square roots and symmetric
//! third-order moment tensors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Eigenvalues below this fraction of the largest one count as zero.
pub const EIGEN_RELATIVE_TOL: f64 = 1e-10;

/// What to do when a covariance matrix is (numerically) singular.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularPolicy {
    /// Raise [`Error::SingularSigma`].
    Strict,
    /// Invert on the range only; null directions map to zero.
    Pseudo,
}

/// Result of [`inv_sqrt`].
#[derive(Debug, Clone)]
pub struct InvSqrt {
    pub inv_sqrt: DMatrix<f64>,
    /// Determinant of the input (product of its eigenvalues, zeros included).
    pub det: f64,
    /// Whether every eigenvalue passed the tolerance.
    pub regular: bool,
}

/// Symmetric inverse square root `S^{-1/2}` via eigendecomposition.
pub fn inv_sqrt(mat: &DMatrix<f64>, policy: SingularPolicy, which: &'static str) -> Result<InvSqrt> {
    let n = mat.nrows();
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = EIGEN_RELATIVE_TOL * max;
    let regular = max > 0.0 && min > tol;
    if !regular && policy == SingularPolicy::Strict {
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        return Err(Error::SingularSigma { which, ratio });
    }
    let mut d = DMatrix::zeros(n, n);
    let mut det = 1.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        det *= l.max(0.0);
        if max > 0.0 && l > tol {
            d[(i, i)] = 1.0 / l.sqrt();
        }
    }
    let v = &eig.eigenvectors;
    Ok(InvSqrt {
        inv_sqrt: v * d * v.transpose(),
        det,
        regular,
    })
}

/// Symmetric square root of a positive semidefinite matrix; negative
/// eigenvalues from round-off are clamped to zero.
pub fn sqrt_psd(mat: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (mat + mat.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Symmetric tensor of third moments `T[i,j,k] = E[U_i U_j U_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    pub dim: usize,
    /// Row-major `dim^3` entries.
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Tensor3 {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dim + j) * self.dim + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let ix = self.idx(i, j, k);
        self.data[ix] += v;
    }

    /// `sum T[a,b,c] q_a q_b q_c`, i.e. `E(q . U)^3`.
    pub fn contract(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim);
        let mut s = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                let qab = q[a] * q[b];
                for c in 0..self.dim {
                    s += self.get(a, b, c) * qab * q[c];
                }
            }
        }
        s
    }

    /// `v_c = sum_a T[a,a,c]`, i.e. `E[|U|^2 U]`.
    pub fn trace_vec(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|c| (0..self.dim).map(|a| self.get(a, a, c)).sum())
            .collect()
    }

    /// Moments of `M U` for a linear map `M` (rows = new dimension).
    pub fn transform(&self, m: &DMatrix<f64>) -> Tensor3 {
        assert_eq!(m.ncols(), self.dim);
        let out_dim = m.nrows();
        let d = self.dim;
        // contract one index at a time: O(out * d^3) instead of O(out^3 d^3)
        let mut t1 = vec![0.0; out_dim * d * d];
        for a in 0..out_dim {
            for i in 0..d {
                let mai = m[(a, i)];
                if mai == 0.0 {
                    continue;
                }
                for j in 0..d {
                    for k in 0..d {
                        t1[(a * d + j) * d + k] += mai * self.get(i, j, k);
                    }
                }
            }
        }
        let mut t2 = vec![0.0; out_dim * out_dim * d];
        for a in 0..out_dim {
            for b in 0..out_dim {
                for j in 0..d {
                    let mbj = m[(b, j)];
                    if mbj == 0.0 {
                        continue;
                    }
                    for k in 0..d {
                        t2[(a * out_dim + b) * d + k] += mbj * t1[(a * d + j) * d + k];
                    }
                }
            }
        }
        let mut out = Tensor3::zeros(out_dim);
        for a in 0..out_dim {
            for b in 0..out_dim {
                for c in 0..out_dim {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += m[(c, k)] * t2[(a * out_dim + b) * d + k];
                    }
                    out.data[(a * out_dim + b) * out_dim + c] = s;
                }
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn mat_vec(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(v)).as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = inv_sqrt(&m, SingularPolicy::Strict, "test").unwrap();
        let prod = &r.inv_sqrt * &m * &r.inv_sqrt;
        assert!((prod - DMatrix::identity(3, 3)).abs().max() < 1e-12);
        assert!((r.det - m.determinant()).abs() < 1e-12);
        assert!(r.regular);
    }

    #[test]
    fn singular_is_rejected_when_strict() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            inv_sqrt(&m, SingularPolicy::Strict, "Sigma"),
            Err(Error::SingularSigma { .. })
        ));
        let r = inv_sqrt(&m, SingularPolicy::Pseudo, "Sigma").unwrap();
        assert!(!r.regular);
        // pseudo-inverse root acts on the range only
        let v = mat_vec(&r.inv_sqrt, &[1.0, -1.0]);
        assert!(norm2(&v) < 1e-20);
        let zero = inv_sqrt(&DMatrix::zeros(2, 2), SingularPolicy::Pseudo, "Sigma").unwrap();
        assert_eq!(zero.inv_sqrt, DMatrix::zeros(2, 2));
    }

    #[test]
    fn transform_matches_brute_force() {
        let mut t = Tensor3::zeros(2);
        let vals = [1.0, 0.3, 0.3, -0.2, 0.3, -0.2, -0.2, 0.7];
        t.data.copy_from_slice(&vals);
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.25, 0.0, 1.5]);
        let out = t.transform(&m);
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    let mut s = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            for k in 0..2 {
                                s += m[(a, i)] * m[(b, j)] * m[(c, k)] * t.get(i, j, k);
                            }
                        }
                    }
                    assert!((out.get(a, b, c) - s).abs() < 1e-14);
                }
            }
        }
        let q = [0.4, -1.1];
        let mut brute = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    brute += q[i] * q[j] * q[k] * t.get(i, j, k);
                }
            }
        }
        assert!((t.contract(&q) - brute).abs() < 1e-14);
    }
}

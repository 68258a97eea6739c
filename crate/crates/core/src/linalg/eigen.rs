use crate::error::{domain, Result};
use crate::scalar::Scalar;

use super::{SymMatrix, Vector};

const MAX_SWEEPS: usize = 100;

/// Full spectrum of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct EigenResult<T = f64> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Orthonormal eigenvectors; `vectors[i]` pairs with `values[i]`.
    pub vectors: Vec<Vector<T>>,
    pub sweeps: usize,
}

impl<T: Scalar> EigenResult<T> {
    pub fn lambda_max(&self) -> T {
        self.values[0]
    }

    pub fn lambda_min(&self) -> T {
        self.values[self.values.len() - 1]
    }

    /// `V diag(λ) Vᵀ`
    pub fn reconstruct(&self) -> SymMatrix<T> {
        let n = self.values.len();
        let mut m = SymMatrix::zeros(n);
        for (lambda, v) in self.values.iter().zip(&self.vectors) {
            m.add_outer(v.as_slice(), *lambda);
        }
        m
    }

    /// Largest `‖M vᵢ − λᵢ vᵢ‖` over the spectrum.
    pub fn max_residual(&self, m: &SymMatrix<T>) -> T {
        self.values
            .iter()
            .zip(&self.vectors)
            .map(|(&lambda, v)| m.mul_vec(v.as_slice()).sub(&v.scaled(lambda)).norm())
            .fold(T::zero(), T::max)
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius mass drops below `1e-12·‖M‖_F`
/// (or 100 sweeps). Cost is `O(n³)` per sweep, fine for the small `p` here.
pub fn eig_sym<T: Scalar>(m: &SymMatrix<T>) -> Result<EigenResult<T>> {
    if !m.is_finite() {
        return Err(domain("eigendecomposition of a non-finite matrix"));
    }
    let n = m.dim();
    if n == 0 {
        return Err(domain("eigendecomposition of an empty matrix"));
    }
    let mut a = m.to_rows();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let scale = m.frobenius_norm();
    let tol = T::tol(1e-12) * scale;

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let mut off = T::zero();
        for (i, row) in a.iter().enumerate() {
            for &x in &row[i + 1..] {
                off = off + x * x;
            }
        }
        if (off + off).sqrt() <= tol {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (apq + apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                a[p][q] = T::zero();
                a[q][p] = T::zero();
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| Vector::from_vec_unchecked(v.iter().map(|row| row[i]).collect()))
        .collect();
    Ok(EigenResult { values, vectors, sweeps })
}

use crate::error::{check_dim, domain, Result};
use crate::scalar::Scalar;

use super::{dot, eig_sym, Vector};

/// Symmetric `n×n` matrix with packed upper-triangular storage, so symmetry
/// holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T = f64> {
    n: usize,
    upper: Vec<T>,
}

#[inline]
fn packed(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![T::zero(); n * (n + 1) / 2],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle `i <= j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Builds from dense rows; the rows must be square and symmetric to `tol`.
    pub fn from_rows(rows: &[Vec<T>], tol: T) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim(n, r.len())?;
        }
        for i in 0..n {
            for j in 0..i {
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(domain(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.upper[packed(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        let k = packed(self.n, i, j);
        self.upper[k] = value;
    }

    /// `self += c · x xᵀ`
    pub fn add_outer(&mut self, x: &[T], c: T) {
        let mut k = 0;
        for i in 0..self.n {
            let ci = c * x[i];
            for xj in &x[i..] {
                self.upper[k] = self.upper[k] + ci * *xj;
                k += 1;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.upper.iter_mut().zip(&other.upper) {
            *a = *a + b;
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            n: self.n,
            upper: self.upper.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vector<T> {
        let out = (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j]))
            .collect();
        Vector::from_vec_unchecked(out)
    }

    /// `xᵀ M y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        dot(x, self.mul_vec(y).as_slice())
    }

    pub fn frobenius_norm(&self) -> T {
        let mut s = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.get(i, j);
                s = s + v * v;
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|x| x.is_finite())
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j)).collect()).collect()
    }

    pub fn to_matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn lambda_max(&self) -> Result<T> {
        Ok(eig_sym(self)?.lambda_max())
    }

    pub fn lambda_min(&self) -> Result<T> {
        Ok(eig_sym(self)?.lambda_min())
    }
}

/// Dense row-major real matrix, used for the non-symmetric cross moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim(cols, r.len())?;
        }
        Ok(Self::from_fn(rows.len(), cols, |i, j| rows[i][j]))
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    /// `self += c · x yᵀ`
    pub fn add_outer(&mut self, x: &[T], y: &[T], c: T) {
        for (i, &xi) in x.iter().enumerate() {
            let ci = c * xi;
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &yj) in row.iter_mut().zip(y) {
                *r = *r + ci * yj;
            }
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn mul_vec(&self, x: &[T]) -> Vector<T> {
        let out = self.data.chunks_exact(self.cols.max(1)).map(|row| dot(row, x)).collect();
        Vector::from_vec_unchecked(out)
    }

    /// `MᵀM`
    pub fn gram(&self) -> SymMatrix<T> {
        SymMatrix::from_fn(self.cols, |i, j| {
            (0..self.rows).fold(T::zero(), |acc, r| acc + self.get(r, i) * self.get(r, j))
        })
    }

    /// Largest singular value, via the top eigenvalue of `MᵀM`.
    pub fn op_norm(&self) -> Result<T> {
        Ok(self.gram().lambda_max()?.max(T::zero()).sqrt())
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks_exact(self.cols.max(1)).map(<[T]>::to_vec).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_indexing_is_symmetric() {
        let m = SymMatrix::from_fn(4, |i, j| (10 * i + j) as f64);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert_eq!(m.get(1, 3), 13.0);
    }

    #[test]
    fn outer_product_update() {
        let mut m = SymMatrix::<f64>::zeros(3);
        m.add_outer(&[1.0, 2.0, 3.0], 2.0);
        assert_eq!(m.get(2, 1), 12.0);
        assert_eq!(m.bilinear(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), 6.0);
        let mut c = Matrix::<f64>::zeros(2, 2);
        c.add_outer(&[1.0, 2.0], &[3.0, 4.0], 1.0);
        assert_eq!(c.to_rows(), vec![vec![3.0, 4.0], vec![6.0, 8.0]]);
        assert_eq!(c.mul_vec(&[1.0, 1.0]).as_slice(), &[7.0, 14.0]);
    }

    #[test]
    fn op_norm_of_rank_one() {
        let mut c = Matrix::<f64>::zeros(3, 3);
        c.add_outer(&[1.0, 2.0, 2.0], &[0.0, 3.0, 4.0], 1.0);
        assert!((c.op_norm().unwrap() - 15.0).abs() < 1e-10);
    }

    #[test]
    fn from_rows_checks_symmetry() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]], 1e-12).is_err());
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]], 1e-12).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
    }
}

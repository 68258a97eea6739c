//! Small dense real linear algebra: vectors, packed symmetric matrices,
//! square matrices, and a cyclic Jacobi eigensolver.

mod eigen;
mod matrix;

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};
use crate::scalar::Scalar;

pub use eigen::{eig_sym, EigenResult};
pub use matrix::{Matrix, SymMatrix};

/// Dense real vector: a filter `w`, a patch, or a gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T = f64>(Vec<T>);

impl<T: Scalar> Vector<T> {
    /// Builds a vector, rejecting empty or non-finite input.
    pub fn new(entries: Vec<T>) -> Result<Self> {
        if entries.is_empty() {
            return Err(domain("vector must have at least one entry"));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(domain("vector entries must be finite"));
        }
        Ok(Self(entries))
    }

    pub(crate) fn from_vec_unchecked(entries: Vec<T>) -> Self {
        Self(entries)
    }

    pub fn from_slice(entries: &[T]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn zeros(p: usize) -> Self {
        Self(vec![T::zero(); p])
    }

    /// `i`-th standard basis vector of length `p`.
    pub fn basis(p: usize, i: usize) -> Self {
        let mut v = Self::zeros(p);
        v.0[i] = T::one();
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.0.iter()
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    pub fn scaled(&self, c: T) -> Self {
        Self(self.0.iter().map(|&x| x * c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| a - b).collect())
    }

    /// `self += c * x`
    pub fn axpy(&mut self, c: T, x: &[T]) {
        axpy(&mut self.0, c, x);
    }

    /// Unit vector in the same direction. Returns the zero vector unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self.scaled(n.recip())
        } else {
            self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// `‖self − other‖`
    pub fn distance(&self, other: &Self) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    /// Converts between scalar types.
    pub fn cast<U: Scalar>(&self) -> Vector<U> {
        Vector(self.0.iter().map(|x| U::of(x.to_f64_lossy())).collect())
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Scalar> From<Vector<T>> for Vec<T> {
    fn from(v: Vector<T>) -> Self {
        v.0
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn axpy<T: Scalar>(y: &mut [T], c: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + c * xi;
    }
}

/// Angle between two nonzero vectors, in `[0, π]`.
pub fn angle<T: Scalar>(u: &Vector<T>, v: &Vector<T>) -> Result<T> {
    check_dim(u.len(), v.len())?;
    angle_slices(u.as_slice(), v.as_slice())
}

pub(crate) fn angle_slices<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if !(nu > T::zero() && nv > T::zero()) {
        return Err(domain("angle is undefined for a zero vector"));
    }
    // 2·atan2(‖û − v̂‖, ‖û + v̂‖) stays accurate near 0 and π, where acos does not
    let (mut d, mut s) = (T::zero(), T::zero());
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (a / nu, b / nv);
        d = d + (a - b) * (a - b);
        s = s + (a + b) * (a + b);
    }
    Ok(T::of(2.0) * d.sqrt().atan2(s.sqrt()))
}

/// Unit vector at angle `phi` from `w_star`, rotated within the plane
/// spanned by `w_star` and `u_perp`: `cos(phi)·ŵ* + sin(phi)·û`.
pub fn rotate_toward<T: Scalar>(w_star: &Vector<T>, u_perp: &Vector<T>, phi: T) -> Result<Vector<T>> {
    check_dim(w_star.len(), u_perp.len())?;
    if !(phi >= T::zero() && phi <= T::PI()) {
        return Err(domain(format!("rotation angle {phi} outside [0, π]")));
    }
    let (nw, nu) = (w_star.norm(), u_perp.norm());
    if !(nw > T::zero() && nu > T::zero()) {
        return Err(domain("rotate_toward needs nonzero axis and direction"));
    }
    let w_hat = w_star.scaled(nw.recip());
    let u_hat = u_perp.scaled(nu.recip());
    if w_hat.dot(&u_hat).abs() >= T::tol(1e-10) {
        return Err(domain("rotation direction is not orthogonal to the axis"));
    }
    let mut out = w_hat.scaled(phi.cos());
    out.axpy(phi.sin(), u_hat.as_slice());
    Ok(out)
}

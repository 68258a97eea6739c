//! Prediction `f(w, Z) = (1/k) Σ relu(wᵀZᵢ)`, the squared loss against a
//! teacher, and its (sub)gradient.
//!
//! The activation indicator counts `wᵀZᵢ = 0` as active.

use crate::distributions::{DataView, PatchSample, Patches};
use crate::error::{check_dim, domain, Error, Result};
use crate::linalg::{axpy, dot, Vector};
use crate::reduce::{self, tree_reduce};
use crate::scalar::Scalar;

/// Teacher filter `w*` and the student `w` being trained.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherStudent<T = f64> {
    pub w_star: Vector<T>,
    pub w: Vector<T>,
}

impl<T: Scalar> TeacherStudent<T> {
    pub fn new(w_star: Vector<T>, w: Vector<T>) -> Result<Self> {
        check_dim(w_star.len(), w.len())?;
        if !(w_star.norm() > T::zero()) {
            return Err(domain("teacher filter must be nonzero"));
        }
        Ok(Self { w_star, w })
    }

    pub fn loss(&self, z: Patches<'_, T>) -> Result<T> {
        loss(&self.w, &self.w_star, z)
    }

    pub fn gradient(&self, z: Patches<'_, T>) -> Result<GradientSample<T>> {
        sample_gradient(&self.w, &self.w_star, z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSample<T = f64> {
    pub g: Vector<T>,
    /// `f(w, Z) − f(w*, Z)`
    pub residual: T,
}

pub fn predict<T: Scalar>(w: &Vector<T>, z: Patches<'_, T>) -> Result<T> {
    check_dim(z.p(), w.len())?;
    Ok(predict_unchecked(w.as_slice(), z))
}

#[inline]
fn predict_unchecked<T: Scalar>(w: &[T], z: Patches<'_, T>) -> T {
    let s = z.columns().fold(T::zero(), |acc, c| acc + dot(w, c).max(T::zero()));
    s / T::of_usize(z.k())
}

/// `½ (f(w, Z) − f(w*, Z))²`
pub fn loss<T: Scalar>(w: &Vector<T>, w_star: &Vector<T>, z: Patches<'_, T>) -> Result<T> {
    check_dim(w.len(), w_star.len())?;
    let r = predict(w, z)? - predict(w_star, z)?;
    Ok(T::of(0.5) * r * r)
}

/// Gradient of the loss in `w` for one sample:
/// `(f(w,Z) − f(w*,Z)) · (1/k) Σ Zᵢ 1{wᵀZᵢ ≥ 0}`.
pub fn sample_gradient<T: Scalar>(w: &Vector<T>, w_star: &Vector<T>, z: Patches<'_, T>) -> Result<GradientSample<T>> {
    check_dim(w.len(), w_star.len())?;
    check_dim(z.p(), w.len())?;
    if w.iter().all(|&x| x == T::zero()) {
        return Err(domain("gradient is undefined at w = 0"));
    }
    let mut g = vec![T::zero(); w.len()];
    let (residual, _) = accumulate_sample(w.as_slice(), w_star.as_slice(), z, &mut g, T::one());
    Ok(GradientSample { g: Vector::from_vec_unchecked(g), residual })
}

/// Adds `scale · ∇ℓ(w, Z)` into `grad`; returns `(residual, ‖∇ℓ‖)`.
#[inline]
pub(crate) fn accumulate_sample<T: Scalar>(
    w: &[T],
    w_star: &[T],
    z: Patches<'_, T>,
    grad: &mut [T],
    scale: T,
) -> (T, T) {
    let inv_k = T::of_usize(z.k()).recip();
    let mut f_w = T::zero();
    let mut f_star = T::zero();
    let mut active_any = false;
    // first pass: activations only
    for c in z.columns() {
        let a = dot(w, c);
        if a >= T::zero() {
            f_w = f_w + a;
            active_any = true;
        }
        let b = dot(w_star, c);
        if b > T::zero() {
            f_star = f_star + b;
        }
    }
    let residual = (f_w - f_star) * inv_k;
    if !active_any || residual == T::zero() {
        return (residual, T::zero());
    }
    let coef = residual * inv_k;
    let mut norm_sq = T::zero();
    if z.k() == 1 {
        let c = z.column(0);
        axpy(grad, scale * coef, c);
        norm_sq = coef * coef * dot(c, c);
    } else {
        let mut active = vec![T::zero(); w.len()];
        for c in z.columns() {
            if dot(w, c) >= T::zero() {
                axpy(&mut active, T::one(), c);
            }
        }
        axpy(grad, scale * coef, &active);
        norm_sq = norm_sq + coef * coef * dot(&active, &active);
    }
    (residual, norm_sq.sqrt())
}

/// Mean of [`sample_gradient`] over a batch, summed as a pairwise tree.
pub fn batch_gradient<T: Scalar>(w: &Vector<T>, w_star: &Vector<T>, batch: &[PatchSample<T>]) -> Result<Vector<T>> {
    if batch.is_empty() {
        return Err(domain("empty batch"));
    }
    let grads = batch
        .iter()
        .map(|z| sample_gradient(w, w_star, z.view()).map(|g| g.g))
        .collect::<Result<Vec<_>>>()?;
    let sum = tree_reduce(grads, |a, b| a.add(&b)).expect("non-empty");
    Ok(sum.scaled(T::of_usize(batch.len()).recip()))
}

/// Sums over a run of samples: gradient, loss, and the largest per-sample
/// gradient norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T = f64> {
    pub grad_sum: Vec<T>,
    pub loss_sum: T,
    pub max_grad_norm: T,
    pub n: usize,
}

impl<T: Scalar> BatchStats<T> {
    fn zero(p: usize) -> Self {
        Self { grad_sum: vec![T::zero(); p], loss_sum: T::zero(), max_grad_norm: T::zero(), n: 0 }
    }

    pub fn merge(mut self, other: Self) -> Self {
        axpy(&mut self.grad_sum, T::one(), &other.grad_sum);
        self.loss_sum = self.loss_sum + other.loss_sum;
        self.max_grad_norm = self.max_grad_norm.max(other.max_grad_norm);
        self.n += other.n;
        self
    }

    pub fn mean_gradient(&self) -> Vector<T> {
        let inv = T::of_usize(self.n.max(1)).recip();
        Vector::from_vec_unchecked(self.grad_sum.iter().map(|&g| g * inv).collect())
    }

    pub fn mean_loss(&self) -> T {
        self.loss_sum / T::of_usize(self.n.max(1))
    }
}

/// One deterministic pass over `data` at `w`. Chunks are reduced in fixed
/// pairwise order, so the sums do not depend on the thread pool.
pub fn batch_stats<T: Scalar>(data: DataView<'_, T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<BatchStats<T>> {
    check_dim(data.p(), w.len())?;
    check_dim(w.len(), w_star.len())?;
    if data.is_empty() {
        return Err(domain("empty batch"));
    }
    if w.iter().all(|&x| x == T::zero()) {
        return Err(Error::UndefinedGradient { step: 0 });
    }
    let (ws, wss) = (w.as_slice(), w_star.as_slice());
    let p = data.p();
    let stats = reduce::map_reduce(
        data.len(),
        reduce::CHUNK,
        |range| {
            let mut acc = BatchStats::zero(p);
            for z in data.slice(range).samples() {
                let (r, gn) = accumulate_sample(ws, wss, z, &mut acc.grad_sum, T::one());
                acc.loss_sum = acc.loss_sum + T::of(0.5) * r * r;
                acc.max_grad_norm = acc.max_grad_norm.max(gn);
                acc.n += 1;
            }
            acc
        },
        BatchStats::merge,
    );
    Ok(stats.expect("non-empty data"))
}

/// Monte Carlo mean loss over `data`.
pub fn mean_loss<T: Scalar>(data: DataView<'_, T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<T> {
    check_dim(data.p(), w.len())?;
    check_dim(w.len(), w_star.len())?;
    if data.is_empty() {
        return Err(domain("empty dataset"));
    }
    let (ws, wss) = (w.as_slice(), w_star.as_slice());
    let sum = reduce::map_reduce(
        data.len(),
        reduce::CHUNK,
        |range| {
            data.slice(range).samples().fold(T::zero(), |acc, z| {
                let r = predict_unchecked(ws, z) - predict_unchecked(wss, z);
                acc + T::of(0.5) * r * r
            })
        },
        |a, b| a + b,
    );
    Ok(sum.expect("non-empty") / T::of_usize(data.len()))
}

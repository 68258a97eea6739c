//! Uniform initialization in a ball around the origin, and the empirical
//! success rate of landing within `√(1 − α²)‖w*‖` of the teacher.

use rand::distributions::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::Vector;
use crate::rng::{stream, unit_sphere};
use crate::scalar::Scalar;
use crate::smoothness::SmoothnessProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct InitSpec<T = f64> {
    pub p: usize,
    /// Ball radius as a fraction of `‖w*‖`.
    pub alpha: T,
    pub trials: usize,
    pub seed: u64,
}

impl<T: Scalar> InitSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(domain("p must be at least 1"));
        }
        if !(self.alpha > T::zero() && self.alpha < T::one()) {
            return Err(domain(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if self.trials == 0 {
            return Err(domain("trials must be at least 1"));
        }
        Ok(())
    }

    /// `α ≤ √(1/(2πp))`
    pub fn hypothesis_ok(&self) -> bool {
        self.alpha <= (T::one() / (T::TAU() * T::of_usize(self.p))).sqrt()
    }

    /// `1/2 − √(πp/2)·α`
    pub fn bound(&self) -> T {
        T::of(0.5) - (T::PI() * T::of_usize(self.p) / T::of(2.0)).sqrt() * self.alpha
    }
}

/// Uniform draw from the centered `p`-ball: uniform direction, length
/// `radius · U^{1/p}`.
pub fn sample_ball_with<T: Scalar, R: Rng + ?Sized>(rng: &mut R, p: usize, radius: T) -> Result<Vector<T>> {
    if p == 0 {
        return Err(domain("p must be at least 1"));
    }
    if !(radius > T::zero() && radius.is_finite()) {
        return Err(domain(format!("radius {radius} must be positive")));
    }
    let dir = unit_sphere::<T, R>(rng, p);
    let u = T::of(rng.sample::<f64, _>(Open01));
    let r = radius * u.powf(T::of_usize(p).recip());
    let mut v = dir.scaled(r);
    // rounding can push the norm a hair past the radius
    while v.norm() > radius {
        v = v.scaled(T::one() - T::epsilon());
    }
    Ok(v)
}

pub fn sample_ball<T: Scalar>(p: usize, radius: T, seed: u64) -> Result<Vector<T>> {
    sample_ball_with(&mut stream(seed, &[]), p, radius)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub p: usize,
    pub alpha: f64,
    pub trials: usize,
    pub successes: usize,
    pub frequency: f64,
    pub bound: f64,
    /// Binomial standard deviation of the frequency at `p = bound`.
    pub sigma: f64,
    pub hypothesis_ok: bool,
}

/// Fraction of ball draws with `‖w₀ − w*‖ ≤ √(1 − α²)‖w*‖`. Trial `i` draws
/// from stream `(seed, i)`. Runs even when the hypothesis on `α` fails; the
/// report carries the flag.
pub fn success_experiment<T: Scalar>(spec: &InitSpec<T>, w_star: &Vector<T>) -> Result<SuccessReport> {
    spec.validate()?;
    crate::error::check_dim(spec.p, w_star.len())?;
    let ws_norm = w_star.norm();
    if !(ws_norm > T::zero()) {
        return Err(domain("teacher filter must be nonzero"));
    }
    let radius = spec.alpha * ws_norm;
    let target = (T::one() - spec.alpha * spec.alpha).sqrt() * ws_norm;
    let successes = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let w0 = sample_ball_with(&mut stream(spec.seed, &[i as u64]), spec.p, radius)?;
            Ok(usize::from(w0.distance(w_star) <= target))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    let bound = spec.bound().to_f64_lossy();
    let pb = bound.clamp(0.0, 1.0);
    Ok(SuccessReport {
        p: spec.p,
        alpha: spec.alpha.to_f64_lossy(),
        trials: spec.trials,
        successes,
        frequency: successes as f64 / spec.trials as f64,
        bound,
        sigma: (pb * (1.0 - pb) / spec.trials as f64).sqrt(),
        hypothesis_ok: spec.hypothesis_ok(),
    })
}

/// Ball radius ratio `cos φ*` for the convolutional setting, with `φ*` read
/// off a smoothness profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryInit {
    pub phi_star: f64,
    pub alpha: f64,
    /// `1/√(8πp)`
    pub threshold: f64,
    pub hypothesis_ok: bool,
}

pub fn corollary_alpha<T: Scalar>(profile: &SmoothnessProfile<T>) -> Result<CorollaryInit> {
    let phi_star = profile
        .phi_star()
        .ok_or_else(|| domain("no grid angle satisfies γ̂ ≥ 6 L̂_cross"))?
        .to_f64_lossy();
    let alpha = phi_star.cos();
    let threshold = 1.0 / (8.0 * std::f64::consts::PI * profile.p as f64).sqrt();
    Ok(CorollaryInit { phi_star, alpha, threshold, hypothesis_ok: alpha < threshold })
}

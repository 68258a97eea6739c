//! Angular smoothness estimates: `γ(φ)`, `L(φ)`, the growth rate `β` of
//! `λ_max(E[Z_pn Z_pnᵀ])`, and the cross-covariance growth rate `L_cross`.
//!
//! Moments here are expectations (probability-normalized). The planar closed
//! form in [`closed_form_2d`] is an unnormalized angular integral; divide it by
//! `2π` to compare with a unit-circle estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DataView, DistributionKind};
use crate::error::{domain, Result};
use crate::linalg::{eig_sym, rotate_toward, SymMatrix, Vector};
use crate::regions::{estimate_moments_batched, MomentSet, SE_BATCHES};
use crate::rng::{stream, unit_perpendicular};
use crate::scalar::Scalar;

pub const DEFAULT_N_W: usize = 64;
pub const DEFAULT_GRID_LEN: usize = 25;

/// `n` equispaced angles in `[0.05, π − 0.05]`.
pub fn default_grid<T: Scalar>() -> Vec<T> {
    grid(T::of(0.05), T::PI() - T::of(0.05), DEFAULT_GRID_LEN)
}

pub fn grid<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / T::of_usize(n - 1);
    (0..n).map(|i| lo + step * T::of_usize(i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct SmoothnessProfile<T = f64> {
    pub phis: Vec<T>,
    /// Min over directions of `λ_min(m_pp)`.
    pub gamma: Vec<T>,
    pub gamma_se: Vec<T>,
    /// Max over directions of `λ_max(m_pp)`.
    pub ell: Vec<T>,
    pub ell_se: Vec<T>,
    /// Running max over the grid of `λ_max(m_pn)`.
    pub ell_minus: Vec<T>,
    pub ell_minus_se: Vec<T>,
    /// Running max of the cross operator-norm sum, divided by `φ`.
    pub l_cross_ratio: Vec<T>,
    pub l_cross_ratio_se: Vec<T>,
    pub beta_hat: T,
    pub beta_se: T,
    pub l_cross_hat: T,
    pub l_cross_se: T,
    pub n_w: usize,
    pub n_samples: usize,
    pub p: usize,
    pub k: usize,
}

impl<T: Scalar> SmoothnessProfile<T> {
    pub fn is_multi_patch(&self) -> bool {
        self.k > 1
    }

    /// Index of the smallest grid angle `≥ phi`.
    pub fn index_at_or_above(&self, phi: T) -> Option<usize> {
        self.phis.iter().position(|&g| g >= phi)
    }

    /// Largest grid angle below `π/2` in the leading run where
    /// `γ̂ ≥ 6 L̂_cross`.
    pub fn phi_star(&self) -> Option<T> {
        let six = T::of(6.0) * self.l_cross_hat;
        let n = self
            .gamma
            .iter()
            .zip(&self.phis)
            .take_while(|&(&g, &phi)| g >= six && phi < T::FRAC_PI_2())
            .count();
        n.checked_sub(1).map(|i| self.phis[i])
    }
}

/// Per-direction summary at one angle.
struct DirStats<T> {
    gamma: T,
    gamma_se: T,
    ell: T,
    ell_se: T,
    ell_minus: T,
    ell_minus_se: T,
    cross: T,
    cross_se: T,
}

fn lmin<T: Scalar>(m: &SymMatrix<T>) -> Result<T> {
    Ok(eig_sym(m)?.lambda_min())
}

fn lmax<T: Scalar>(m: &SymMatrix<T>) -> Result<T> {
    Ok(eig_sym(m)?.lambda_max())
}

fn direction_stats<T: Scalar>(data: DataView<'_, T>, w: &Vector<T>, w_star: &Vector<T>) -> Result<DirStats<T>> {
    let mb = estimate_moments_batched(data, w, w_star, SE_BATCHES)?;
    let m = &mb.total;
    Ok(DirStats {
        gamma: lmin(&m.m_pp)?,
        gamma_se: mb.se(|b| lmin(&b.m_pp))?,
        ell: lmax(&m.m_pp)?,
        ell_se: mb.se(|b| lmax(&b.m_pp))?,
        ell_minus: lmax(&m.m_pn)?,
        ell_minus_se: mb.se(|b| lmax(&b.m_pn))?,
        cross: m.cross_norm_sum()?,
        cross_se: mb.se(MomentSet::cross_norm_sum)?,
    })
}

/// Student direction number `j` at grid angle number `i`.
pub fn probe_direction<T: Scalar>(w_star: &Vector<T>, phi: T, seed: u64, i: usize, j: usize) -> Result<Vector<T>> {
    let mut rng = stream(seed, &[i as u64, j as u64]);
    let u = unit_perpendicular(&mut rng, w_star);
    rotate_toward(w_star, &u, phi)
}

/// Estimates the smoothness quantities on `phis` (strictly increasing, inside
/// `(0, π)`) using `n_w` random student directions per angle.
///
/// `β̂` and `L̂_cross` take the max of the running-max ratios over grid
/// angles `≤ π/2`.
pub fn profile<T: Scalar>(
    data: DataView<'_, T>,
    w_star: &Vector<T>,
    phis: &[T],
    n_w: usize,
    seed: u64,
) -> Result<SmoothnessProfile<T>> {
    if data.len() < 2 {
        return Err(domain("profile needs at least two samples"));
    }
    if phis.is_empty() {
        return Err(domain("empty angle grid"));
    }
    if n_w == 0 {
        return Err(domain("n_w must be at least 1"));
    }
    if data.p() < 2 {
        return Err(domain("profile needs p >= 2"));
    }
    crate::error::check_dim(data.p(), w_star.len())?;
    if phis.iter().any(|&f| !(f > T::zero() && f < T::PI())) {
        return Err(domain("grid angles must lie in (0, π)"));
    }
    if phis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(domain("grid must be strictly increasing"));
    }

    let tasks: Vec<(usize, usize)> = (0..phis.len()).flat_map(|i| (0..n_w).map(move |j| (i, j))).collect();
    let stats = tasks
        .par_iter()
        .map(|&(i, j)| {
            let w = probe_direction(w_star, phis[i], seed, i, j)?;
            direction_stats(data, &w, w_star)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = phis.len();
    let mut out = SmoothnessProfile {
        phis: phis.to_vec(),
        gamma: Vec::with_capacity(n),
        gamma_se: Vec::with_capacity(n),
        ell: Vec::with_capacity(n),
        ell_se: Vec::with_capacity(n),
        ell_minus: Vec::with_capacity(n),
        ell_minus_se: Vec::with_capacity(n),
        l_cross_ratio: Vec::with_capacity(n),
        l_cross_ratio_se: Vec::with_capacity(n),
        beta_hat: T::zero(),
        beta_se: T::zero(),
        l_cross_hat: T::zero(),
        l_cross_se: T::zero(),
        n_w,
        n_samples: data.len(),
        p: data.p(),
        k: data.k(),
    };
    let (mut run_minus, mut run_minus_se) = (T::neg_infinity(), T::zero());
    let (mut run_cross, mut run_cross_se) = (T::neg_infinity(), T::zero());
    let half_pi = T::FRAC_PI_2();
    for (i, per_dir) in stats.chunks(n_w).enumerate() {
        let argmin = |f: fn(&DirStats<T>) -> T| {
            per_dir.iter().min_by(|a, b| f(a).partial_cmp(&f(b)).unwrap()).unwrap()
        };
        let argmax = |f: fn(&DirStats<T>) -> T| {
            per_dir.iter().max_by(|a, b| f(a).partial_cmp(&f(b)).unwrap()).unwrap()
        };
        let g = argmin(|d| d.gamma);
        out.gamma.push(g.gamma);
        out.gamma_se.push(g.gamma_se);
        let l = argmax(|d| d.ell);
        out.ell.push(l.ell);
        out.ell_se.push(l.ell_se);
        let lm = argmax(|d| d.ell_minus);
        if lm.ell_minus > run_minus {
            run_minus = lm.ell_minus;
            run_minus_se = lm.ell_minus_se;
        }
        out.ell_minus.push(run_minus);
        out.ell_minus_se.push(run_minus_se);
        let c = argmax(|d| d.cross);
        if c.cross > run_cross {
            run_cross = c.cross;
            run_cross_se = c.cross_se;
        }
        let phi = phis[i];
        out.l_cross_ratio.push(run_cross / phi);
        out.l_cross_ratio_se.push(run_cross_se / phi);
        if phi <= half_pi {
            if run_minus / phi > out.beta_hat {
                out.beta_hat = run_minus / phi;
                out.beta_se = run_minus_se / phi;
            }
            if run_cross / phi > out.l_cross_hat {
                out.l_cross_hat = run_cross / phi;
                out.l_cross_se = run_cross_se / phi;
            }
        }
    }
    Ok(out)
}

/// Unnormalized planar integral `∫ z zᵀ` over the angular wedge of width `φ`
/// on the unit circle:
/// `½ [[φ − sinφ cosφ, −sin²φ], [−sin²φ, φ + sinφ cosφ]]`.
pub fn closed_form_2d<T: Scalar>(phi: T) -> Result<SymMatrix<T>> {
    if !(phi >= T::zero() && phi <= T::PI()) {
        return Err(domain(format!("angle {phi} outside [0, π]")));
    }
    let (s, c) = phi.sin_cos();
    let half = T::of(0.5);
    let mut m = SymMatrix::zeros(2);
    m.set(0, 0, half * (phi - s * c));
    m.set(0, 1, -half * s * s);
    m.set(1, 1, half * (phi + s * c));
    Ok(m)
}

/// `β̂` in the unnormalized planar convention, checked against the known
/// bound for the distribution family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub kind: String,
    pub p: usize,
    pub beta_hat: f64,
    pub converted: f64,
    pub converted_se: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// `None` when no bound is known for the family.
    pub pass: Option<bool>,
}

pub fn verify_beta_bounds<T: Scalar>(profile: &SmoothnessProfile<T>, kind: &DistributionKind<T>) -> BetaReport {
    let two_pi = 2.0 * std::f64::consts::PI;
    let converted = profile.beta_hat.to_f64_lossy() * two_pi;
    let (name, lower, upper) = match kind {
        DistributionKind::UnitSphere if profile.p == 2 => ("unit_sphere", Some(0.9), Some(1.05)),
        DistributionKind::UnitSphere => ("unit_sphere", None, Some(1.05)),
        DistributionKind::StandardGaussian => ("standard_gaussian", None, Some(profile.p as f64)),
        DistributionKind::ClusteredPatches { .. } => ("clustered_patches", None, None),
        DistributionKind::FromFile { .. } => ("from_file", None, None),
    };
    let pass = (lower.is_some() || upper.is_some())
        .then(|| lower.is_none_or(|l| converted >= l) && upper.is_none_or(|u| converted <= u));
    BetaReport {
        kind: name.to_owned(),
        p: profile.p,
        beta_hat: profile.beta_hat.to_f64_lossy(),
        converted,
        converted_se: profile.beta_se.to_f64_lossy() * two_pi,
        lower,
        upper,
        pass,
    }
}

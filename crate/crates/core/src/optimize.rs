//! Gradient descent and SGD on the teacher-student loss, step-size
//! schedules, and per-step contraction checks against a smoothness profile.
//!
//! Seed layout for a run with seed `s`: the initial point draws from
//! `(s, 0)`, a pinned dataset from `(s, 1)`, fresh GD batches from
//! `(s, 1, t)`, SGD batches from `(s, 2, t)`, and pilot batches for the
//! gradient bound from `(s, 3, i)`.

use serde::{Deserialize, Serialize};

use crate::distributions::{sample, DataView, Dataset, DistributionSpec};
use crate::error::{check_dim, domain, Error, Result};
use crate::init::sample_ball_with;
use crate::linalg::{angle, Vector};
use crate::model::batch_stats;
use crate::rng::{derive_seed, stream, unit_sphere};
use crate::scalar::Scalar;
use crate::smoothness::SmoothnessProfile;

const PATH_INIT: u64 = 0;
const PATH_DATA: u64 = 1;
const PATH_SGD: u64 = 2;
const PATH_PILOT: u64 = 3;

pub const DEFAULT_SAFETY: f64 = 0.5;
pub const DEFAULT_N_MC: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum Schedule<T = f64> {
    Constant {
        eta: T,
    },
    /// `eta_small` until `φ_t` first drops to `switch_angle`, then `eta_large`.
    TwoStage {
        eta_small: T,
        eta_large: T,
        switch_angle: T,
    },
    /// [`step_size_bound`] at the current `φ_t`.
    AdaptiveTheory {
        profile: Box<SmoothnessProfile<T>>,
        safety: T,
    },
}

impl<T: Scalar> Schedule<T> {
    pub fn adaptive(profile: SmoothnessProfile<T>) -> Self {
        Schedule::AdaptiveTheory { profile: Box::new(profile), safety: T::of(DEFAULT_SAFETY) }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: T, name: &str| {
            if x > T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(domain(format!("{name} must be positive, got {x}")))
            }
        };
        match self {
            // zero is allowed: it freezes the iterate
            Schedule::Constant { eta } if *eta >= T::zero() && eta.is_finite() => Ok(()),
            Schedule::Constant { eta } => Err(domain(format!("eta must be non-negative, got {eta}"))),
            Schedule::TwoStage { eta_small, eta_large, switch_angle } => {
                pos(*eta_small, "eta_small")?;
                pos(*eta_large, "eta_large")?;
                if !(*switch_angle > T::zero() && *switch_angle < T::FRAC_PI_2()) {
                    return Err(domain("switch_angle must lie in (0, π/2)"));
                }
                Ok(())
            }
            Schedule::AdaptiveTheory { safety, .. } => {
                if !(*safety > T::zero() && *safety <= T::one()) {
                    return Err(domain("safety must lie in (0, 1]"));
                }
                Ok(())
            }
        }
    }

    /// Step size at angle bound `phi`. `switched` latches the two-stage switch.
    fn eta(&self, phi: T, switched: &mut bool) -> Result<T> {
        match self {
            Schedule::Constant { eta } => Ok(*eta),
            Schedule::TwoStage { eta_small, eta_large, switch_angle } => {
                *switched |= phi <= *switch_angle;
                Ok(if *switched { *eta_large } else { *eta_small })
            }
            Schedule::AdaptiveTheory { profile, safety } => {
                let phi = phi.max(profile.phis[0]);
                step_size_bound(profile, phi, profile.is_multi_patch(), *safety)
            }
        }
    }
}

/// Starting point of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub enum Init<T = f64> {
    Point { w0: Vector<T> },
    /// Uniform in the centered ball of radius `alpha·‖w*‖`.
    Ball { alpha: T },
    /// `w* + ratio·‖w*‖·u` with `u` uniform on the sphere.
    Offset { ratio: T },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Full-batch gradient over `n_mc` samples: one dataset for the whole run
    /// when `pinned`, a fresh one each step otherwise.
    PopulationGd { n_mc: usize, pinned: bool },
    Sgd { batch_size: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct RunConfig<T = f64> {
    pub dist: DistributionSpec<T>,
    pub w_star: Vector<T>,
    pub init: Init<T>,
    pub schedule: Schedule<T>,
    pub mode: Mode,
    pub max_iters: usize,
    /// Stop once `‖w_t − w*‖ ≤ stop_tol·‖w*‖`.
    pub stop_tol: T,
    pub seed: u64,
}

impl<T: Scalar> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        check_dim(self.dist.p, self.w_star.len())?;
        if !(self.w_star.norm() > T::zero()) {
            return Err(domain("teacher filter must be nonzero"));
        }
        self.schedule.validate()?;
        if self.max_iters == 0 {
            return Err(domain("max_iters must be at least 1"));
        }
        if !(self.stop_tol > T::zero()) {
            return Err(domain("stop_tol must be positive"));
        }
        match self.mode {
            Mode::PopulationGd { n_mc: 0, .. } => Err(domain("n_mc must be at least 1")),
            Mode::Sgd { batch_size: 0 } => Err(domain("batch_size must be at least 1")),
            _ => Ok(()),
        }?;
        match &self.init {
            Init::Point { w0 } => check_dim(self.dist.p, w0.len()),
            Init::Ball { alpha } if *alpha > T::zero() => Ok(()),
            Init::Ball { .. } => Err(domain("ball init needs alpha > 0")),
            Init::Offset { ratio } if *ratio >= T::zero() => Ok(()),
            Init::Offset { .. } => Err(domain("offset init needs ratio >= 0")),
        }
    }

    pub fn initial_point(&self) -> Result<Vector<T>> {
        let mut rng = stream(self.seed, &[PATH_INIT]);
        let ws = self.w_star.norm();
        match &self.init {
            Init::Point { w0 } => Ok(w0.clone()),
            Init::Ball { alpha } => sample_ball_with(&mut rng, self.dist.p, *alpha * ws),
            Init::Offset { ratio } => {
                let u = unit_sphere::<T, _>(&mut rng, self.dist.p);
                let mut w = self.w_star.clone();
                w.axpy(*ratio * ws, u.as_slice());
                Ok(w)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct TrajectoryRow<T = f64> {
    pub t: usize,
    pub eta: T,
    pub dist: T,
    /// `arcsin(min(dist/‖w*‖, 1))`
    pub phi: T,
    /// Mean loss over the batch used at step `t`.
    pub loss: T,
    pub grad_norm: T,
    /// Actual angle `θ(w_t, w*)`.
    pub theta: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
pub struct Trajectory<T = f64> {
    pub rows: Vec<TrajectoryRow<T>>,
    pub final_w: Vector<T>,
    pub w_star_norm: T,
    pub seed: u64,
    pub schedule: Schedule<T>,
    pub stop: StopReason,
    /// Largest per-sample gradient norm seen over the run.
    pub max_sample_grad_norm: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_dist(&self) -> T {
        self.rows.last().map_or(T::nan(), |r| r.dist)
    }

    pub fn final_relative_error(&self) -> T {
        self.final_dist() / self.w_star_norm
    }
}

/// `arcsin(min(dist/‖w*‖, 1))`
pub fn phi_bound<T: Scalar>(dist: T, w_star_norm: T) -> T {
    (dist / w_star_norm).min(T::one()).asin()
}

enum Source<'a, T> {
    Fixed(DataView<'a, T>),
    Windows(DataView<'a, T>, usize),
    Fresh { spec: &'a DistributionSpec<T>, n: usize, seed: u64 },
}

impl<T: Scalar> Source<'_, T> {
    fn with_batch<R>(&self, t: usize, f: impl FnOnce(DataView<'_, T>) -> Result<R>) -> Result<R> {
        match self {
            Source::Fixed(v) => f(*v),
            Source::Windows(v, b) => {
                let m = v.len() / b;
                let i = t % m;
                f(v.slice(i * b..(i + 1) * b))
            }
            Source::Fresh { spec, n, seed } => {
                let d = sample(spec, *n, derive_seed(*seed, &[t as u64]))?;
                f(d.view())
            }
        }
    }
}

fn run_loop<T: Scalar>(config: &RunConfig<T>, source: Source<'_, T>) -> Result<Trajectory<T>> {
    config.validate()?;
    let ws = &config.w_star;
    let ws_norm = ws.norm();
    let mut w = config.initial_point()?;
    let mut rows = Vec::new();
    let mut switched = false;
    let mut max_g = T::zero();
    let mut stop = StopReason::MaxIters;
    for t in 0..=config.max_iters {
        if w.iter().all(|&x| x == T::zero()) {
            return Err(Error::UndefinedGradient { step: t });
        }
        if !w.is_finite() {
            return Err(domain(format!("iterate diverged at step {t}")));
        }
        let dist = w.distance(ws);
        let phi = phi_bound(dist, ws_norm);
        let eta = config.schedule.eta(phi, &mut switched)?;
        let stats = source.with_batch(t, |v| batch_stats(v, &w, ws))?;
        let g = stats.mean_gradient();
        max_g = max_g.max(stats.max_grad_norm);
        rows.push(TrajectoryRow {
            t,
            eta,
            dist,
            phi,
            loss: stats.mean_loss(),
            grad_norm: g.norm(),
            theta: angle(&w, ws)?,
        });
        if dist <= config.stop_tol * ws_norm {
            stop = StopReason::Converged;
            break;
        }
        if t == config.max_iters {
            break;
        }
        w.axpy(-eta, g.as_slice());
    }
    Ok(Trajectory {
        rows,
        final_w: w,
        w_star_norm: ws_norm,
        seed: config.seed,
        schedule: config.schedule.clone(),
        stop,
        max_sample_grad_norm: max_g,
    })
}

/// Population GD with Monte Carlo gradients drawn per [`Mode::PopulationGd`].
pub fn run_gd<T: Scalar>(config: &RunConfig<T>) -> Result<Trajectory<T>> {
    let Mode::PopulationGd { n_mc, pinned } = config.mode else {
        return Err(domain("run_gd needs population_gd mode"));
    };
    let data_seed = derive_seed(config.seed, &[PATH_DATA]);
    if pinned {
        let d = sample(&config.dist, n_mc, data_seed)?;
        run_loop(config, Source::Fixed(d.view()))
    } else {
        run_loop(config, Source::Fresh { spec: &config.dist, n: n_mc, seed: data_seed })
    }
}

/// Full-batch GD on a given dataset; the mode's sample count is ignored.
pub fn run_gd_on<T: Scalar>(data: &Dataset<T>, config: &RunConfig<T>) -> Result<Trajectory<T>> {
    check_dim(config.dist.p, data.p())?;
    run_loop(config, Source::Fixed(data.view()))
}

/// SGD on fresh i.i.d. minibatches.
pub fn run_sgd<T: Scalar>(config: &RunConfig<T>) -> Result<Trajectory<T>> {
    let Mode::Sgd { batch_size } = config.mode else {
        return Err(domain("run_sgd needs sgd mode"));
    };
    let seed = derive_seed(config.seed, &[PATH_SGD]);
    run_loop(config, Source::Fresh { spec: &config.dist, n: batch_size, seed })
}

/// SGD cycling through consecutive `batch_size` windows of a fixed dataset.
/// With `batch_size = data.len()` this is exactly [`run_gd_on`].
pub fn run_sgd_on<T: Scalar>(data: &Dataset<T>, config: &RunConfig<T>) -> Result<Trajectory<T>> {
    let Mode::Sgd { batch_size } = config.mode else {
        return Err(domain("run_sgd_on needs sgd mode"));
    };
    check_dim(config.dist.p, data.p())?;
    if batch_size > data.len() {
        return Err(domain("batch_size exceeds the dataset"));
    }
    run_loop(config, Source::Windows(data.view(), batch_size))
}

/// Step-size bound at `phi`, minimized over grid angles `≤ phi`:
/// single patch `γ/(2(L + 4β)²)`, multiple patches
/// `(γ − 6L_cross)/(2(L + 10L_cross + 4β)²)`; scaled by `safety`.
pub fn step_size_bound<T: Scalar>(profile: &SmoothnessProfile<T>, phi: T, multi_patch: bool, safety: T) -> Result<T> {
    let first = *profile.phis.first().ok_or_else(|| domain("empty profile"))?;
    if phi < first {
        return Err(domain(format!("angle {phi} is below the profile grid minimum {first}")));
    }
    let beta = profile.beta_hat;
    let lc = if multi_patch { profile.l_cross_hat } else { T::zero() };
    let two = T::of(2.0);
    let mut best = T::infinity();
    for (i, &g) in profile.phis.iter().enumerate().take_while(|&(_, &g)| g <= phi) {
        let num = profile.gamma[i] - T::of(6.0) * lc;
        if !(num > T::zero()) {
            return Err(Error::PreconditionViolated(format!(
                "γ̂ − 6 L̂_cross = {num} at grid angle {g}"
            )));
        }
        let den = profile.ell[i] + T::of(10.0) * lc + T::of(4.0) * beta;
        best = best.min(num / (two * den * den));
    }
    Ok(safety * best)
}

/// Realized versus predicted contraction for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionStep {
    pub t: usize,
    pub realized: f64,
    pub predicted: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub steps: Vec<ContractionStep>,
    pub passed: usize,
    pub pass_fraction: f64,
    pub angle_checked: usize,
    pub angle_violations: usize,
    pub max_angle_excess: f64,
}

/// Compares `dist²_{t+1}/dist²_t` with `1 − η(γ̂(φ_t) − 6L̂_cross)/2` for every
/// step that starts inside the `‖w*‖` ball. `γ̂(φ_t)` is read at the smallest
/// grid angle `≥ φ_t`; the tolerance is three standard errors of the
/// predicted factor. Also checks `θ(w_t, w*) ≤ φ_t + 1e−8` on every row.
pub fn check_contraction<T: Scalar>(traj: &Trajectory<T>, profile: &SmoothnessProfile<T>, multi_patch: bool) -> ContractionReport {
    let f = |x: T| x.to_f64_lossy();
    let (lc, lc_se) = if multi_patch { (f(profile.l_cross_hat), f(profile.l_cross_se)) } else { (0.0, 0.0) };
    let ws_norm = f(traj.w_star_norm);
    let mut steps = Vec::new();
    for pair in traj.rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (d0, d1) = (f(a.dist), f(b.dist));
        if !(d0 > 0.0 && d0 < ws_norm) {
            continue;
        }
        let i = profile.index_at_or_above(a.phi).unwrap_or(profile.phis.len() - 1);
        let eta = f(a.eta);
        let (g, g_se) = (f(profile.gamma[i]), f(profile.gamma_se[i]));
        let predicted = 1.0 - eta * (g - 6.0 * lc) / 2.0;
        let tol = 3.0 * eta * (g_se + 6.0 * lc_se) / 2.0;
        let realized = (d1 / d0).powi(2);
        steps.push(ContractionStep { t: a.t, realized, predicted, tol, pass: realized <= predicted + tol });
    }
    let passed = steps.iter().filter(|s| s.pass).count();
    let mut angle_checked = 0;
    let mut angle_violations = 0;
    let mut max_angle_excess = f64::NEG_INFINITY;
    for r in &traj.rows {
        if f(r.dist) < ws_norm {
            angle_checked += 1;
            let excess = f(r.theta) - f(r.phi);
            max_angle_excess = max_angle_excess.max(excess);
            if excess > 1e-8 {
                angle_violations += 1;
            }
        }
    }
    ContractionReport {
        pass_fraction: if steps.is_empty() { 1.0 } else { passed as f64 / steps.len() as f64 },
        steps,
        passed,
        angle_checked,
        angle_violations,
        max_angle_excess,
    }
}

/// Largest minibatch-gradient norm at `w0` over `n_pilot` fresh batches; an
/// empirical stand-in for the uniform gradient bound `B`.
pub fn estimate_gradient_bound<T: Scalar>(
    spec: &DistributionSpec<T>,
    w0: &Vector<T>,
    w_star: &Vector<T>,
    batch_size: usize,
    n_pilot: usize,
    seed: u64,
) -> Result<T> {
    if n_pilot == 0 || batch_size == 0 {
        return Err(domain("pilot needs at least one batch of at least one sample"));
    }
    let mut b = T::zero();
    for i in 0..n_pilot {
        let d = sample(spec, batch_size, derive_seed(seed, &[PATH_PILOT, i as u64]))?;
        b = b.max(batch_stats(d.view(), w0, w_star)?.mean_gradient().norm());
    }
    Ok(b)
}

/// SGD step size and iteration budget from the rate lemma's conditions with
/// measured constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdPlan {
    pub eps: f64,
    pub delta: f64,
    pub safety: f64,
    pub phi_star: f64,
    pub phi0: f64,
    pub phi1: f64,
    /// `γ̂(φ₁) − 6 L̂_cross`
    pub gamma1: f64,
    /// `L̂(0) + 10 L̂_cross + 4 β̂`, with `L̂(0)` read at the first grid angle.
    pub k_const: f64,
    pub b_hat: f64,
    pub eta: f64,
    pub iters: usize,
    /// Whether the stay-in-ball (martingale) condition also holds; it is
    /// reported, not enforced.
    pub escape_condition_ok: bool,
}

/// With `K = L(0) + 10L_cross + 4β` and `γ₁ = γ(φ₁) − 6L_cross`:
/// `η = safety · min(ε²γ₁‖w*‖²/(B² + ε²K²‖w*‖²), γ₁/K²)` and
/// `T = ⌈log(r₀²/(ε²‖w*‖²δ)) / (η(γ₁ − ηK²))⌉`.
pub fn sgd_plan<T: Scalar>(
    profile: &SmoothnessProfile<T>,
    w_star_norm: T,
    r0: T,
    b_hat: T,
    eps: f64,
    delta: f64,
    safety: f64,
) -> Result<SgdPlan> {
    let f = |x: T| x.to_f64_lossy();
    if !(eps > 0.0 && delta > 0.0 && delta < 1.0 && safety > 0.0 && safety <= 1.0) {
        return Err(domain("need eps > 0, delta in (0, 1), safety in (0, 1]"));
    }
    let ws = f(w_star_norm);
    let r0 = f(r0);
    let phi_star = f(profile
        .phi_star()
        .ok_or_else(|| Error::PreconditionViolated("no grid angle has γ̂ ≥ 6 L̂_cross".into()))?);
    let phi0 = (r0 / ws).min(1.0).asin();
    if phi0 >= phi_star {
        return Err(Error::PreconditionViolated(format!("φ₀ = {phi0} is not below φ* = {phi_star}")));
    }
    let phi1 = 0.5 * (phi_star + phi0);
    let lc = if profile.is_multi_patch() { f(profile.l_cross_hat) } else { 0.0 };
    let i1 = profile.index_at_or_above(T::of(phi1)).unwrap_or(profile.phis.len() - 1);
    let gamma1 = f(profile.gamma[i1]) - 6.0 * lc;
    if gamma1 <= 0.0 {
        return Err(Error::PreconditionViolated(format!("γ̂(φ₁) − 6 L̂_cross = {gamma1}")));
    }
    let k = f(profile.ell[0]) + 10.0 * lc + 4.0 * f(profile.beta_hat);
    let b = f(b_hat);
    let e2w2 = eps * eps * ws * ws;
    let eta = safety * (e2w2 * gamma1 / (b * b + e2w2 * k * k)).min(gamma1 / (k * k));
    let alpha = gamma1 - eta * k * k;
    let iters = ((r0 * r0 / (e2w2 * delta)).ln().max(0.0) / (eta * alpha)).ceil() as usize;
    let tf = iters.max(1) as f64;
    let r1 = ws * phi1.sin();
    let escape_lhs = (r1 * r1 - r0 * r0).powi(2)
        / (tf * (1.0 + 2.0 * eta * (gamma1 - eta * k) * tf) * (2.0 * eta * b * k * r1 + eta * eta * b * b).powi(2));
    Ok(SgdPlan {
        eps,
        delta,
        safety,
        phi_star,
        phi0,
        phi1,
        gamma1,
        k_const: k,
        b_hat: b,
        eta,
        iters: iters.max(1),
        escape_condition_ok: escape_lhs >= (tf / delta).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothness::{grid, profile};

    fn flat_profile(c: f64, n: usize) -> SmoothnessProfile {
        SmoothnessProfile {
            phis: grid(0.1, 1.5, n),
            gamma: vec![c; n],
            gamma_se: vec![0.0; n],
            ell: vec![c; n],
            ell_se: vec![0.0; n],
            ell_minus: vec![0.0; n],
            ell_minus_se: vec![0.0; n],
            l_cross_ratio: vec![0.0; n],
            l_cross_ratio_se: vec![0.0; n],
            beta_hat: 0.0,
            beta_se: 0.0,
            l_cross_hat: 0.0,
            l_cross_se: 0.0,
            n_w: 1,
            n_samples: 1,
            p: 2,
            k: 1,
        }
    }

    fn config(schedule: Schedule) -> RunConfig {
        RunConfig {
            dist: DistributionSpec::gaussian(3, 1),
            w_star: Vector::from_slice(&[1.0, -0.5, 0.25]).unwrap(),
            init: Init::Offset { ratio: 0.5 },
            schedule,
            mode: Mode::PopulationGd { n_mc: 4000, pinned: true },
            max_iters: 200,
            stop_tol: 1e-3,
            seed: 7,
        }
    }

    #[test]
    fn step_bound_examples() {
        let p = flat_profile(0.4, 5);
        let b = step_size_bound(&p, 1.0, false, 1.0).unwrap();
        assert!((b - 1.0 / 0.8).abs() < 1e-12);
        assert!(step_size_bound(&p, 0.05, false, 1.0).is_err());
        let mut m = p.clone();
        m.k = 3;
        m.l_cross_hat = 0.1;
        assert!(matches!(step_size_bound(&m, 1.0, true, 1.0), Err(Error::PreconditionViolated(_))));
        // decreasing γ, growing L: the last admissible grid point binds
        let mut d = p.clone();
        d.gamma = vec![0.5, 0.4, 0.3, 0.2, 0.1];
        d.ell = vec![0.5, 0.6, 0.7, 0.8, 0.9];
        let at = |i: usize| d.gamma[i] / (2.0 * d.ell[i] * d.ell[i]);
        assert_eq!(step_size_bound(&d, d.phis[3], false, 1.0).unwrap(), at(3));
        assert_eq!(step_size_bound(&d, 10.0, false, 0.5).unwrap(), 0.5 * at(4));
    }

    #[test]
    fn teacher_start_stops_immediately() {
        let mut c = config(Schedule::Constant { eta: 0.5 });
        c.init = Init::Point { w0: c.w_star.clone() };
        let t = run_gd(&c).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].dist, 0.0);
        assert_eq!(t.stop, StopReason::Converged);
    }

    #[test]
    fn zero_step_freezes_the_iterate() {
        let mut c = config(Schedule::Constant { eta: 0.0 });
        c.max_iters = 5;
        let t = run_gd(&c).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert!(t.rows.iter().all(|r| r.dist == t.rows[0].dist));
        let rep = check_contraction(&t, &flat_profile(0.4, 5), false);
        assert_eq!(rep.pass_fraction, 1.0);
        c.mode = Mode::Sgd { batch_size: 8 };
        let s = run_sgd(&c).unwrap();
        assert_eq!(s.final_w, c.initial_point().unwrap());
    }

    #[test]
    fn zero_start_is_undefined() {
        let mut c = config(Schedule::Constant { eta: 0.1 });
        c.init = Init::Point { w0: Vector::zeros(3) };
        assert!(matches!(run_gd(&c), Err(Error::UndefinedGradient { step: 0 })));
    }

    #[test]
    fn gd_converges_and_is_deterministic() {
        let c = config(Schedule::Constant { eta: 1.0 });
        let a = run_gd(&c).unwrap();
        assert_eq!(a.stop, StopReason::Converged);
        assert!(a.final_relative_error() <= 1e-3);
        assert_eq!(a, run_gd(&c).unwrap());
        for w in a.rows.windows(2) {
            assert!(w[1].dist < w[0].dist);
        }
    }

    #[test]
    fn full_window_sgd_equals_gd() {
        let c = config(Schedule::Constant { eta: 0.8 });
        let data = sample(&c.dist, 3000, 1).unwrap();
        let gd = run_gd_on(&data, &c).unwrap();
        let mut s = c.clone();
        s.mode = Mode::Sgd { batch_size: 3000 };
        assert_eq!(run_sgd_on(&data, &s).unwrap(), gd);
    }

    #[test]
    fn two_stage_latches() {
        let mut c = config(Schedule::TwoStage { eta_small: 0.1, eta_large: 1.0, switch_angle: 0.2 });
        c.max_iters = 400;
        let t = run_gd(&c).unwrap();
        let first = t.rows.iter().position(|r| r.eta == 1.0).unwrap();
        assert!(t.rows[first].phi <= 0.2);
        assert!(t.rows[..first].iter().all(|r| r.eta == 0.1));
        assert!(t.rows[first..].iter().all(|r| r.eta == 1.0));
        assert!(Schedule::TwoStage { eta_small: 0.1, eta_large: 1.0, switch_angle: 2.0 }.validate().is_err());
    }

    #[test]
    fn adaptive_schedule_is_nondecreasing() {
        let c0 = config(Schedule::Constant { eta: 1.0 });
        let data = sample(&c0.dist, 20_000, 3).unwrap();
        let prof = profile(data.view(), &c0.w_star, &grid(0.05, 3.0, 12), 4, 1).unwrap();
        let mut c = config(Schedule::adaptive(prof.clone()));
        c.max_iters = 5000;
        let t = run_gd(&c).unwrap();
        assert_eq!(t.stop, StopReason::Converged);
        for w in t.rows.windows(2) {
            assert!(w[1].eta >= w[0].eta);
        }
        let rep = check_contraction(&t, &prof, false);
        assert!(rep.pass_fraction >= 0.9, "{}", rep.pass_fraction);
        assert_eq!(rep.angle_violations, 0);
    }

    #[test]
    fn sgd_plan_is_consistent() {
        let mut p = flat_profile(0.4, 15);
        p.beta_hat = 0.3;
        let plan = sgd_plan(&p, 1.0, 0.5, 1.0, 0.05, 0.1, 0.5).unwrap();
        let k = 0.4 + 1.2;
        assert!((plan.k_const - k).abs() < 1e-12);
        assert!(plan.eta < plan.gamma1 / (k * k));
        // noise-floor and contraction conditions hold at the chosen (η, T)
        assert!(0.05f64.powi(2) * (plan.gamma1 - plan.eta * k * k) >= plan.eta * 1.0);
        let lhs = plan.eta * plan.iters as f64 * (plan.gamma1 - plan.eta * k * k);
        assert!(lhs >= (0.25_f64 / (0.0025 * 0.1)).ln());
        assert!(sgd_plan(&p, 1.0, 1.0, 1.0, 0.05, 0.1, 0.5).is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let mut c = config(Schedule::adaptive(flat_profile(0.3, 3)));
        c.mode = Mode::Sgd { batch_size: 32 };
        let s = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}

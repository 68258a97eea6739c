//! Experiment drivers: each takes a validated section and the top-level
//! seed, runs it, and returns a serializable outcome.
//!
//! Seed derivation from the top-level seed `s`: run seeds `(s, 0)`, profile
//! data `(s, 1, 0)` and probe directions `(s, 1, 1)`, init trials
//! `(s, 2, i, j)`, interpolation baseline `(s, 3)` and evaluation data
//! `(s, 4)`, verification check `c` from `(s, 5, c)`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Result};
use rayon::prelude::*;
use relu_lab::distributions::{sample, DistributionKind, DistributionSpec};
use relu_lab::init::{corollary_alpha, success_experiment, CorollaryInit, InitSpec, SuccessReport};
use relu_lab::model::mean_loss;
use relu_lab::optimize::{
    check_contraction, estimate_gradient_bound, run_gd, run_sgd, sgd_plan, ContractionReport, Mode, RunConfig,
    Schedule, SgdPlan, StopReason,
};
use relu_lab::regions::{estimate_moments_batched, lemma_decomposition, population_gradient, SE_BATCHES};
use relu_lab::rng::{derive_seed, gaussian_vector, stream, unit_sphere};
use relu_lab::smoothness::{profile, verify_beta_bounds, BetaReport};
use relu_lab::{RealDataset, RealProfile, RealRunConfig, RealTrajectory, RealVector};
use serde::{Deserialize, Serialize};

use crate::config::{
    teacher, CheckSpec, Experiment, ExperimentConfig, GdSection, InitSection, InterpolateSection, ProfileParams,
    ProfileSection, ScheduleSpec, SgdScheduleSpec, SgdSection, VerifySection,
};
use crate::io;

const TAG_RUN: u64 = 0;
const TAG_PROFILE: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_BASELINE: u64 = 3;
const TAG_EVAL: u64 = 4;
const TAG_CHECK: u64 = 5;

/// Profile on a fresh sample of `params.n_samples` draws.
pub fn profile_for(dist: &DistributionSpec, w_star: &RealVector, params: &ProfileParams, seed: u64) -> Result<RealProfile> {
    let data = sample(dist, params.n_samples, derive_seed(seed, &[TAG_PROFILE, 0]))?;
    profile_on(&data, w_star, &params.grid.angles(), params.n_w, seed)
}

/// Probe directions depend only on `seed`, so two datasets profiled with
/// the same seed and grid are compared on identical students.
pub fn profile_on(data: &RealDataset, w_star: &RealVector, phis: &[f64], n_w: usize, seed: u64) -> Result<RealProfile> {
    Ok(profile(data.view(), w_star, phis, n_w, derive_seed(seed, &[TAG_PROFILE, 1]))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionSummary {
    pub steps: usize,
    pub passed: usize,
    pub pass_fraction: f64,
    pub angle_checked: usize,
    pub angle_violations: usize,
    pub max_angle_excess: f64,
}

impl From<&ContractionReport> for ContractionSummary {
    fn from(r: &ContractionReport) -> Self {
        Self {
            steps: r.steps.len(),
            passed: r.passed,
            pass_fraction: r.pass_fraction,
            angle_checked: r.angle_checked,
            angle_violations: r.angle_violations,
            max_angle_excess: r.max_angle_excess,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stop: StopReason,
    pub iterations: usize,
    pub final_dist: f64,
    pub final_relative_error: f64,
    pub final_w: Vec<f64>,
    pub max_sample_grad_norm: f64,
}

impl From<&RealTrajectory> for RunSummary {
    fn from(t: &RealTrajectory) -> Self {
        Self {
            stop: t.stop,
            iterations: t.rows.last().map_or(0, |r| r.t),
            final_dist: t.final_dist(),
            final_relative_error: t.final_relative_error(),
            final_w: t.final_w.clone().into_vec(),
            max_sample_grad_norm: t.max_sample_grad_norm,
        }
    }
}

pub struct GdOutcome {
    pub run_config: RealRunConfig,
    pub trajectory: RealTrajectory,
    pub profile: Option<RealProfile>,
    pub contraction: Option<ContractionReport>,
}

/// Core run configuration for a GD section; estimates the profile first
/// when the schedule is adaptive.
pub fn gd_config(s: &GdSection, seed: u64) -> Result<(RealRunConfig, Option<RealProfile>)> {
    let w_star = teacher(s.dist.p, &s.w_star)?;
    let (schedule, prof) = match &s.schedule {
        ScheduleSpec::Constant { eta } => (Schedule::Constant { eta: *eta }, None),
        ScheduleSpec::TwoStage { eta_small, eta_large, switch_angle } => (
            Schedule::TwoStage { eta_small: *eta_small, eta_large: *eta_large, switch_angle: *switch_angle },
            None,
        ),
        ScheduleSpec::Adaptive { safety, profile } => {
            let p = profile_for(&s.dist, &w_star, profile, seed)?;
            (Schedule::AdaptiveTheory { profile: Box::new(p.clone()), safety: *safety }, Some(p))
        }
    };
    let cfg = RunConfig {
        dist: s.dist.clone(),
        w_star,
        init: s.init.clone(),
        schedule,
        mode: Mode::PopulationGd { n_mc: s.n_mc, pinned: s.pinned },
        max_iters: s.max_iters,
        stop_tol: s.stop_tol,
        seed: derive_seed(seed, &[TAG_RUN]),
    };
    cfg.validate()?;
    Ok((cfg, prof))
}

pub fn run_gd_section(s: &GdSection, seed: u64) -> Result<GdOutcome> {
    let (run_config, prof) = gd_config(s, seed)?;
    let trajectory = run_gd(&run_config)?;
    let contraction = prof.as_ref().map(|p| check_contraction(&trajectory, p, p.is_multi_patch()));
    Ok(GdOutcome { run_config, trajectory, profile: prof, contraction })
}

pub struct SgdOutcome {
    pub run_config: RealRunConfig,
    pub trajectory: RealTrajectory,
    pub profile: Option<RealProfile>,
    pub plan: Option<SgdPlan>,
    /// Whether the last iterate is within `2ε‖w*‖` of the teacher.
    pub within_target: Option<bool>,
}

pub fn run_sgd_section(s: &SgdSection, seed: u64) -> Result<SgdOutcome> {
    let w_star = teacher(s.dist.p, &s.w_star)?;
    let mut cfg = RunConfig {
        dist: s.dist.clone(),
        w_star: w_star.clone(),
        init: s.init.clone(),
        schedule: Schedule::Constant { eta: 0.0 },
        mode: Mode::Sgd { batch_size: s.batch_size },
        max_iters: 1,
        stop_tol: s.stop_tol,
        seed: derive_seed(seed, &[TAG_RUN]),
    };
    let (prof, plan) = match &s.schedule {
        SgdScheduleSpec::Constant { eta, max_iters } => {
            cfg.schedule = Schedule::Constant { eta: *eta };
            cfg.max_iters = *max_iters;
            (None, None)
        }
        SgdScheduleSpec::Theory { eps, delta, safety, n_pilot, profile } => {
            let prof = profile_for(&s.dist, &w_star, profile, seed)?;
            let w0 = cfg.initial_point()?;
            let b_hat = estimate_gradient_bound(&s.dist, &w0, &w_star, s.batch_size, *n_pilot, cfg.seed)?;
            let plan = sgd_plan(&prof, w_star.norm(), w0.distance(&w_star), b_hat, *eps, *delta, *safety)?;
            cfg.schedule = Schedule::Constant { eta: plan.eta };
            cfg.max_iters = plan.iters;
            (Some(prof), Some(plan))
        }
    };
    let trajectory = run_sgd(&cfg)?;
    let within_target = plan.as_ref().map(|p| trajectory.final_dist() <= 2.0 * p.eps * w_star.norm());
    Ok(SgdOutcome { run_config: cfg, trajectory, profile: prof, plan, within_target })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileOutcome {
    pub beta: BetaReport,
    pub beta_hat: f64,
    pub beta_se: f64,
    pub l_cross_hat: f64,
    pub l_cross_se: f64,
    pub phi_star: Option<f64>,
}

pub fn run_profile_section(s: &ProfileSection, seed: u64) -> Result<(RealProfile, ProfileOutcome)> {
    let w_star = teacher(s.dist.p, &s.w_star)?;
    let p = profile_for(&s.dist, &w_star, &s.params, seed)?;
    let out = ProfileOutcome {
        beta: verify_beta_bounds(&p, &s.dist.kind),
        beta_hat: p.beta_hat,
        beta_se: p.beta_se,
        l_cross_hat: p.l_cross_hat,
        l_cross_se: p.l_cross_se,
        phi_star: p.phi_star(),
    };
    Ok((p, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryOutcome {
    pub init: CorollaryInit,
    pub report: SuccessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitOutcome {
    pub reports: Vec<SuccessReport>,
    pub corollary: Option<CorollaryOutcome>,
}

pub fn run_init_section(s: &InitSection, seed: u64) -> Result<InitOutcome> {
    let mut reports = Vec::new();
    for (i, &p) in s.ps.iter().enumerate() {
        for (j, &alpha) in s.alphas.iter().enumerate() {
            let spec = InitSpec { p, alpha, trials: s.trials, seed: derive_seed(seed, &[TAG_INIT, i as u64, j as u64]) };
            if s.admissible_only && !spec.hypothesis_ok() {
                continue;
            }
            reports.push(success_experiment(&spec, &teacher(p, &None)?)?);
        }
    }
    let corollary = match &s.corollary {
        None => None,
        Some(c) => {
            let w_star = teacher(c.dist.p, &c.w_star)?;
            let prof = profile_for(&c.dist, &w_star, &c.params, seed)?;
            let init = corollary_alpha(&prof)?;
            let spec = InitSpec { p: c.dist.p, alpha: init.alpha, trials: s.trials, seed: derive_seed(seed, &[TAG_INIT, u64::MAX]) };
            let report = success_experiment(&spec, &w_star)?;
            Some(CorollaryOutcome { init, report })
        }
    };
    Ok(InitOutcome { reports, corollary })
}

/// Mean loss of `αw + (1 − α)w*` for `α` on a uniform grid over `[0, 1]`.
pub fn cmd_interpolate(w: &RealVector, w_star: &RealVector, data: &RealDataset, grid_size: usize) -> Result<Vec<(f64, f64)>> {
    ensure!(grid_size >= 2, "grid_size must be at least 2, got {grid_size}");
    ensure!(w.len() == w_star.len() && w.len() == data.p(), "dimension mismatch");
    (0..grid_size)
        .map(|i| {
            let a = i as f64 / (grid_size - 1) as f64;
            let wi = w.scaled(a).add(&w_star.scaled(1.0 - a));
            Ok((a, mean_loss(data.view(), &wi, w_star)?))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolateOutcome {
    pub w: Vec<f64>,
    pub training: Option<RunSummary>,
    pub curve: Vec<(f64, f64)>,
    pub max_loss: f64,
    /// Mean loss at a random unit student on the same evaluation data.
    pub baseline_loss: f64,
    pub ratio: f64,
}

pub fn run_interpolate_section(s: &InterpolateSection, seed: u64) -> Result<InterpolateOutcome> {
    let w_star = teacher(s.gd.dist.p, &s.gd.w_star)?;
    let (w, training) = match &s.w {
        Some(w) => (RealVector::new(w.clone())?, None),
        None => {
            let out = run_gd_section(&s.gd, seed)?;
            (out.trajectory.final_w.clone(), Some(RunSummary::from(&out.trajectory)))
        }
    };
    let data = sample(&s.gd.dist, s.n_eval, derive_seed(seed, &[TAG_EVAL]))?;
    let curve = cmd_interpolate(&w, &w_star, &data, s.grid_size)?;
    let u: RealVector = unit_sphere(&mut stream(seed, &[TAG_BASELINE]), s.gd.dist.p);
    let baseline_loss = mean_loss(data.view(), &u, &w_star)?;
    let max_loss = curve.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(InterpolateOutcome { w: w.into_vec(), training, curve, max_loss, baseline_loss, ratio: max_loss / baseline_loss })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtLeast,
    AtMost,
}

/// One verified inequality. `pass` is `measured ≥ bound − tolerance` or
/// `measured ≤ bound + tolerance`; `None` when no bound applies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub relation: Option<Relation>,
    pub measured: Option<f64>,
    pub bound: Option<f64>,
    pub tolerance: Option<f64>,
    pub n_samples: usize,
    pub pass: Option<bool>,
    pub error: Option<String>,
}

impl CheckResult {
    pub fn compare(name: &str, measured: f64, relation: Relation, bound: f64, tolerance: f64, n_samples: usize) -> Self {
        let pass = match relation {
            Relation::AtLeast => measured >= bound - tolerance,
            Relation::AtMost => measured <= bound + tolerance,
        };
        Self {
            name: name.to_owned(),
            relation: Some(relation),
            measured: Some(measured),
            bound: Some(bound),
            tolerance: Some(tolerance),
            n_samples,
            pass: Some(pass),
            error: None,
        }
    }

    pub fn unbounded(name: &str, measured: f64, n_samples: usize) -> Self {
        Self {
            name: name.to_owned(),
            relation: None,
            measured: Some(measured),
            bound: None,
            tolerance: None,
            n_samples,
            pass: None,
            error: None,
        }
    }

    pub fn errored(name: &str, error: String) -> Self {
        Self {
            name: name.to_owned(),
            relation: None,
            measured: None,
            bound: None,
            tolerance: None,
            n_samples: 0,
            pass: Some(false),
            error: Some(error),
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.pass {
            Some(true) => "PASS",
            Some(false) if self.error.is_some() => "ERROR",
            Some(false) => "FAIL",
            None => "INFO",
        };
        if let Some(e) = &self.error {
            return format!("[{tag}] {}: {e}", self.name);
        }
        let rel = match self.relation {
            Some(Relation::AtLeast) => ">=",
            Some(Relation::AtMost) => "<=",
            None => "",
        };
        match (self.measured, self.bound, self.tolerance) {
            (Some(m), Some(b), Some(t)) => {
                format!("[{tag}] {}: {m:.6e} {rel} {b:.6e} (tol {t:.3e}, n = {})", self.name, self.n_samples)
            }
            (Some(m), _, _) => format!("[{tag}] {}: {m:.6e} (n = {})", self.name, self.n_samples),
            _ => format!("[{tag}] {}", self.name),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0 && self.errors == 0
    }
}

fn check_name(c: &CheckSpec) -> &'static str {
    match c {
        CheckSpec::Lemma { .. } => "lemma",
        CheckSpec::Beta { .. } => "beta",
        CheckSpec::Clustered { .. } => "clustered",
        CheckSpec::DuplicatePatches { .. } => "duplicate_patches",
        CheckSpec::Contraction { .. } => "contraction",
    }
}

/// Runs every check; a failing or panicking check is recorded and the
/// remaining checks still run.
pub fn cmd_verify(s: &VerifySection, seed: u64) -> VerifyReport {
    let mut checks = Vec::new();
    for (c, spec) in s.checks.iter().enumerate() {
        let cs = derive_seed(seed, &[TAG_CHECK, c as u64]);
        let name = format!("{}[{c}]", check_name(spec));
        let outcome = catch_unwind(AssertUnwindSafe(|| run_check(spec, cs)));
        match outcome {
            Ok(Ok(results)) => checks.extend(results.into_iter().map(|mut r| {
                r.name = format!("{name}.{}", r.name);
                r
            })),
            Ok(Err(e)) => checks.push(CheckResult::errored(&name, format!("{e:#}"))),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                checks.push(CheckResult::errored(&name, format!("panicked: {msg}")));
            }
        }
    }
    let errors = checks.iter().filter(|c| c.error.is_some()).count();
    let passed = checks.iter().filter(|c| c.pass == Some(true)).count();
    let failed = checks.iter().filter(|c| c.pass == Some(false) && c.error.is_none()).count();
    VerifyReport { checks, passed, failed, errors }
}

pub fn run_check(spec: &CheckSpec, seed: u64) -> Result<Vec<CheckResult>> {
    match spec {
        CheckSpec::Lemma { dists, n_samples, configs } => lemma_check(dists, *n_samples, *configs, seed),
        CheckSpec::Beta { dist, params } => {
            let p = profile_for(dist, &teacher(dist.p, &None)?, params, seed)?;
            let r = verify_beta_bounds(&p, &dist.kind);
            let n = params.n_samples;
            let mut out = Vec::new();
            if let Some(l) = r.lower {
                out.push(CheckResult::compare("converted_beta_lower", r.converted, Relation::AtLeast, l, 0.0, n));
            }
            if let Some(u) = r.upper {
                out.push(CheckResult::compare("converted_beta_upper", r.converted, Relation::AtMost, u, 0.0, n));
            }
            if out.is_empty() {
                out.push(CheckResult::unbounded("converted_beta", r.converted, n));
            }
            Ok(out)
        }
        CheckSpec::Clustered { dist, w_star, phi0, params } => clustered_check(dist, w_star, *phi0, params, seed),
        CheckSpec::DuplicatePatches { dist, k, params } => {
            let w_star = teacher(dist.p, &None)?;
            let base = sample(dist, params.n_samples, derive_seed(seed, &[TAG_PROFILE, 0]))?;
            let p = profile_on(&base.duplicated(*k), &w_star, &params.grid.angles(), params.n_w, seed)?;
            Ok(vec![CheckResult::compare(
                "l_cross",
                p.l_cross_hat,
                Relation::AtMost,
                0.0,
                3.0 * p.l_cross_se,
                params.n_samples,
            )])
        }
        CheckSpec::Contraction { gd, min_pass_fraction } => {
            let out = run_gd_section(gd, seed)?;
            let r = out.contraction.ok_or_else(|| anyhow!("contraction check needs an adaptive schedule"))?;
            Ok(vec![
                CheckResult::compare("step_pass_fraction", r.pass_fraction, Relation::AtLeast, *min_pass_fraction, 0.0, gd.n_mc),
                CheckResult::compare("angle_violations", r.angle_violations as f64, Relation::AtMost, 0.0, 0.0, gd.n_mc),
                CheckResult::compare(
                    "final_relative_error",
                    out.trajectory.final_relative_error(),
                    Relation::AtMost,
                    gd.stop_tol,
                    0.0,
                    gd.n_mc,
                ),
            ])
        }
    }
}

/// Per-config values of the two decomposition terms with their standard
/// errors, and the gap to `⟨ĝ, w − w*⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSample {
    pub term_pp: f64,
    pub term_pp_se: f64,
    pub term_pn: f64,
    pub term_pn_se: f64,
    pub identity_gap: f64,
}

/// Config `c` draws `w*` and `w` as Gaussian vectors from stream
/// `(seed, c, 0)` and the data from `(seed, c, 1)`.
pub fn lemma_samples(dists: &[DistributionSpec], n_samples: usize, configs: usize, seed: u64) -> Result<Vec<LemmaSample>> {
    ensure!(!dists.is_empty(), "no distributions");
    (0..configs)
        .into_par_iter()
        .map(|c| {
            let dist = &dists[c % dists.len()];
            let p = dist.p;
            let mut rng = stream(seed, &[c as u64, 0]);
            let w_star: RealVector = gaussian_vector(&mut rng, p);
            let w: RealVector = gaussian_vector(&mut rng, p);
            let data = sample(dist, n_samples, derive_seed(seed, &[c as u64, 1]))?;
            let mb = estimate_moments_batched(data.view(), &w, &w_star, SE_BATCHES)?;
            let (t1, t2) = lemma_decomposition(&mb.total, &w, &w_star)?;
            let se1 = mb.se(|m| lemma_decomposition(m, &w, &w_star).map(|t| t.0))?;
            let se2 = mb.se(|m| lemma_decomposition(m, &w, &w_star).map(|t| t.1))?;
            let g = population_gradient(&mb.total, &w, &w_star)?;
            let gap = (t1 + t2 - g.dot(&w.sub(&w_star))).abs();
            Ok(LemmaSample { term_pp: t1, term_pp_se: se1, term_pn: t2, term_pn_se: se2, identity_gap: gap })
        })
        .collect()
}

fn lemma_check(dists: &[DistributionSpec], n_samples: usize, configs: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let s = lemma_samples(dists, n_samples, configs, seed)?;
    // the config with the least slack decides each inequality
    let worst = |f: fn(&LemmaSample) -> (f64, f64)| {
        s.iter().map(f).min_by(|a, b| (a.0 + 3.0 * a.1).total_cmp(&(b.0 + 3.0 * b.1))).unwrap_or((f64::NAN, 0.0))
    };
    let (pp, pp_se) = worst(|x| (x.term_pp, x.term_pp_se));
    let (pn, pn_se) = worst(|x| (x.term_pn, x.term_pn_se));
    let gap = s.iter().map(|x| x.identity_gap).fold(0.0, f64::max);
    Ok(vec![
        CheckResult::compare("term_pp", pp, Relation::AtLeast, 0.0, 3.0 * pp_se, n_samples),
        CheckResult::compare("term_pn", pn, Relation::AtLeast, 0.0, 3.0 * pn_se, n_samples),
        CheckResult::compare("identity_gap", gap, Relation::AtMost, 1e-10, 0.0, n_samples),
    ])
}

/// Smoothness of clustered patches against their patch averages at `phi0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteredMeasure {
    pub phi0: f64,
    pub rho: f64,
    pub mu: f64,
    pub gamma: f64,
    pub gamma_se: f64,
    pub gamma_avg: f64,
    pub gamma_avg_se: f64,
    pub l_cross: f64,
    pub l_cross_se: f64,
    pub n_samples: usize,
}

impl ClusteredMeasure {
    /// `γ̂(φ₀) ≥ γ̂_avg(φ₀) − 4(1 − cos ρ)` and `L̂_cross ≤ 3μ`, each with a
    /// three-standard-error tolerance.
    pub fn checks(&self) -> Vec<CheckResult> {
        let se = (self.gamma_se.powi(2) + self.gamma_avg_se.powi(2)).sqrt();
        vec![
            CheckResult::compare(
                "gamma_vs_average",
                self.gamma,
                Relation::AtLeast,
                self.gamma_avg - 4.0 * (1.0 - self.rho.cos()),
                3.0 * se,
                self.n_samples,
            ),
            CheckResult::compare("l_cross", self.l_cross, Relation::AtMost, 3.0 * self.mu, 3.0 * self.l_cross_se, self.n_samples),
        ]
    }
}

/// Inserts `phi` into a sorted grid unless already present.
pub fn grid_with(phis: &[f64], phi: f64) -> Vec<f64> {
    let mut g = phis.to_vec();
    if !g.contains(&phi) {
        g.push(phi);
        g.sort_by(f64::total_cmp);
    }
    g
}

/// Profiles clustered data and its patch averages with the same students.
pub fn clustered_measure(
    data: &RealDataset,
    rho: f64,
    mu: f64,
    w_star: &RealVector,
    phi0: f64,
    params: &ProfileParams,
    seed: u64,
) -> Result<ClusteredMeasure> {
    let phis = grid_with(&params.grid.angles(), phi0);
    let i = phis.iter().position(|&x| x == phi0).expect("inserted");
    let full = profile_on(data, w_star, &phis, params.n_w, seed)?;
    let avg = profile_on(&data.averaged(), w_star, &phis, params.n_w, seed)?;
    Ok(ClusteredMeasure {
        phi0,
        rho,
        mu,
        gamma: full.gamma[i],
        gamma_se: full.gamma_se[i],
        gamma_avg: avg.gamma[i],
        gamma_avg_se: avg.gamma_se[i],
        l_cross: full.l_cross_hat,
        l_cross_se: full.l_cross_se,
        n_samples: data.len(),
    })
}

fn clustered_check(
    dist: &DistributionSpec,
    w_star: &Option<Vec<f64>>,
    phi0: f64,
    params: &ProfileParams,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let DistributionKind::ClusteredPatches { rho, mu, .. } = dist.kind else {
        bail!("clustered check needs a clustered_patches distribution");
    };
    ensure!(phi0 > 0.0 && phi0 < PI, "phi0 must lie in (0, π)");
    let w_star = teacher(dist.p, w_star)?;
    let data = sample(dist, params.n_samples, derive_seed(seed, &[TAG_PROFILE, 0]))?;
    Ok(clustered_measure(&data, rho, mu, &w_star, phi0, params, seed)?.checks())
}

#[derive(Serialize)]
struct Metadata<'a, R: Serialize> {
    experiment: &'static str,
    config: &'a ExperimentConfig,
    result: R,
}

fn write_metadata<R: Serialize>(dir: &Path, name: &'static str, cfg: &ExperimentConfig, result: R) -> Result<()> {
    io::write_json(&dir.join("metadata.json"), &Metadata { experiment: name, config: cfg, result })
}

#[derive(Serialize)]
struct GdResult<'a> {
    summary: RunSummary,
    contraction: Option<ContractionSummary>,
    run_config: &'a RealRunConfig,
}

#[derive(Serialize)]
struct SgdResult<'a> {
    summary: RunSummary,
    plan: &'a Option<SgdPlan>,
    within_target: Option<bool>,
    run_config: &'a RealRunConfig,
}

/// Outcome line printed by the CLI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub out: String,
    pub ok: bool,
    pub lines: Vec<String>,
}

/// Runs the config's experiment and writes its CSV and JSON outputs to
/// the output directory. `ok` is false when a verification check fails.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir)?;
    let seed = cfg.seed;
    let exp = cfg.experiment()?;
    let mut lines = Vec::new();
    let mut ok = true;
    match exp {
        Experiment::Gd(s) => {
            let out = run_gd_section(s, seed)?;
            io::write_csv(&dir.join("trajectory.csv"), io::TRAJECTORY_HEADER, &io::trajectory_rows(&out.trajectory))?;
            if let Some(p) = &out.profile {
                io::write_csv(&dir.join("profile.csv"), io::PROFILE_HEADER, &io::profile_rows(p))?;
            }
            let summary = RunSummary::from(&out.trajectory);
            lines.push(format!(
                "gd: {:?} after {} iterations, relative error {:.3e}",
                summary.stop, summary.iterations, summary.final_relative_error
            ));
            let contraction = out.contraction.as_ref().map(ContractionSummary::from);
            if let Some(c) = &contraction {
                lines.push(format!("contraction: {}/{} steps pass, {} angle violations", c.passed, c.steps, c.angle_violations));
            }
            write_metadata(&dir, exp.name(), cfg, GdResult { summary, contraction, run_config: &out.run_config })?;
        }
        Experiment::Sgd(s) => {
            let out = run_sgd_section(s, seed)?;
            io::write_csv(&dir.join("trajectory.csv"), io::TRAJECTORY_HEADER, &io::trajectory_rows(&out.trajectory))?;
            if let Some(p) = &out.profile {
                io::write_csv(&dir.join("profile.csv"), io::PROFILE_HEADER, &io::profile_rows(p))?;
            }
            let summary = RunSummary::from(&out.trajectory);
            if let Some(p) = &out.plan {
                lines.push(format!("plan: eta {:.4e}, {} iterations, B {:.4}", p.eta, p.iters, p.b_hat));
            }
            lines.push(format!(
                "sgd: {} iterations, relative error {:.3e}",
                summary.iterations, summary.final_relative_error
            ));
            write_metadata(
                &dir,
                exp.name(),
                cfg,
                SgdResult { summary, plan: &out.plan, within_target: out.within_target, run_config: &out.run_config },
            )?;
        }
        Experiment::Profile(s) => {
            let (p, out) = run_profile_section(s, seed)?;
            io::write_csv(&dir.join("profile.csv"), io::PROFILE_HEADER, &io::profile_rows(&p))?;
            lines.push(format!(
                "profile: beta {:.4e} (converted {:.4}), l_cross {:.4e}, phi* {:?}",
                out.beta_hat, out.beta.converted, out.l_cross_hat, out.phi_star
            ));
            write_metadata(&dir, exp.name(), cfg, &out)?;
        }
        Experiment::Init(s) => {
            let out = run_init_section(s, seed)?;
            let mut rows: Vec<_> = out.reports.iter().map(io::init_row).collect();
            if let Some(c) = &out.corollary {
                rows.push(io::init_row(&c.report));
                lines.push(format!(
                    "corollary: phi* {:.4}, alpha {:.4}, frequency {:.4}",
                    c.init.phi_star, c.init.alpha, c.report.frequency
                ));
            }
            io::write_csv(&dir.join("init.csv"), io::INIT_HEADER, &rows)?;
            lines.push(format!("init: {} sweep points", out.reports.len()));
            write_metadata(&dir, exp.name(), cfg, &out)?;
        }
        Experiment::Interpolate(s) => {
            let out = run_interpolate_section(s, seed)?;
            let rows: Vec<_> = out.curve.iter().map(|&(alpha, loss)| io::CurveCsvRow { alpha, loss }).collect();
            io::write_csv(&dir.join("interpolation.csv"), io::CURVE_HEADER, &rows)?;
            lines.push(format!(
                "interpolate: max loss {:.3e}, baseline {:.3e}, ratio {:.3e}",
                out.max_loss, out.baseline_loss, out.ratio
            ));
            write_metadata(&dir, exp.name(), cfg, &out)?;
        }
        Experiment::Verify(s) => {
            let report = cmd_verify(s, seed);
            lines.extend(report.checks.iter().map(CheckResult::line));
            ok = report.all_passed();
            io::write_json(&dir.join("verify.json"), &report)?;
            write_metadata(&dir, exp.name(), cfg, &report)?;
        }
    }
    Ok(RunReport { experiment: exp.name().to_owned(), out: dir.display().to_string(), ok, lines })
}

/// Loads, validates and runs a config file.
pub fn cmd_run(config_path: &Path) -> Result<RunReport> {
    run_experiment(&ExperimentConfig::load(config_path)?)
}

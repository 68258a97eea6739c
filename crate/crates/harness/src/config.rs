//! Experiment configuration: one JSON document naming exactly one
//! experiment section.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use relu_lab::distributions::DistributionSpec;
use relu_lab::optimize::{Init, DEFAULT_N_MC, DEFAULT_SAFETY};
use relu_lab::smoothness::{DEFAULT_GRID_LEN, DEFAULT_N_W};
use relu_lab::RealVector;
use serde::{Deserialize, Serialize};

pub const SECTIONS: [&str; 6] = ["gd", "sgd", "profile", "init", "interpolate", "verify"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; defaults to `out/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gd: Option<GdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolate: Option<InterpolateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

/// The single experiment a config asks for.
#[derive(Clone, Copy, Debug)]
pub enum Experiment<'a> {
    Gd(&'a GdSection),
    Sgd(&'a SgdSection),
    Profile(&'a ProfileSection),
    Init(&'a InitSection),
    Interpolate(&'a InterpolateSection),
    Verify(&'a VerifySection),
}

impl Experiment<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Gd(_) => "gd",
            Experiment::Sgd(_) => "sgd",
            Experiment::Profile(_) => "profile",
            Experiment::Init(_) => "init",
            Experiment::Interpolate(_) => "interpolate",
            Experiment::Verify(_) => "verify",
        }
    }
}

impl ExperimentConfig {
    pub fn new(seed: u64, out: Option<PathBuf>) -> Self {
        Self { seed, out, gd: None, sgd: None, profile: None, init: None, interpolate: None, verify: None }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("config parse error at line {}, column {}: {e}", e.line(), e.column())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn experiment(&self) -> Result<Experiment<'_>> {
        let present: Vec<Experiment<'_>> = [
            self.gd.as_ref().map(Experiment::Gd),
            self.sgd.as_ref().map(Experiment::Sgd),
            self.profile.as_ref().map(Experiment::Profile),
            self.init.as_ref().map(Experiment::Init),
            self.interpolate.as_ref().map(Experiment::Interpolate),
            self.verify.as_ref().map(Experiment::Verify),
        ]
        .into_iter()
        .flatten()
        .collect();
        match present.as_slice() {
            [one] => Ok(*one),
            [] => bail!("missing experiment section: expected exactly one of {}", SECTIONS.join(", ")),
            many => bail!(
                "expected exactly one experiment section, found {}",
                many.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment()? {
            Experiment::Gd(s) => s.validate().context("gd"),
            Experiment::Sgd(s) => s.validate().context("sgd"),
            Experiment::Profile(s) => s.validate().context("profile"),
            Experiment::Init(s) => s.validate().context("init"),
            Experiment::Interpolate(s) => s.validate().context("interpolate"),
            Experiment::Verify(s) => s.validate().context("verify"),
        }
    }
}

/// Teacher filter, defaulting to the normalized all-ones vector.
pub fn teacher(p: usize, w_star: &Option<Vec<f64>>) -> Result<RealVector> {
    match w_star {
        Some(v) => {
            ensure!(v.len() == p, "w_star has length {}, expected p = {p}", v.len());
            let w = RealVector::new(v.clone())?;
            ensure!(w.norm() > 0.0, "w_star must be nonzero");
            Ok(w)
        }
        None => Ok(RealVector::new(vec![1.0 / (p as f64).sqrt(); p])?),
    }
}

fn default_grid_lo() -> f64 {
    0.05
}
fn default_grid_hi() -> f64 {
    PI - 0.05
}
fn default_grid_n() -> usize {
    DEFAULT_GRID_LEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_grid_lo")]
    pub lo: f64,
    #[serde(default = "default_grid_hi")]
    pub hi: f64,
    #[serde(default = "default_grid_n")]
    pub n: usize,
    /// Explicit angles; overrides `lo`, `hi`, `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lo: default_grid_lo(), hi: default_grid_hi(), n: default_grid_n(), points: None }
    }
}

impl GridSpec {
    pub fn angles(&self) -> Vec<f64> {
        match &self.points {
            Some(p) => p.clone(),
            None => relu_lab::smoothness::grid(self.lo, self.hi, self.n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.angles();
        ensure!(!a.is_empty(), "grid is empty");
        ensure!(a.iter().all(|&x| x > 0.0 && x < PI), "grid angles must lie in (0, π)");
        ensure!(a.windows(2).all(|w| w[0] < w[1]), "grid must be strictly increasing");
        Ok(())
    }
}

fn default_profile_samples() -> usize {
    DEFAULT_N_MC
}
fn default_n_w() -> usize {
    DEFAULT_N_W
}

/// How to estimate a smoothness profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    #[serde(default = "default_profile_samples")]
    pub n_samples: usize,
    #[serde(default = "default_n_w")]
    pub n_w: usize,
    #[serde(default)]
    pub grid: GridSpec,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self { n_samples: default_profile_samples(), n_w: default_n_w(), grid: GridSpec::default() }
    }
}

impl ProfileParams {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_samples >= 2, "n_samples must be at least 2");
        ensure!(self.n_w >= 1, "n_w must be at least 1");
        self.grid.validate()
    }
}

fn default_safety() -> f64 {
    DEFAULT_SAFETY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant { eta: f64 },
    TwoStage { eta_small: f64, eta_large: f64, switch_angle: f64 },
    /// Step size from the convergence bound on a profile estimated before the run.
    Adaptive {
        #[serde(default = "default_safety")]
        safety: f64,
        #[serde(default)]
        profile: ProfileParams,
    },
}

fn default_n_mc() -> usize {
    DEFAULT_N_MC
}
fn yes() -> bool {
    true
}
fn default_max_iters() -> usize {
    10_000
}
fn default_stop_tol() -> f64 {
    1e-3
}
fn default_init() -> Init {
    Init::Offset { ratio: 0.5 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdSection {
    pub dist: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
    #[serde(default = "default_init")]
    pub init: Init,
    pub schedule: ScheduleSpec,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "yes")]
    pub pinned: bool,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
}

impl GdSection {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        teacher(self.dist.p, &self.w_star)?;
        validate_schedule(&self.schedule)?;
        ensure!(self.n_mc >= 1, "n_mc must be at least 1");
        ensure!(self.max_iters >= 1, "max_iters must be at least 1");
        ensure!(self.stop_tol > 0.0, "stop_tol must be positive");
        Ok(())
    }
}

fn validate_schedule(s: &ScheduleSpec) -> Result<()> {
    match s {
        ScheduleSpec::Constant { eta } => ensure!(*eta >= 0.0 && eta.is_finite(), "eta must be non-negative"),
        ScheduleSpec::TwoStage { eta_small, eta_large, switch_angle } => {
            ensure!(*eta_small > 0.0 && *eta_large > 0.0, "two-stage rates must be positive");
            ensure!(*switch_angle > 0.0 && *switch_angle < PI / 2.0, "switch_angle must lie in (0, π/2)");
        }
        ScheduleSpec::Adaptive { safety, profile } => {
            ensure!(*safety > 0.0 && *safety <= 1.0, "safety must lie in (0, 1]");
            profile.validate()?;
        }
    }
    Ok(())
}

fn default_eps() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.1
}
fn default_pilot() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SgdScheduleSpec {
    Constant { eta: f64, max_iters: usize },
    /// Step size and iteration budget from the rate lemma with measured
    /// constants; `B` is the largest pilot minibatch gradient at `w₀`.
    Theory {
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_safety")]
        safety: f64,
        #[serde(default = "default_pilot")]
        n_pilot: usize,
        #[serde(default)]
        profile: ProfileParams,
    },
}

fn default_batch() -> usize {
    32
}
fn default_sgd_stop() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    pub dist: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
    #[serde(default = "default_init")]
    pub init: Init,
    pub schedule: SgdScheduleSpec,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_sgd_stop")]
    pub stop_tol: f64,
}

impl SgdSection {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        teacher(self.dist.p, &self.w_star)?;
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(self.stop_tol > 0.0, "stop_tol must be positive");
        match &self.schedule {
            SgdScheduleSpec::Constant { eta, max_iters } => {
                ensure!(*eta >= 0.0, "eta must be non-negative");
                ensure!(*max_iters >= 1, "max_iters must be at least 1");
            }
            SgdScheduleSpec::Theory { eps, delta, safety, n_pilot, profile } => {
                ensure!(*eps > 0.0, "eps must be positive");
                ensure!(*delta > 0.0 && *delta < 1.0, "delta must lie in (0, 1)");
                ensure!(*safety > 0.0 && *safety <= 1.0, "safety must lie in (0, 1]");
                ensure!(*n_pilot >= 1, "n_pilot must be at least 1");
                profile.validate()?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub dist: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
    #[serde(default)]
    pub params: ProfileParams,
}

impl ProfileSection {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        teacher(self.dist.p, &self.w_star)?;
        self.params.validate()
    }
}

fn default_trials() -> usize {
    10_000
}

/// Corollary case: ball radius `cos φ*·‖w*‖` with `φ*` from a profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorollarySpec {
    pub dist: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_star: Option<Vec<f64>>,
    #[serde(default)]
    pub params: ProfileParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub ps: Vec<usize>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Skip `(p, α)` pairs outside the hypothesis `α ≤ √(1/(2πp))`.
    #[serde(default = "yes")]
    pub admissible_only: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corollary: Option<CorollarySpec>,
}

impl InitSection {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.ps.is_empty() || self.corollary.is_some(), "nothing to run: ps is empty and no corollary");
        ensure!(self.ps.iter().all(|&p| p >= 1), "every p must be at least 1");
        ensure!(self.alphas.iter().all(|&a| a > 0.0 && a < 1.0), "every alpha must lie in (0, 1)");
        ensure!(self.trials >= 1, "trials must be at least 1");
        if let Some(c) = &self.corollary {
            c.dist.validate()?;
            teacher(c.dist.p, &c.w_star)?;
            c.params.validate()?;
        }
        Ok(())
    }
}

fn default_n_eval() -> usize {
    100_000
}
fn default_grid_size() -> usize {
    21
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateSection {
    /// Problem and training run; training is skipped when `w` is given.
    pub gd: GdSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

impl InterpolateSection {
    pub fn validate(&self) -> Result<()> {
        self.gd.validate()?;
        if let Some(w) = &self.w {
            ensure!(w.len() == self.gd.dist.p, "w has length {}, expected {}", w.len(), self.gd.dist.p);
        }
        ensure!(self.n_eval >= 1, "n_eval must be at least 1");
        ensure!(self.grid_size >= 2, "grid_size must be at least 2");
        Ok(())
    }
}

fn default_lemma_configs() -> usize {
    20
}

/// Gaussian, sphere and clustered families over a few dimensions.
pub fn lemma_dists() -> Vec<DistributionSpec> {
    let mut out = Vec::new();
    for p in [2, 3, 5, 8] {
        out.push(DistributionSpec::gaussian(p, 1));
        out.push(DistributionSpec::unit_sphere(p, 1));
        out.push(DistributionSpec::clustered(p, 1, 0.1, 0.1, RealVector::basis(p, 0)));
    }
    out
}

/// One verification check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    /// Two-term decomposition on random `(w, w*)` pairs, cycling through
    /// single-patch distributions.
    Lemma {
        #[serde(default = "lemma_dists")]
        dists: Vec<DistributionSpec>,
        #[serde(default = "default_profile_samples")]
        n_samples: usize,
        #[serde(default = "default_lemma_configs")]
        configs: usize,
    },
    /// `β̂` against the family bound.
    Beta {
        dist: DistributionSpec,
        #[serde(default)]
        params: ProfileParams,
    },
    /// Clustered-patch inequalities at angle `phi0`.
    Clustered {
        dist: DistributionSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_star: Option<Vec<f64>>,
        phi0: f64,
        #[serde(default)]
        params: ProfileParams,
    },
    /// `L̂_cross` on a dataset whose `k` patches are identical copies.
    DuplicatePatches {
        dist: DistributionSpec,
        k: usize,
        #[serde(default)]
        params: ProfileParams,
    },
    /// GD run with per-step contraction check; needs an adaptive schedule.
    Contraction {
        gd: GdSection,
        #[serde(default = "default_min_pass")]
        min_pass_fraction: f64,
    },
}

fn default_min_pass() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<CheckSpec>,
}

impl VerifySection {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.checks.is_empty(), "verify needs at least one check");
        for c in &self.checks {
            match c {
                CheckSpec::Lemma { dists, n_samples, configs } => {
                    ensure!(!dists.is_empty(), "lemma check needs at least one distribution");
                    for d in dists {
                        d.validate()?;
                        ensure!(d.k == 1, "lemma check needs k = 1");
                    }
                    ensure!(*n_samples >= 2 && *configs >= 1, "lemma check needs samples and configs");
                }
                CheckSpec::Beta { dist, params } => {
                    dist.validate()?;
                    params.validate()?;
                }
                CheckSpec::Clustered { dist, phi0, params, .. } => {
                    dist.validate()?;
                    ensure!(
                        matches!(dist.kind, relu_lab::distributions::DistributionKind::ClusteredPatches { .. }),
                        "clustered check needs a clustered_patches distribution"
                    );
                    ensure!(*phi0 > 0.0 && *phi0 < PI, "phi0 must lie in (0, π)");
                    params.validate()?;
                }
                CheckSpec::DuplicatePatches { dist, k, params } => {
                    dist.validate()?;
                    ensure!(*k >= 2, "duplicate-patch check needs k >= 2");
                    params.validate()?;
                }
                CheckSpec::Contraction { gd, min_pass_fraction } => {
                    gd.validate()?;
                    ensure!(
                        matches!(gd.schedule, ScheduleSpec::Adaptive { .. }),
                        "contraction check needs an adaptive schedule"
                    );
                    ensure!((0.0..=1.0).contains(min_pass_fraction), "min_pass_fraction must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// A small suite covering every check kind.
    pub fn default_suite() -> Self {
        let e = |p| RealVector::basis(p, 0);
        let small = |n_w| ProfileParams { n_samples: 100_000, n_w, grid: GridSpec::default() };
        Self {
            checks: vec![
                CheckSpec::Lemma { dists: lemma_dists(), n_samples: 20_000, configs: 24 },
                CheckSpec::Beta { dist: DistributionSpec::unit_sphere(2, 1), params: small(2) },
                CheckSpec::Beta { dist: DistributionSpec::gaussian(4, 1), params: small(4) },
                CheckSpec::Clustered {
                    dist: DistributionSpec::clustered(8, 5, 0.15, 0.05, e(8)),
                    w_star: Some(e(8).into_vec()),
                    phi0: 0.5,
                    params: small(8),
                },
                CheckSpec::DuplicatePatches { dist: DistributionSpec::gaussian(4, 1), k: 3, params: small(4) },
                CheckSpec::Contraction {
                    gd: GdSection {
                        dist: DistributionSpec::gaussian(6, 1),
                        w_star: None,
                        init: default_init(),
                        schedule: ScheduleSpec::Adaptive {
                            safety: DEFAULT_SAFETY,
                            profile: ProfileParams { n_samples: 50_000, n_w: 4, grid: GridSpec::default() },
                        },
                        n_mc: 20_000,
                        pinned: true,
                        max_iters: 10_000,
                        stop_tol: 1e-3,
                    },
                    min_pass_fraction: 0.9,
                },
            ],
        }
    }
}

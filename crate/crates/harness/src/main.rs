use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relu_lab::distributions::{DistributionKind, DistributionSpec};
use relu_lab::optimize::{Init, DEFAULT_N_MC, DEFAULT_SAFETY};
use relu_lab::smoothness::{DEFAULT_GRID_LEN, DEFAULT_N_W};
use relu_lab_harness::config::{
    teacher, GdSection, GridSpec, InitSection, InterpolateSection, ProfileParams, ProfileSection, ScheduleSpec,
    SgdScheduleSpec, SgdSection, VerifySection,
};
use relu_lab_harness::{init_threads, run_experiment, ExperimentConfig};

/// Teacher-student experiments for a convolutional ReLU filter.
///
/// Every subcommand writes CSV and JSON into `--out`. `RELU_LAB_THREADS`
/// caps the worker count (0 = one per core).
#[derive(Parser)]
#[command(name = "relu-lab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
    },
    /// Estimate the smoothness profile of a distribution.
    Profile {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        profile: ProfileArgs,
    },
    /// Gradient descent on the Monte Carlo population loss.
    Gd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        gd: GdArgs,
    },
    /// Minibatch SGD; without --eta the step size and budget come from the
    /// measured constants.
    Sgd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        sgd: SgdArgs,
    },
    /// Success rate of random initialization in a small ball.
    Init {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        ps: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1")]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// Also run (p, alpha) pairs outside the admissible range.
        #[arg(long)]
        all: bool,
    },
    /// Loss along the segment from the teacher to a trained student.
    Interpolate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        dist: DistArgs,
        #[command(flatten)]
        gd: GdArgs,
        #[arg(long, default_value_t = 100_000)]
        n_eval: usize,
        #[arg(long, default_value_t = 21)]
        grid_size: usize,
    },
    /// Run the default verification suite.
    Verify {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Print the equivalent JSON config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistKind {
    Gaussian,
    UnitSphere,
    Clustered,
    File,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    dist: DistKind,
    /// Patch dimension.
    #[arg(long, default_value_t = 10)]
    p: usize,
    /// Patches per sample.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Clustered: max patch-to-average angle.
    #[arg(long, default_value_t = 0.15)]
    rho: f64,
    /// Clustered: boundary mass per radian.
    #[arg(long, default_value_t = 0.05)]
    mu: f64,
    /// Clustered: center exclusion half-width (default 1.5·rho).
    #[arg(long)]
    gap: Option<f64>,
    /// Dataset file for `--dist file`.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl DistArgs {
    /// Clustered margins are taken against the default teacher.
    fn spec(&self) -> Result<DistributionSpec> {
        let kind = match self.dist {
            DistKind::Gaussian => DistributionKind::StandardGaussian,
            DistKind::UnitSphere => DistributionKind::UnitSphere,
            DistKind::Clustered => DistributionKind::ClusteredPatches {
                rho: self.rho,
                mu: self.mu,
                margin_dir: teacher(self.p, &None)?,
                gap: self.gap,
            },
            DistKind::File => match &self.data {
                Some(path) => DistributionKind::FromFile { path: path.clone() },
                None => bail!("--dist file needs --data <path>"),
            },
        };
        Ok(DistributionSpec { kind, p: self.p, k: self.k })
    }
}

#[derive(Args)]
struct ProfileArgs {
    /// Monte Carlo samples for the profile.
    #[arg(long, default_value_t = DEFAULT_N_MC)]
    n_samples: usize,
    /// Student directions per grid angle.
    #[arg(long, default_value_t = DEFAULT_N_W)]
    n_w: usize,
    #[arg(long, default_value_t = 0.05)]
    grid_lo: f64,
    #[arg(long, default_value_t = std::f64::consts::PI - 0.05)]
    grid_hi: f64,
    #[arg(long, default_value_t = DEFAULT_GRID_LEN)]
    grid_n: usize,
}

impl ProfileArgs {
    fn params(&self) -> ProfileParams {
        ProfileParams {
            n_samples: self.n_samples,
            n_w: self.n_w,
            grid: GridSpec { lo: self.grid_lo, hi: self.grid_hi, n: self.grid_n, points: None },
        }
    }
}

#[derive(Args)]
struct GdArgs {
    /// Constant step size; without it the schedule is adaptive.
    #[arg(long)]
    eta: Option<f64>,
    /// Two-stage schedule: small rate until the angle bound reaches --switch-angle.
    #[arg(long, requires_all = ["eta_large", "switch_angle"], conflicts_with = "eta")]
    eta_small: Option<f64>,
    #[arg(long)]
    eta_large: Option<f64>,
    #[arg(long)]
    switch_angle: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAFETY)]
    safety: f64,
    /// Start at distance ratio·‖w*‖ from the teacher.
    #[arg(long, default_value_t = 0.5)]
    init_offset: f64,
    /// Start uniformly in the ball of radius alpha·‖w*‖ instead.
    #[arg(long)]
    init_ball: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_MC)]
    n_mc: usize,
    /// Draw a fresh Monte Carlo sample every step.
    #[arg(long)]
    fresh: bool,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    stop_tol: f64,
    #[command(flatten)]
    profile: ProfileArgs,
}

fn init_of(offset: f64, ball: Option<f64>) -> Init {
    match ball {
        Some(alpha) => Init::Ball { alpha },
        None => Init::Offset { ratio: offset },
    }
}

impl GdArgs {
    fn section(&self, dist: DistributionSpec) -> GdSection {
        let schedule = match (self.eta, self.eta_small, self.eta_large, self.switch_angle) {
            (Some(eta), ..) => ScheduleSpec::Constant { eta },
            (None, Some(eta_small), Some(eta_large), Some(switch_angle)) => {
                ScheduleSpec::TwoStage { eta_small, eta_large, switch_angle }
            }
            _ => ScheduleSpec::Adaptive { safety: self.safety, profile: self.profile.params() },
        };
        GdSection {
            dist,
            w_star: None,
            init: init_of(self.init_offset, self.init_ball),
            schedule,
            n_mc: self.n_mc,
            pinned: !self.fresh,
            max_iters: self.max_iters,
            stop_tol: self.stop_tol,
        }
    }
}

#[derive(Args)]
struct SgdArgs {
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Constant step size; without it the plan is computed from measured constants.
    #[arg(long)]
    eta: Option<f64>,
    /// Iterations for a constant step size.
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = DEFAULT_SAFETY)]
    safety: f64,
    /// Pilot minibatches for the gradient bound.
    #[arg(long, default_value_t = 64)]
    n_pilot: usize,
    #[arg(long, default_value_t = 0.5)]
    init_offset: f64,
    #[arg(long)]
    init_ball: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    stop_tol: f64,
    #[command(flatten)]
    profile: ProfileArgs,
}

impl SgdArgs {
    fn section(&self, dist: DistributionSpec) -> SgdSection {
        let schedule = match self.eta {
            Some(eta) => SgdScheduleSpec::Constant { eta, max_iters: self.max_iters },
            None => SgdScheduleSpec::Theory {
                eps: self.eps,
                delta: self.delta,
                safety: self.safety,
                n_pilot: self.n_pilot,
                profile: self.profile.params(),
            },
        };
        SgdSection {
            dist,
            w_star: None,
            init: init_of(self.init_offset, self.init_ball),
            schedule,
            batch_size: self.batch_size,
            stop_tol: self.stop_tol,
        }
    }
}

fn build(cmd: Cmd) -> Result<(ExperimentConfig, bool)> {
    let with = |c: &Common| (ExperimentConfig::new(c.seed, Some(c.out.clone())), c.print_config);
    Ok(match cmd {
        Cmd::Run { config } => (ExperimentConfig::load(&config)?, false),
        Cmd::Profile { common, dist, profile } => {
            let (mut cfg, print) = with(&common);
            cfg.profile = Some(ProfileSection { dist: dist.spec()?, w_star: None, params: profile.params() });
            (cfg, print)
        }
        Cmd::Gd { common, dist, gd } => {
            let (mut cfg, print) = with(&common);
            cfg.gd = Some(gd.section(dist.spec()?));
            (cfg, print)
        }
        Cmd::Sgd { common, dist, sgd } => {
            let (mut cfg, print) = with(&common);
            cfg.sgd = Some(sgd.section(dist.spec()?));
            (cfg, print)
        }
        Cmd::Init { common, ps, alphas, trials, all } => {
            let (mut cfg, print) = with(&common);
            cfg.init = Some(InitSection { ps, alphas, trials, admissible_only: !all, corollary: None });
            (cfg, print)
        }
        Cmd::Interpolate { common, dist, gd, n_eval, grid_size } => {
            let (mut cfg, print) = with(&common);
            cfg.interpolate = Some(InterpolateSection { gd: gd.section(dist.spec()?), w: None, n_eval, grid_size });
            (cfg, print)
        }
        Cmd::Verify { common } => {
            let (mut cfg, print) = with(&common);
            cfg.verify = Some(VerifySection::default_suite());
            (cfg, print)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| build(cli.cmd)).and_then(|(cfg, print)| {
        cfg.validate()?;
        if print {
            println!("{}", cfg.to_json()?);
            return Ok(true);
        }
        let report = run_experiment(&cfg)?;
        for l in &report.lines {
            println!("{l}");
        }
        println!("outputs in {}", report.out);
        Ok(report.ok)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

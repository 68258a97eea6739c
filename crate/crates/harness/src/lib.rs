//! Command-line harness: JSON experiment configs, CSV and JSON outputs,
//! and the verification suite.

pub mod config;
pub mod experiments;
pub mod io;

pub use config::ExperimentConfig;
pub use experiments::{cmd_interpolate, cmd_run, cmd_verify, run_experiment, RunReport};

/// Sizes the global worker pool from `RELU_LAB_THREADS` (unset or 0 keeps
/// the default of one worker per core).
pub fn init_threads() -> anyhow::Result<()> {
    let n = match std::env::var("RELU_LAB_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| anyhow::anyhow!("RELU_LAB_THREADS must be a count, got {v:?}"))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

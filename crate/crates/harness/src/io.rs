//! CSV and JSON writers with the fixed column layouts.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use relu_lab::init::SuccessReport;
use relu_lab::{RealProfile, RealTrajectory};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCsvRow {
    pub t: usize,
    pub eta: f64,
    pub dist: f64,
    pub phi: f64,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCsvRow {
    pub phi: f64,
    pub gamma: f64,
    pub gamma_se: f64,
    pub ell: f64,
    pub ell_se: f64,
    pub ell_minus: f64,
    pub ell_minus_se: f64,
    pub l_cross_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitCsvRow {
    pub p: usize,
    pub alpha: f64,
    pub trials: usize,
    pub frequency: f64,
    pub bound: f64,
    pub hypothesis_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveCsvRow {
    pub alpha: f64,
    pub loss: f64,
}

pub const TRAJECTORY_HEADER: &str = "t,eta,dist,phi,loss,grad_norm";
pub const PROFILE_HEADER: &str = "phi,gamma,gamma_se,ell,ell_se,ell_minus,ell_minus_se,l_cross_ratio";
pub const INIT_HEADER: &str = "p,alpha,trials,frequency,bound,hypothesis_ok";
pub const CURVE_HEADER: &str = "alpha,loss";

pub fn trajectory_rows(traj: &RealTrajectory) -> Vec<TrajectoryCsvRow> {
    traj.rows
        .iter()
        .map(|r| TrajectoryCsvRow { t: r.t, eta: r.eta, dist: r.dist, phi: r.phi, loss: r.loss, grad_norm: r.grad_norm })
        .collect()
}

pub fn profile_rows(p: &RealProfile) -> Vec<ProfileCsvRow> {
    (0..p.phis.len())
        .map(|i| ProfileCsvRow {
            phi: p.phis[i],
            gamma: p.gamma[i],
            gamma_se: p.gamma_se[i],
            ell: p.ell[i],
            ell_se: p.ell_se[i],
            ell_minus: p.ell_minus[i],
            ell_minus_se: p.ell_minus_se[i],
            l_cross_ratio: p.l_cross_ratio[i],
        })
        .collect()
}

pub fn init_row(r: &SuccessReport) -> InitCsvRow {
    InitCsvRow {
        p: r.p,
        alpha: r.alpha,
        trials: r.trials,
        frequency: r.frequency,
        bound: r.bound,
        hypothesis_ok: r.hypothesis_ok,
    }
}

/// Writes `rows` with a header from the row type's field names, even when
/// `rows` is empty.
pub fn write_csv<R: Serialize>(path: &Path, header: &str, rows: &[R]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize().map(|x| x.map_err(Into::into)).collect()
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

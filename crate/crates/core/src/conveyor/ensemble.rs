//! Independent trajectories run in parallel and averaged.

use std::path::Path;

use rayon::prelude::*;

use crate::conveyor::{run_trajectory_with, RunOptions, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::model::{DetectorConfig, WavepacketSpec};
use crate::seed::trajectory_seed;
use crate::table::write_table;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Trajectory averages. `var_y` is the unconditional variance
/// `E[⟨ŷ²⟩] - E[⟨ŷ⟩]²`, which is what the unmonitored master equation
/// predicts; the conditional variance of each record is smaller.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub t: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub var_y: Vec<f64>,
    pub stderr_mean_y: Vec<f64>,
    /// Delta-method standard error of `var_y`.
    pub stderr_var_y: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
    pub n_traj: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub base_seed: u64,
}

impl EnsembleResult {
    /// Statistics over `records`, which must share a time grid.
    pub fn from_records(
        records: Vec<TrajectoryRecord>,
        failures: Vec<TrajectoryFailure>,
        base_seed: u64,
    ) -> Result<Self> {
        let first = records.first().ok_or_else(|| {
            let why = failures.first().map_or("no trajectories requested".to_string(), |f| f.message.clone());
            Error::numerical(format!("every trajectory failed; first failure: {why}"), f64::NAN)
        })?;
        let len = first.len();
        if records.iter().any(|r| r.len() != len) {
            return Err(Error::Dimension("trajectory records have different lengths".into()));
        }
        let n = records.len() as f64;
        let mut out = EnsembleResult {
            t: first.t.clone(),
            mean_y: vec![0.0; len],
            var_y: vec![0.0; len],
            stderr_mean_y: vec![0.0; len],
            stderr_var_y: vec![0.0; len],
            n_traj: records.len(),
            records: Vec::new(),
            failures,
            base_seed,
        };
        for k in 0..len {
            // m: conditional mean; s: conditional second moment
            let m_bar = records.iter().map(|r| r.y_mean[k]).sum::<f64>() / n;
            let s_bar = records.iter().map(|r| r.y_var[k] + r.y_mean[k].powi(2)).sum::<f64>() / n;
            out.mean_y[k] = m_bar;
            out.var_y[k] = s_bar - m_bar * m_bar;
            if records.len() > 1 {
                let (mut vm, mut vs, mut cms) = (0.0, 0.0, 0.0);
                for r in &records {
                    let dm = r.y_mean[k] - m_bar;
                    let ds = r.y_var[k] + r.y_mean[k].powi(2) - s_bar;
                    vm += dm * dm;
                    vs += ds * ds;
                    cms += dm * ds;
                }
                let (vm, vs, cms) = (vm / (n - 1.0), vs / (n - 1.0), cms / (n - 1.0));
                out.stderr_mean_y[k] = (vm / n).sqrt();
                let var_of_var = vs - 4.0 * m_bar * cms + 4.0 * m_bar * m_bar * vm;
                out.stderr_var_y[k] = (var_of_var.max(0.0) / n).sqrt();
            }
        }
        out.records = records;
        Ok(out)
    }

    /// Writes `ensemble.csv` with the averaged series and, when
    /// `with_records` is set, every trajectory under `traj_<index>/`.
    pub fn write_dir(&self, dir: &Path, with_records: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_table(
            &dir.join("ensemble.csv"),
            &["t", "mean_y", "var_y", "stderr_mean_y", "stderr_var_y"],
            &[&self.t, &self.mean_y, &self.var_y, &self.stderr_mean_y, &self.stderr_var_y],
        )?;
        if with_records {
            for (k, r) in self.records.iter().enumerate() {
                r.write_dir(&dir.join(format!("traj_{k:05}")))?;
            }
        }
        Ok(())
    }
}

pub fn run_ensemble(
    cfg: &DetectorConfig,
    spec: &WavepacketSpec,
    n_traj: usize,
    base_seed: u64,
) -> Result<EnsembleResult> {
    run_ensemble_with(cfg, spec, n_traj, base_seed, &RunOptions::default())
}

/// Runs `n_traj` trajectories with seeds `trajectory_seed(base_seed, k)`.
/// Results are assembled in index order, so the outcome does not depend on
/// the thread count. Failed trajectories are listed and excluded.
pub fn run_ensemble_with(
    cfg: &DetectorConfig,
    spec: &WavepacketSpec,
    n_traj: usize,
    base_seed: u64,
    opts: &RunOptions,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::Config("an ensemble needs at least one trajectory".into()));
    }
    cfg.validate()?;
    let outcomes: Vec<(usize, u64, Result<TrajectoryRecord>)> = (0..n_traj)
        .into_par_iter()
        .map(|k| {
            let seed = trajectory_seed(base_seed, k as u64);
            (k, seed, run_trajectory_with(cfg, spec, seed, opts))
        })
        .collect();
    let mut records = Vec::with_capacity(n_traj);
    let mut failures = Vec::new();
    for (index, seed, r) in outcomes {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(TrajectoryFailure { index, seed, message: e.to_string() }),
        }
    }
    EnsembleResult::from_records(records, failures, base_seed)
}

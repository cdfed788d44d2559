//! Experiment orchestration: a manifest names a mode, a configuration and an
//! output directory; running it writes delimited-text results plus a
//! provenance file (`manifest.toml`) that ties every output to the config hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conveyor::{run_ensemble_with, run_trajectory_with, BackendKind, EnsembleResult, RunOptions, SignalConvention, TrajectoryRecord};
use crate::detection::{assignment_report, build_filter, optimize_threshold, roc_curve, score_records, write_roc, DetectionReport};
use crate::error::{Error, Result};
use crate::keldysh::{langevin_mean, run_keldysh, y_of, MomentSeries};
use crate::model::{n_cells_estimate, n_cells_required, DetectorConfig, HardwareParams, WavepacketSpec};
use crate::seed::trajectory_seed;
use crate::table::write_table;

/// Environment variable naming the default output root of the CLI.
pub const OUTPUT_ROOT_VAR: &str = "JTWPD_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Keldysh,
    /// A single unmonitored trajectory; requires `κ_a = 0`.
    MpsDeterministic,
    MpsStochastic,
    DesignSweep,
    Analyze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base: u64,
    pub count: usize,
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.count as u64).map(|k| trajectory_seed(self.base, k)).collect()
    }
}

/// Grid for the unit-cell design table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSweep {
    pub hardware: HardwareParams,
    pub g_tau: Vec<f64>,
    /// Coupler self-Kerr values in rad/s; empty means the hardware value.
    #[serde(default)]
    pub k_q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSpec {
    /// Ensemble directory with photon input (`traj_*` subdirectories).
    pub photon_dir: PathBuf,
    pub vacuum_dir: PathBuf,
    /// Filter window; the full record when absent.
    #[serde(default)]
    pub tau_m: Option<f64>,
    #[serde(default)]
    pub max_over_window: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub mode: Mode,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub config: Option<DetectorConfig>,
    /// Overrides the wavepacket derived from `config`.
    #[serde(default)]
    pub wavepacket: Option<WavepacketSpec>,
    #[serde(default)]
    pub seeds: Option<SeedSpec>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default)]
    pub signal: SignalConvention,
    /// Keep every trajectory on disk, not only the ensemble averages.
    #[serde(default)]
    pub write_records: bool,
    #[serde(default)]
    pub design: Option<DesignSweep>,
    #[serde(default)]
    pub analyze: Option<AnalyzeSpec>,
}

impl ExperimentManifest {
    pub fn new(mode: Mode, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentManifest {
            mode,
            output_dir: output_dir.into(),
            config: None,
            wavepacket: None,
            seeds: None,
            snapshot_times: Vec::new(),
            backend: BackendKind::default(),
            signal: SignalConvention::default(),
            write_records: false,
            design: None,
            analyze: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Checks that the fields the mode needs are present and consistent.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, field: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("mode {:?} requires field '{field}'", self.mode)))
            }
        };
        match self.mode {
            Mode::Keldysh | Mode::MpsDeterministic | Mode::MpsStochastic => {
                need(self.config.is_some(), "config")?;
                self.config.as_ref().unwrap().validate()?;
            }
            Mode::DesignSweep => need(self.design.is_some(), "design")?,
            Mode::Analyze => need(self.analyze.is_some(), "analyze")?,
        }
        match self.mode {
            Mode::MpsDeterministic => {
                let cfg = self.config.as_ref().unwrap();
                if cfg.kappa_a_tau != 0.0 {
                    return Err(Error::Config(format!(
                        "config.kappa_a_tau: mps-deterministic needs an unmonitored probe, got {}",
                        cfg.kappa_a_tau
                    )));
                }
            }
            Mode::MpsStochastic => match self.seeds {
                Some(s) if s.count > 0 => {}
                _ => return Err(Error::Config("seeds: mps-stochastic needs a base seed and count >= 1".into())),
            },
            Mode::DesignSweep => {
                let d = self.design.as_ref().unwrap();
                if d.g_tau.is_empty() {
                    return Err(Error::Config("design.g_tau: empty grid".into()));
                }
                d.hardware.validate().map_err(|e| Error::Config(format!("design.hardware: {e}")))?;
            }
            _ => {}
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("snapshot_times: every entry must be finite".into()));
        }
        Ok(())
    }

    fn spec(&self) -> Option<WavepacketSpec> {
        self.wavepacket.or_else(|| self.config.as_ref().map(DetectorConfig::wavepacket))
    }

    fn run_options(&self) -> RunOptions {
        RunOptions { backend: self.backend, snapshot_times: self.snapshot_times.clone(), signal: self.signal, ..RunOptions::default() }
    }
}

/// Provenance written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub mode: Mode,
    pub status: String,
    pub config_hash: Option<String>,
    pub base_seed: Option<u64>,
    /// Decimal strings, since TOML integers are signed.
    pub seeds: Vec<String>,
    pub files: Vec<String>,
    pub failed_trajectories: Vec<usize>,
    pub error: Option<String>,
    pub unix_time: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub config_hash: Option<String>,
    pub report: Option<DetectionReport>,
}

/// Runs the manifest and writes its artifacts. On a runtime failure the
/// provenance file is still written, marked `failed`, listing whatever was
/// produced before the error.
pub fn run_experiment(manifest: &ExperimentManifest) -> Result<RunSummary> {
    manifest.validate()?;
    let out = &manifest.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let config_hash = manifest.config.as_ref().map(DetectorConfig::config_hash);
    let mut files = Vec::new();
    let mut failed = Vec::new();
    let mut report = None;
    let outcome = execute(manifest, &mut files, &mut failed, &mut report);
    let prov = Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        mode: manifest.mode,
        status: if outcome.is_ok() { "complete" } else { "failed" }.to_string(),
        config_hash: config_hash.clone(),
        base_seed: manifest.seeds.map(|s| s.base),
        seeds: manifest.seeds.map_or_else(Vec::new, |s| s.seeds().iter().map(u64::to_string).collect()),
        files: files.clone(),
        failed_trajectories: failed,
        error: outcome.as_ref().err().map(ToString::to_string),
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
    };
    let path = out.join("manifest.toml");
    let text = toml::to_string(&prov).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    outcome?;
    Ok(RunSummary { output_dir: out.clone(), files, config_hash, report })
}

fn execute(
    m: &ExperimentManifest,
    files: &mut Vec<String>,
    failed: &mut Vec<usize>,
    report: &mut Option<DetectionReport>,
) -> Result<()> {
    let out = &m.output_dir;
    match m.mode {
        Mode::Keldysh => {
            let cfg = m.config.as_ref().unwrap();
            let series = run_keldysh(cfg, cfg.fock_dims.probe)?;
            series.write_delimited(&out.join("keldysh.csv"))?;
            files.push("keldysh.csv".into());
            let spec = m.spec().unwrap();
            let y: Vec<f64> = series.t.iter().map(|&t| y_of(langevin_mean(t, cfg, &spec))).collect();
            write_table(&out.join("langevin.csv"), &["t", "y_mean"], &[&series.t, &y])?;
            files.push("langevin.csv".into());
        }
        Mode::MpsDeterministic => {
            let cfg = m.config.as_ref().unwrap();
            let rec = run_trajectory_with(cfg, &m.spec().unwrap(), 0, &m.run_options())?;
            rec.write_dir(&out.join("trajectory"))?;
            files.push("trajectory/".into());
        }
        Mode::MpsStochastic => {
            let cfg = m.config.as_ref().unwrap();
            let seeds = m.seeds.unwrap();
            let ens = run_ensemble_with(cfg, &m.spec().unwrap(), seeds.count, seeds.base, &m.run_options())?;
            failed.extend(ens.failures.iter().map(|f| f.index));
            ens.write_dir(out, m.write_records)?;
            files.push("ensemble.csv".into());
            if m.write_records {
                files.push("traj_*/".into());
            }
        }
        Mode::DesignSweep => {
            let d = m.design.as_ref().unwrap();
            let k_grid = if d.k_q.is_empty() { vec![d.hardware.k_q] } else { d.k_q.clone() };
            let (mut gs, mut ks, mut ns, mut est) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for &k_q in &k_grid {
                let hw = HardwareParams { k_q, ..d.hardware.clone() };
                for &g in &d.g_tau {
                    gs.push(g);
                    ks.push(k_q);
                    ns.push(n_cells_required(g, &hw)? as f64);
                    est.push(n_cells_estimate(g, &hw)?);
                }
            }
            write_table(&out.join("design.csv"), &["g_tau", "k_q", "n_cells", "n_cells_estimate"], &[&gs, &ks, &ns, &est])?;
            files.push("design.csv".into());
        }
        Mode::Analyze => {
            let a = m.analyze.as_ref().unwrap();
            let photon = read_records(&a.photon_dir)?;
            let vacuum = read_records(&a.vacuum_dir)?;
            let ens = EnsembleResult::from_records(photon, Vec::new(), 0)?;
            let filter = build_filter(&ens, a.tau_m)?;
            let s1 = score_records(&ens.records, &filter, a.max_over_window)?;
            let s0 = score_records(&vacuum, &filter, a.max_over_window)?;
            let choice = optimize_threshold(&s1, &s0)?;
            let r = assignment_report(&s1, &s0, choice.threshold, filter.tau_m)?;
            let lag: Vec<f64> = (0..filter.f.len()).map(|k| k as f64 * filter.dt).collect();
            write_table(&out.join("filter.csv"), &["t", "f"], &[&lag, &filter.f])?;
            let class: Vec<f64> = s1.iter().map(|_| 1.0).chain(s0.iter().map(|_| 0.0)).collect();
            let pooled: Vec<f64> = s1.iter().chain(&s0).copied().collect();
            write_table(&out.join("scores.csv"), &["photon", "score"], &[&class, &pooled])?;
            write_roc(&out.join("roc.csv"), &roc_curve(&s1, &s0)?)?;
            r.write(&out.join("report.txt"))?;
            files.extend(["filter.csv", "scores.csv", "roc.csv", "report.txt"].map(String::from));
            *report = Some(r);
        }
    }
    Ok(())
}

/// Reads every `traj_*` record under `dir`, in name order.
pub fn read_records(dir: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("traj_")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("{}: no traj_* records found", dir.display())));
    }
    paths.iter().map(|p| TrajectoryRecord::read_dir(p)).collect()
}

/// Moment series of a single record, for comparison with the master equation.
pub fn record_series(rec: &TrajectoryRecord) -> MomentSeries {
    MomentSeries {
        t: rec.t.clone(),
        y_mean: rec.y_mean.clone(),
        y_var: rec.y_var.clone(),
        x_mean: rec.x_mean.clone(),
        emitter_pop: vec![f64::NAN; rec.len()],
        min_eigenvalue: f64::NAN,
    }
}

/// Ensemble mean and unconditional variance as a moment series.
pub fn ensemble_series(ens: &EnsembleResult) -> MomentSeries {
    let n = ens.t.len();
    MomentSeries {
        t: ens.t.clone(),
        y_mean: ens.mean_y.clone(),
        y_var: ens.var_y.clone(),
        x_mean: vec![f64::NAN; n],
        emitter_pop: vec![f64::NAN; n],
        min_eigenvalue: f64::NAN,
    }
}

/// Differences between a simulated series and the reference on the
/// reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscrepancyReport {
    pub t: Vec<f64>,
    pub diff_y_mean: Vec<f64>,
    pub diff_y_var: Vec<f64>,
    pub sup_y_mean: f64,
    pub sup_y_var: f64,
    /// Sup-norm differences divided by the reference sup-norms.
    pub rel_y_mean: f64,
    pub rel_y_var: f64,
    pub tolerance: f64,
    pub interpolated: bool,
    pub pass: bool,
}

impl DiscrepancyReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_table(&dir.join("discrepancy.csv"), &["t", "diff_y_mean", "diff_y_var"], &[&self.t, &self.diff_y_mean, &self.diff_y_var])?;
        let text = format!(
            "sup_y_mean = {:e}\nsup_y_var = {:e}\nrel_y_mean = {:e}\nrel_y_var = {:e}\ntolerance = {:e}\ninterpolated = {}\npass = {}\n",
            self.sup_y_mean, self.sup_y_var, self.rel_y_mean, self.rel_y_var, self.tolerance, self.interpolated, self.pass
        );
        let path = dir.join("compare.txt");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

const GRID_TOL: f64 = 1e-9;

/// Compares `⟨ŷ⟩` and `⟨Δŷ²⟩` of `mps` against `keldysh`. The grids must
/// coincide unless `interpolate` is set, in which case `mps` is linearly
/// interpolated onto the reference points inside its range. Passes when both
/// relative sup-norm errors are below `tolerance`.
pub fn compare_oracle(mps: &MomentSeries, keldysh: &MomentSeries, tolerance: f64, interpolate: bool) -> Result<DiscrepancyReport> {
    if mps.is_empty() || keldysh.is_empty() {
        return Err(Error::Dimension("cannot compare empty series".into()));
    }
    let same_grid = mps.len() == keldysh.len() && mps.t.iter().zip(&keldysh.t).all(|(a, b)| (a - b).abs() <= GRID_TOL);
    let (t, ym, yv): (Vec<f64>, Vec<f64>, Vec<f64>) = if same_grid {
        (keldysh.t.clone(), mps.y_mean.clone(), mps.y_var.clone())
    } else if interpolate {
        let (lo, hi) = (mps.t[0], mps.t[mps.len() - 1]);
        let ts: Vec<f64> = keldysh.t.iter().copied().filter(|&t| t >= lo - GRID_TOL && t <= hi + GRID_TOL).collect();
        if ts.is_empty() {
            return Err(Error::Dimension("series do not overlap in time".into()));
        }
        let ym = ts.iter().map(|&t| lerp(&mps.t, &mps.y_mean, t)).collect();
        let yv = ts.iter().map(|&t| lerp(&mps.t, &mps.y_var, t)).collect();
        (ts, ym, yv)
    } else {
        return Err(Error::Dimension(format!(
            "time grids differ ({} vs {} points); enable interpolation to compare",
            mps.len(),
            keldysh.len()
        )));
    };
    let (rm, rv): (Vec<f64>, Vec<f64>) = t.iter().map(|&s| (lerp(&keldysh.t, &keldysh.y_mean, s), lerp(&keldysh.t, &keldysh.y_var, s))).unzip();
    let diff_y_mean: Vec<f64> = ym.iter().zip(&rm).map(|(a, b)| a - b).collect();
    let diff_y_var: Vec<f64> = yv.iter().zip(&rv).map(|(a, b)| a - b).collect();
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (sup_y_mean, sup_y_var) = (sup(&diff_y_mean), sup(&diff_y_var));
    let rel = |d: f64, r: &[f64]| if sup(r) > 0.0 { d / sup(r) } else if d == 0.0 { 0.0 } else { f64::INFINITY };
    let (rel_y_mean, rel_y_var) = (rel(sup_y_mean, &rm), rel(sup_y_var, &rv));
    Ok(DiscrepancyReport {
        t,
        diff_y_mean,
        diff_y_var,
        sup_y_mean,
        sup_y_var,
        rel_y_mean,
        rel_y_var,
        tolerance,
        interpolated: !same_grid,
        pass: rel_y_mean < tolerance && rel_y_var < tolerance,
    })
}

fn lerp(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    let k = ts.partition_point(|&s| s < t);
    if k == 0 {
        return ys[0];
    }
    if k >= ts.len() {
        return ys[ts.len() - 1];
    }
    if (ts[k] - t).abs() <= GRID_TOL {
        return ys[k];
    }
    let w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

/// Runs the master equation and the simulation for one configuration and
/// compares them. With `seeds` the simulation is a monitored ensemble,
/// otherwise a single unmonitored trajectory.
pub fn run_comparison(
    cfg: &DetectorConfig,
    opts: &RunOptions,
    seeds: Option<SeedSpec>,
    tolerance: f64,
    out: Option<&Path>,
) -> Result<DiscrepancyReport> {
    let spec = cfg.wavepacket();
    let reference = run_keldysh(cfg, cfg.fock_dims.probe)?;
    let sim = match seeds {
        Some(s) => ensemble_series(&run_ensemble_with(cfg, &spec, s.count, s.base, opts)?),
        None => record_series(&run_trajectory_with(cfg, &spec, 0, opts)?),
    };
    let report = compare_oracle(&sim, &reference, tolerance, false)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        reference.write_delimited(&dir.join("keldysh.csv"))?;
        write_table(&dir.join("simulation.csv"), &["t", "y_mean", "y_var"], &[&sim.t, &sim.y_mean, &sim.y_var])?;
        report.write(dir)?;
    }
    Ok(report)
}

/// Process exit status for an error: 2 for usage problems (bad arguments,
/// configuration or input files), 3 for failures during the computation.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse(_) => 2,
        _ => 3,
    }
}

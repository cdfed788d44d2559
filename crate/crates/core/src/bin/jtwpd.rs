use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jtwpd::conveyor::{BackendKind, RunOptions, SignalConvention};
use jtwpd::harness::{
    compare_oracle, exit_code, run_comparison, run_experiment, AnalyzeSpec, DesignSweep, ExperimentManifest, Mode,
    SeedSpec, OUTPUT_ROOT_VAR,
};
use jtwpd::keldysh::MomentSeries;
use jtwpd::model::{DetectorConfig, HardwareParams, PhotonInput};
use jtwpd::{Error, Result};

#[derive(Parser)]
#[command(name = "jtwpd", version, about = "Traveling-wave photodetector simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the perturbative master equation.
    Keldysh(ConfigArgs),
    /// Run one trajectory (monitored when kappa > 0).
    Trajectory {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a monitored trajectory ensemble.
    Ensemble {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_traj: usize,
        /// Keep every trajectory on disk.
        #[arg(long)]
        write_records: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Matched-filter detection statistics from two ensemble directories.
    Analyze {
        #[arg(long)]
        photon_dir: PathBuf,
        #[arg(long)]
        vacuum_dir: PathBuf,
        #[arg(long)]
        tau_m: Option<f64>,
        #[arg(long)]
        max_over_window: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Unit-cell count table over a gτ grid and a K_Q grid.
    Design {
        /// Hardware parameters (TOML); the reference coupler otherwise.
        #[arg(long)]
        hardware: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.0, 3.0])]
        g_tau: Vec<f64>,
        /// Coupler self-Kerr values K_Q/2π in MHz.
        #[arg(long, value_delimiter = ',')]
        k_q_mhz: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a simulation against the master equation.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Run a monitored ensemble of this size instead of one trajectory.
        #[arg(long)]
        n_traj: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Relative sup-norm tolerance.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Compare two existing series files instead of running anything.
        #[arg(long, requires = "keldysh_series")]
        mps_series: Option<PathBuf>,
        #[arg(long, requires = "mps_series")]
        keldysh_series: Option<PathBuf>,
        #[arg(long)]
        interpolate: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Execute a manifest file.
    Run { manifest: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    /// Base configuration (TOML); the flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    g_tau: Option<f64>,
    #[arg(long)]
    gamma_tau: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    n_sites: Option<usize>,
    #[arg(long)]
    probe_dim: Option<usize>,
    /// Extra simulated time after the photon has left.
    #[arg(long)]
    tail: Option<f64>,
    #[arg(long)]
    chi_ratio: Option<f64>,
    #[arg(long)]
    kerr_ratio: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kerr_sign: Option<f64>,
    #[arg(long)]
    max_bond: Option<usize>,
    #[arg(long)]
    svd_tol: Option<f64>,
    /// Vacuum input instead of a single photon.
    #[arg(long)]
    vacuum: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// mps or sector.
    #[arg(long, default_value = "mps")]
    backend: BackendKind,
    /// Use the √(2κ) current gain.
    #[arg(long)]
    innovation_gain: bool,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Vec<f64>,
}

impl RunArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            backend: self.backend,
            snapshot_times: self.snapshot_times.clone(),
            signal: if self.innovation_gain { SignalConvention::Innovation } else { SignalConvention::Standard },
            ..RunOptions::default()
        }
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<DetectorConfig> {
        let mut cfg = match &self.config {
            Some(p) => DetectorConfig::load(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            None => DetectorConfig::new(2.0, 4.0, 0.0, 100),
        };
        cfg.g_tau = self.g_tau.unwrap_or(cfg.g_tau);
        cfg.kappa_a_tau = self.kappa.unwrap_or(cfg.kappa_a_tau);
        cfg.chi_ratio = self.chi_ratio.unwrap_or(cfg.chi_ratio);
        cfg.kerr_ratio = self.kerr_ratio.unwrap_or(cfg.kerr_ratio);
        cfg.kerr_sign = self.kerr_sign.unwrap_or(cfg.kerr_sign);
        cfg.fock_dims.probe = self.probe_dim.unwrap_or(cfg.fock_dims.probe);
        cfg.truncation.max_bond = self.max_bond.unwrap_or(cfg.truncation.max_bond);
        cfg.truncation.svd_tol = self.svd_tol.unwrap_or(cfg.truncation.svd_tol);
        if self.vacuum {
            cfg.input = PhotonInput::Vacuum;
        }
        let retime = self.gamma_tau.is_some() || self.n_sites.is_some() || self.tail.is_some() || self.config.is_none();
        cfg.gamma_tau = self.gamma_tau.unwrap_or(cfg.gamma_tau);
        if let Some(n) = self.n_sites {
            cfg.n_sites = n;
            cfg.dt = 1.0 / n as f64;
        }
        if retime && cfg.n_sites > 0 && cfg.gamma_tau > 0.0 {
            cfg.n_steps = cfg.steps_for_tail(self.tail.unwrap_or(0.0));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `--out`, else `$JTWPD_OUTPUT_ROOT/<verb>-<tag>`, else `jtwpd-out/<verb>-<tag>`.
fn output_dir(explicit: &Option<PathBuf>, verb: &str, tag: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("jtwpd-out"), PathBuf::from);
    root.join(format!("{verb}-{tag}"))
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

fn run_manifest(m: &ExperimentManifest) -> Result<()> {
    let summary = run_experiment(m)?;
    println!("wrote {} ({})", summary.output_dir.display(), summary.files.join(", "));
    if let Some(r) = summary.report {
        print!("{}", r.to_key_values());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keldysh(a) => {
            let cfg = a.build()?;
            let mut m = ExperimentManifest::new(Mode::Keldysh, output_dir(&a.out, "keldysh", short(&cfg.config_hash())));
            m.config = Some(cfg);
            run_manifest(&m)
        }
        Command::Trajectory { cfg: a, seed, run } => {
            let cfg = a.build()?;
            let dir = output_dir(&a.out, "trajectory", short(&cfg.config_hash()));
            let mut m = if cfg.kappa_a_tau == 0.0 {
                ExperimentManifest::new(Mode::MpsDeterministic, dir)
            } else {
                let mut m = ExperimentManifest::new(Mode::MpsStochastic, dir);
                m.seeds = Some(SeedSpec { base: seed, count: 1 });
                m.write_records = true;
                m
            };
            apply_run(&mut m, &run);
            m.config = Some(cfg);
            run_manifest(&m)
        }
        Command::Ensemble { cfg: a, seed, n_traj, write_records, run } => {
            let cfg = a.build()?;
            let mut m = ExperimentManifest::new(Mode::MpsStochastic, output_dir(&a.out, "ensemble", short(&cfg.config_hash())));
            m.seeds = Some(SeedSpec { base: seed, count: n_traj });
            m.write_records = write_records;
            apply_run(&mut m, &run);
            m.config = Some(cfg);
            run_manifest(&m)
        }
        Command::Analyze { photon_dir, vacuum_dir, tau_m, max_over_window, out } => {
            let mut m = ExperimentManifest::new(Mode::Analyze, output_dir(&out, "analyze", "latest"));
            m.analyze = Some(AnalyzeSpec { photon_dir, vacuum_dir, tau_m, max_over_window });
            run_manifest(&m)
        }
        Command::Design { hardware, g_tau, k_q_mhz, out } => {
            let hw = match hardware {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    toml::from_str::<HardwareParams>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
                }
                None => reference_hardware(),
            };
            let k_q = k_q_mhz.iter().map(|k| 2.0 * std::f64::consts::PI * k * 1e6).collect();
            let mut m = ExperimentManifest::new(Mode::DesignSweep, output_dir(&out, "design", "latest"));
            m.design = Some(DesignSweep { hardware: hw, g_tau, k_q });
            run_manifest(&m)
        }
        Command::Compare { cfg: a, n_traj, seed, tolerance, mps_series, keldysh_series, interpolate, run } => {
            let report = match (mps_series, keldysh_series) {
                (Some(sim), Some(reference)) => {
                    let (s, r) = (read_series(&sim)?, read_series(&reference)?);
                    let report = compare_oracle(&s, &r, tolerance, interpolate)?;
                    if let Some(dir) = &a.out {
                        std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
                        report.write(dir)?;
                    }
                    report
                }
                _ => {
                    let cfg = a.build()?;
                    let dir = output_dir(&a.out, "compare", short(&cfg.config_hash()));
                    let seeds = n_traj.map(|count| SeedSpec { base: seed, count });
                    if seeds.is_some_and(|s| s.count == 0) {
                        return Err(Error::Config("--n-traj must be at least 1".into()));
                    }
                    let report = run_comparison(&cfg, &run.options(), seeds, tolerance, Some(&dir))?;
                    println!("wrote {}", dir.display());
                    report
                }
            };
            println!(
                "rel_y_mean = {:.4e}\nrel_y_var = {:.4e}\npass = {}",
                report.rel_y_mean, report.rel_y_var, report.pass
            );
            Ok(())
        }
        Command::Run { manifest } => {
            let m = ExperimentManifest::load(&manifest).map_err(|e| Error::Config(format!("{}: {e}", manifest.display())))?;
            run_manifest(&m)
        }
    }
}

fn apply_run(m: &mut ExperimentManifest, run: &RunArgs) {
    let o = run.options();
    m.backend = o.backend;
    m.signal = o.signal;
    m.snapshot_times = o.snapshot_times;
}

/// Reads either a master-equation series or a trajectory `series.csv`.
fn read_series(path: &Path) -> Result<MomentSeries> {
    let (h, c) = jtwpd::table::read_table(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let col = |name: &str| jtwpd::table::column(&h, &c, name).map(<[f64]>::to_vec);
    let t = col("t")?;
    let n = t.len();
    Ok(MomentSeries {
        y_mean: col("y_mean")?,
        y_var: col("y_var")?,
        x_mean: col("x_mean").unwrap_or_else(|_| vec![f64::NAN; n]),
        emitter_pop: vec![f64::NAN; n],
        min_eigenvalue: f64::NAN,
        t,
    })
}

/// Coupler with `I_s = 1.1 μA`, `α = 5`, `ω̄/2π = 5 GHz`, `Z = 50 Ω`, `K_Q/2π = 1 MHz`.
fn reference_hardware() -> HardwareParams {
    let two_pi = 2.0 * std::f64::consts::PI;
    HardwareParams::from_coupler_current(1.1e-6, 3, 5.0, two_pi * 5e9, 50.0, two_pi * 1e6)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jtwpd: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

//! Trotterized conveyor-belt evolution of a photon through the detector,
//! with the probe continuously monitored by homodyne detection.

pub mod backend;
pub mod ensemble;
pub mod gates;
pub mod plan;
pub mod record;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use backend::{Backend, MpsBackend, SectorBackend};
pub use ensemble::{run_ensemble, run_ensemble_with, EnsembleResult, TrajectoryFailure};
pub use gates::{
    build_emitter_gate, build_interaction_gate, homodyne_drift_op, homodyne_kraus_op, homodyne_operator, homodyne_update_op,
    norm_drift,
    CellGate, LadderOp, MomentSums, ProbeMoments, SignalConvention,
};
pub use plan::{plan_sweep, ConveyorPlan, Direction, ProbeOp, Sweep};
pub use record::{Snapshot, TrajectoryRecord};

use crate::error::{Error, Result};
use crate::model::{DetectorConfig, WavepacketSpec};
use crate::mps::MatrixProductState;
use crate::ops::CMatrix;

/// Largest systematic norm change allowed in one measurement update.
pub const DEFAULT_NORM_DRIFT_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Mps,
    /// Exact single-excitation representation.
    Sector,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mps" => Ok(BackendKind::Mps),
            "sector" => Ok(BackendKind::Sector),
            other => Err(Error::Parse(format!("unknown backend '{other}' (expected mps or sector)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub backend: BackendKind,
    /// Times at which full population snapshots are taken; each is served by
    /// the first sample time not earlier than it.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub signal: SignalConvention,
    pub norm_drift_limit: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            backend: BackendKind::Mps,
            snapshot_times: Vec::new(),
            signal: SignalConvention::Standard,
            norm_drift_limit: DEFAULT_NORM_DRIFT_LIMIT,
        }
    }
}

impl RunOptions {
    pub fn with_backend(mut self, backend: BackendKind) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }
}

/// What one step produces: probe moments at the end of the step and, when
/// the probe is monitored, the current sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub t: f64,
    pub moments: ProbeMoments,
    pub current: Option<f64>,
}

/// A trajectory in progress: schedule, gate cache and state.
pub struct Conveyor<B: Backend> {
    cfg: DetectorConfig,
    plan: ConveyorPlan,
    gates: Vec<CellGate>,
    backend: B,
    gap: i64,
    signal: SignalConvention,
    norm_drift_limit: f64,
}

impl Conveyor<MpsBackend> {
    pub fn mps(cfg: &DetectorConfig, spec: &WavepacketSpec) -> Result<Self> {
        let plan = ConveyorPlan::new(cfg, spec);
        let gates = gates::all_cell_gates(cfg);
        let backend = MpsBackend::new(cfg, &plan, &gates)?;
        Ok(Self::assemble(cfg, plan, gates, backend))
    }
}

impl Conveyor<SectorBackend> {
    pub fn sector(cfg: &DetectorConfig, spec: &WavepacketSpec) -> Self {
        Self::sector_with_tracking(cfg, spec, true)
    }

    /// Sector backend that, with `track_exited` off, merges modes once they
    /// leave the detector; snapshots are then unavailable.
    pub fn sector_with_tracking(cfg: &DetectorConfig, spec: &WavepacketSpec, track_exited: bool) -> Self {
        let plan = ConveyorPlan::new(cfg, spec);
        let gates = gates::all_cell_gates(cfg);
        let backend = SectorBackend::with_tracking(cfg, &plan, track_exited);
        Self::assemble(cfg, plan, gates, backend)
    }
}

impl<B: Backend> Conveyor<B> {
    fn assemble(cfg: &DetectorConfig, plan: ConveyorPlan, gates: Vec<CellGate>, backend: B) -> Self {
        let gap = plan.label_range().map_or(0, |(_, hi)| hi);
        Conveyor {
            cfg: cfg.clone(),
            plan,
            gates,
            backend,
            gap,
            signal: SignalConvention::Standard,
            norm_drift_limit: DEFAULT_NORM_DRIFT_LIMIT,
        }
    }

    pub fn with_options(mut self, opts: &RunOptions) -> Self {
        self.signal = opts.signal;
        self.norm_drift_limit = opts.norm_drift_limit;
        self
    }

    pub fn plan(&self) -> &ConveyorPlan {
        &self.plan
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    /// One time step: emission, half a homodyne update, self-Kerr of empty
    /// cells, the probe sweep through the occupied detector window, and the
    /// second half of the homodyne update.
    pub fn trotter_step<R: Rng>(&mut self, i: usize, rng: &mut R) -> Result<StepSample> {
        if i >= self.cfg.n_steps {
            return Err(Error::Domain(format!("step {i} beyond the last step {}", self.cfg.n_steps)));
        }
        if let Some((label, theta)) = self.plan.emission(i) {
            self.backend.emit(label, theta)?;
        }
        let monitored = self.cfg.kappa_a() > 0.0;
        let half = 0.5 * self.cfg.dt;
        // the measurement is split around the sweep so the photon's kick
        // sits at mid-step relative to the probe damping
        let first = if monitored { Some(homodyne_update(&mut self.backend, &self.cfg, half, rng, self.norm_drift_limit)?) } else { None };
        let cell_tau = self.cfg.dt / self.cfg.n_sites as f64;
        let window = self.plan.active_range(i);
        let visited = window.map_or(0, |(p, q)| (q - p + 1) as usize);
        self.backend.idle_kerr((self.cfg.n_sites - visited) as f64 * cell_tau)?;
        if let Some((p, q)) = window {
            let sweep = plan_sweep(self.gap, p, q);
            self.backend.sweep(&sweep, i, &self.plan, &self.gates)?;
            self.gap = sweep.end_gap;
        }
        let current = match first {
            Some((y1, dw1)) => {
                let (y2, dw2) = homodyne_update(&mut self.backend, &self.cfg, half, rng, self.norm_drift_limit)?;
                Some(self.signal.gain(self.cfg.kappa_a()) * 0.5 * (y1 + y2) + (dw1 + dw2) / self.cfg.dt)
            }
            None => None,
        };
        let moments = self.backend.probe_moments()?;
        Ok(StepSample { t: self.cfg.time(i + 1), moments, current })
    }

    /// Waveguide populations by label, emitter population, and the probe
    /// state, at the end of step `i`.
    pub fn snapshot(&mut self, i: usize) -> Result<Snapshot> {
        let (populations, emitter) = self.backend.populations()?;
        let labels: Vec<i64> = self.plan.label_range().map_or(Vec::new(), |(lo, hi)| (lo..=hi).collect());
        let positions = labels.iter().map(|&j| -0.5 + (j + i as i64 + 1) as f64 * self.cfg.dt).collect();
        Ok(Snapshot {
            t: self.cfg.time(i + 1),
            labels,
            positions,
            populations,
            emitter,
            probe: self.backend.probe_density()?,
        })
    }

    pub fn run(mut self, seed: u64, snapshot_times: &[f64]) -> Result<TrajectoryRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.cfg.n_steps;
        let mut rec = TrajectoryRecord::empty(&self.cfg, seed, n);
        let mut pending: Vec<f64> = snapshot_times.to_vec();
        pending.sort_by(f64::total_cmp);
        let mut next = 0;
        for i in 0..n {
            let s = self.trotter_step(i, &mut rng)?;
            rec.push(&s);
            while next < pending.len() && pending[next] <= s.t + 1e-12 {
                rec.snapshots.push(self.snapshot(i)?);
                next += 1;
            }
        }
        rec.discarded_weight = self.backend.discarded_weight();
        rec.max_bond = self.backend.max_bond();
        Ok(rec)
    }
}

/// One measurement update of the probe over `dt`; returns the pre-update
/// `⟨ŷ⟩` and the Wiener increment. The step size is vetted against the
/// Euler–Maruyama drift before the exact linear update is applied.
fn homodyne_update<B: Backend, R: Rng>(
    backend: &mut B,
    cfg: &DetectorConfig,
    dt: f64,
    rng: &mut R,
    limit: f64,
) -> Result<(f64, f64)> {
    let moments = backend.probe_moments()?;
    let dim = cfg.fock_dims.probe;
    let kappa = cfg.kappa_a();
    let drift = dt * dt * backend.expect_conjugated(&gates::homodyne_drift_op(dim, kappa, moments.y_mean))?;
    if drift > limit {
        return Err(Error::numerical(
            format!("homodyne step drifts the norm by {drift:.3e} (κΔt = {:.3e}); reduce the time step", kappa * dt),
            drift,
        ));
    }
    let dw = dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let norm2 = backend.apply_probe(&gates::homodyne_kraus_op(dim, kappa, dt, moments.y_mean, dw))?;
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(Error::numerical("homodyne step annihilated the probe state", norm2));
    }
    Ok((moments.y_mean, dw))
}

/// One homodyne update of the probe at chain position `probe_site`,
/// returning the current sample.
pub fn homodyne_substep<R: Rng>(
    mps: &mut MatrixProductState,
    probe_site: usize,
    cfg: &DetectorConfig,
    rng: &mut R,
) -> Result<f64> {
    if cfg.kappa_a() <= 0.0 {
        return Err(Error::Domain("homodyne update needs κ_a > 0".into()));
    }
    let mut probe = SingleSite { mps, site: probe_site };
    let (y, dw) = homodyne_update(&mut probe, cfg, cfg.dt, rng, DEFAULT_NORM_DRIFT_LIMIT)?;
    Ok(SignalConvention::Standard.gain(cfg.kappa_a()) * y + dw / cfg.dt)
}

/// Adapter exposing one site of a bare chain as the probe.
struct SingleSite<'a> {
    mps: &'a mut MatrixProductState,
    site: usize,
}

impl Backend for SingleSite<'_> {
    fn emit(&mut self, _: i64, _: f64) -> Result<()> {
        Err(Error::Domain("a bare chain has no emitter".into()))
    }

    fn idle_kerr(&mut self, _: f64) -> Result<()> {
        Ok(())
    }

    fn sweep(&mut self, _: &Sweep, _: usize, _: &ConveyorPlan, _: &[CellGate]) -> Result<()> {
        Err(Error::Domain("a bare chain has no conveyor schedule".into()))
    }

    fn probe_density(&mut self) -> Result<CMatrix> {
        self.mps.move_center(self.site);
        self.mps.reduced_density(self.site)
    }

    fn apply_probe(&mut self, op: &LadderOp) -> Result<f64> {
        self.mps.apply_single_site(self.site, &op.matrix(), true)
    }

    fn populations(&mut self) -> Result<(Vec<f64>, f64)> {
        Ok((self.mps.population_snapshot(), 0.0))
    }
}

/// Runs all steps with the default options (matrix product state backend).
pub fn run_trajectory(cfg: &DetectorConfig, spec: &WavepacketSpec, seed: u64) -> Result<TrajectoryRecord> {
    run_trajectory_with(cfg, spec, seed, &RunOptions::default())
}

pub fn run_trajectory_with(
    cfg: &DetectorConfig,
    spec: &WavepacketSpec,
    seed: u64,
    opts: &RunOptions,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut rec = match opts.backend {
        BackendKind::Mps => Conveyor::mps(cfg, spec)?.with_options(opts).run(seed, &opts.snapshot_times)?,
        BackendKind::Sector => Conveyor::sector_with_tracking(cfg, spec, !opts.snapshot_times.is_empty())
            .with_options(opts)
            .run(seed, &opts.snapshot_times)?,
    };
    rec.backend = opts.backend;
    Ok(rec)
}

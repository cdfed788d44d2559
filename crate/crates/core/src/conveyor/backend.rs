//! State representations the conveyor can drive.
//!
//! [`MpsBackend`] keeps the full chain (waveguide modes, emitter, probe) as a
//! matrix product state and moves the probe with swaps. [`SectorBackend`]
//! exploits that a single photon never leaves the one-excitation sector:
//! the state is `|e⟩⊗φ_e + |g,vac⟩⊗φ_v + Σ_j |g,1_j⟩⊗Φ_j` with one probe vector
//! per component, which makes it exact and cheap. Both consume the same
//! schedule and random numbers.

use nalgebra::DVector;

use crate::conveyor::gates::{emitter_gate_matrix, kerr_phases, CellGate, LadderOp, MomentSums, ProbeMoments};
use crate::conveyor::plan::{ConveyorPlan, ProbeOp, Sweep};
use crate::error::{Error, Result};
use crate::model::{DetectorConfig, PhotonInput};
use crate::mps::{basis_state, init_product_state, MatrixProductState, Side};
use crate::ops::{CMatrix, C64};

pub trait Backend {
    /// Moves `sin²θ` of the emitter excitation into waveguide mode `label`.
    fn emit(&mut self, label: i64, theta: f64) -> Result<()>;
    /// Self-Kerr evolution of the probe for `tau` (cells without a mode).
    fn idle_kerr(&mut self, tau: f64) -> Result<()>;
    /// Runs the probe through one sweep of interaction gates at step `step`.
    fn sweep(&mut self, sweep: &Sweep, step: usize, plan: &ConveyorPlan, gates: &[CellGate]) -> Result<()>;
    fn probe_density(&mut self) -> Result<CMatrix>;
    fn probe_moments(&mut self) -> Result<ProbeMoments> {
        Ok(ProbeMoments::of(&self.probe_density()?))
    }
    /// `tr(O ρ O†)` for the normalized probe state `ρ`.
    fn expect_conjugated(&mut self, op: &LadderOp) -> Result<f64> {
        let rho = self.probe_density()?;
        Ok(op.conjugate(&rho).trace().re / rho.trace().re)
    }
    /// Applies `op` to the probe, renormalizes, and returns the squared norm
    /// the state had before renormalization.
    fn apply_probe(&mut self, op: &LadderOp) -> Result<f64>;
    /// Photon number of every waveguide mode in ascending label order, and
    /// the emitter population.
    fn populations(&mut self) -> Result<(Vec<f64>, f64)>;
    fn discarded_weight(&self) -> f64 {
        0.0
    }
    fn max_bond(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Mode(i64),
    Emitter,
    Probe,
}

/// Cached two-site matrices of one cell in both site orders.
struct CellMatrices {
    mode_probe: CMatrix,
    probe_mode: CMatrix,
}

pub struct MpsBackend {
    mps: MatrixProductState,
    layout: Vec<Slot>,
    /// Sort key of the emitter: it sits between the last mode it fed and the
    /// next lower label, or below everything once the final mode is fed.
    emitter_key: f64,
    label_min: i64,
    kerr: f64,
    cells: Vec<CellMatrices>,
}

impl MpsBackend {
    pub fn new(cfg: &DetectorConfig, plan: &ConveyorPlan, gates: &[CellGate]) -> Result<Self> {
        let d = cfg.fock_dims.probe;
        let excited = cfg.input == PhotonInput::SinglePhoton && plan.n_modes() > 0;
        let mut layout: Vec<Slot> = match plan.label_range() {
            Some((lo, hi)) => (lo..=hi).map(Slot::Mode).collect(),
            None => Vec::new(),
        };
        layout.push(Slot::Emitter);
        layout.push(Slot::Probe);
        let dims: Vec<usize> = layout
            .iter()
            .map(|s| match s {
                Slot::Probe => d,
                _ => 2,
            })
            .collect();
        let states: Vec<Vec<C64>> = layout
            .iter()
            .map(|s| match s {
                Slot::Emitter => basis_state(2, usize::from(excited)),
                Slot::Probe => basis_state(d, 0),
                Slot::Mode(_) => basis_state(2, 0),
            })
            .collect();
        let mps = init_product_state(&dims, &states)?.with_truncation(cfg.truncation.max_bond, cfg.truncation.svd_tol);
        let emitter_key = plan.label_range().map_or(0.0, |(_, hi)| hi as f64 + 0.5);
        let cells =
            gates.iter().map(|g| CellMatrices { mode_probe: g.matrix(false), probe_mode: g.matrix(true) }).collect();
        let label_min = plan.label_range().map_or(0, |(lo, _)| lo);
        Ok(MpsBackend { mps, layout, emitter_key, label_min, kerr: cfg.kerr(), cells })
    }

    pub fn mps(&self) -> &MatrixProductState {
        &self.mps
    }

    pub fn probe_position(&self) -> usize {
        self.find(Slot::Probe).expect("chain always holds the probe")
    }

    fn find(&self, slot: Slot) -> Option<usize> {
        self.layout.iter().position(|&s| s == slot)
    }

    fn key(&self, slot: Slot) -> f64 {
        match slot {
            Slot::Mode(j) => j as f64,
            Slot::Emitter => self.emitter_key,
            Slot::Probe => f64::NAN,
        }
    }

    fn swap(&mut self, i: usize, center: Side) -> Result<()> {
        self.mps.swap_sites_centered(i, center)?;
        self.layout.swap(i, i + 1);
        Ok(())
    }

    /// Swaps the probe until every site with key `≤ gap` is on its left.
    fn move_probe_to_gap(&mut self, gap: i64) -> Result<()> {
        let target = self.layout.iter().filter(|&&s| s != Slot::Probe && self.key(s) <= gap as f64).count();
        let mut pos = self.probe_position();
        while pos > target {
            self.swap(pos - 1, Side::Left)?;
            pos -= 1;
        }
        while pos < target {
            self.swap(pos, Side::Right)?;
            pos += 1;
        }
        Ok(())
    }

    fn gate(&mut self, label: i64, cell: usize, swap: bool) -> Result<()> {
        let pos = self.probe_position();
        let m = &self.cells[cell];
        if pos > 0 && self.layout[pos - 1] == Slot::Mode(label) {
            let center = if swap { Side::Left } else { Side::Right };
            self.mps.apply_gate_matrix(pos - 1, &m.mode_probe, center, swap)?;
            if swap {
                self.layout.swap(pos - 1, pos);
            }
        } else if self.layout.get(pos + 1) == Some(&Slot::Mode(label)) {
            let center = if swap { Side::Right } else { Side::Left };
            self.mps.apply_gate_matrix(pos, &m.probe_mode, center, swap)?;
            if swap {
                self.layout.swap(pos, pos + 1);
            }
        } else {
            return Err(Error::Dimension(format!("mode {label} is not adjacent to the probe")));
        }
        Ok(())
    }
}

impl Backend for MpsBackend {
    fn emit(&mut self, label: i64, theta: f64) -> Result<()> {
        let e = self.find(Slot::Emitter).expect("chain always holds the emitter");
        if e == 0 || self.layout[e - 1] != Slot::Mode(label) {
            return Err(Error::Dimension(format!("mode {label} is not left of the emitter")));
        }
        self.mps.apply_gate_matrix(e - 1, &emitter_gate_matrix(theta), Side::Left, true)?;
        self.layout.swap(e - 1, e);
        self.emitter_key = if label == self.label_min { f64::NEG_INFINITY } else { label as f64 - 0.5 };
        Ok(())
    }

    fn idle_kerr(&mut self, tau: f64) -> Result<()> {
        if self.kerr == 0.0 || tau == 0.0 {
            return Ok(());
        }
        let pos = self.probe_position();
        let d = self.mps.phys_dim(pos);
        let op = CMatrix::from_diagonal(&DVector::from_vec(kerr_phases(d, self.kerr, tau)));
        self.mps.apply_single_site(pos, &op, false)?;
        Ok(())
    }

    fn sweep(&mut self, sweep: &Sweep, step: usize, plan: &ConveyorPlan, _gates: &[CellGate]) -> Result<()> {
        self.move_probe_to_gap(sweep.start_gap)?;
        for op in &sweep.ops {
            match *op {
                ProbeOp::GateSwap(j) => self.gate(j, plan.cell(step, j), true)?,
                ProbeOp::InPlace(j) => self.gate(j, plan.cell(step, j), false)?,
            }
        }
        Ok(())
    }

    fn probe_density(&mut self) -> Result<CMatrix> {
        let pos = self.probe_position();
        self.mps.move_center(pos);
        self.mps.reduced_density(pos)
    }

    fn apply_probe(&mut self, op: &LadderOp) -> Result<f64> {
        let pos = self.probe_position();
        self.mps.apply_single_site(pos, &op.matrix(), true)
    }

    fn populations(&mut self) -> Result<(Vec<f64>, f64)> {
        let pops = self.mps.population_snapshot();
        let mut modes: Vec<(i64, f64)> = Vec::new();
        let mut emitter = 0.0;
        for (slot, p) in self.layout.iter().zip(pops) {
            match *slot {
                Slot::Mode(j) => modes.push((j, p)),
                Slot::Emitter => emitter = p,
                Slot::Probe => {}
            }
        }
        modes.sort_by_key(|&(j, _)| j);
        Ok((modes.into_iter().map(|(_, p)| p).collect(), emitter))
    }

    fn discarded_weight(&self) -> f64 {
        self.mps.cum_discarded()
    }

    fn max_bond(&self) -> usize {
        self.mps.max_bond_dim()
    }
}

/// A probe vector together with the Kerr time it has been brought up to.
#[derive(Debug, Clone)]
struct Component {
    psi: DVector<C64>,
    clock: f64,
}

/// Global self-Kerr clock. Components catch up lazily; the phase vector of
/// the most recent lag is cached because untouched components share it.
#[derive(Debug, Clone)]
struct KerrClock {
    kerr: f64,
    now: f64,
    cached_tau: f64,
    cached: Vec<C64>,
}

impl KerrClock {
    fn phases(&mut self, dim: usize, tau: f64) -> &[C64] {
        if tau != self.cached_tau || self.cached.len() != dim {
            // consecutive phases differ by r^k with r = exp(-iKτ)
            let r = C64::from_polar(1.0, -self.kerr * tau);
            self.cached.clear();
            let (mut ph, mut step) = (C64::new(1.0, 0.0), C64::new(1.0, 0.0));
            for k in 0..dim {
                self.cached.push(ph);
                if k > 0 {
                    step *= r;
                }
                ph *= step;
            }
            self.cached_tau = tau;
        }
        &self.cached
    }

    fn sync(&mut self, c: &mut Component) {
        let tau = self.now - c.clock;
        if self.kerr != 0.0 && tau != 0.0 {
            let dim = c.psi.len();
            for (z, ph) in c.psi.iter_mut().zip(self.phases(dim, tau)) {
                *z *= ph;
            }
        }
        c.clock = self.now;
    }

    fn sync_density(&mut self, rho: &mut CMatrix, clock: &mut f64) {
        let tau = self.now - *clock;
        if self.kerr != 0.0 && tau != 0.0 {
            let d = rho.nrows();
            let ph = self.phases(d, tau).to_vec();
            for c in 0..d {
                for r in 0..d {
                    rho[(r, c)] *= ph[r] * ph[c].conj();
                }
            }
        }
        *clock = self.now;
    }
}

/// Where a waveguide mode's probe vector lives.
#[derive(Debug, Clone)]
enum ModeState {
    /// Not yet inside the detector: the vector is `coef·φ`, with `φ` the
    /// shared shape also carried by the emitter.
    Pending(C64),
    Live(Component),
    /// Past the detector and folded into the merged density matrix. The
    /// vector is kept only when per-mode populations are tracked.
    Exited(Option<Component>),
}

/// Exact representation of the single-excitation sector.
///
/// Between emission and entry into the detector a mode only sees operations
/// common to every component, so it stays proportional to the emitter's
/// probe vector and costs a single coefficient. Once it has left the
/// detector it is never addressed individually again and joins a merged
/// density matrix.
pub struct SectorBackend {
    kerr: KerrClock,
    /// Kerr time carried by one interaction gate, `Δt/N_x`.
    gate_tau: f64,
    /// Shared probe vector of the emitter and of pending modes.
    shape: Component,
    /// Emitter amplitude multiplying `shape`.
    emitter_amp: C64,
    vacuum: Component,
    /// Modes in emission order, i.e. descending label.
    modes: Vec<ModeState>,
    exited: CMatrix,
    exited_clock: f64,
    track_exited: bool,
    label_max: i64,
    label_min: i64,
}

impl SectorBackend {
    /// Backend that keeps every mode resolvable, so [`Backend::populations`]
    /// works at any time.
    pub fn new(cfg: &DetectorConfig, plan: &ConveyorPlan) -> Self {
        Self::with_tracking(cfg, plan, true)
    }

    /// With `track_exited` off, modes past the detector are merged and
    /// per-mode populations become unavailable; probe statistics are
    /// unaffected.
    pub fn with_tracking(cfg: &DetectorConfig, plan: &ConveyorPlan, track_exited: bool) -> Self {
        let dim = cfg.fock_dims.probe;
        let vac = DVector::from_vec(basis_state(dim, 0));
        let excited = cfg.input == PhotonInput::SinglePhoton && plan.n_modes() > 0;
        let (label_min, label_max) = plan.label_range().unwrap_or((0, -1));
        SectorBackend {
            kerr: KerrClock { kerr: cfg.kerr(), now: 0.0, cached_tau: f64::NAN, cached: Vec::new() },
            gate_tau: cfg.dt / cfg.n_sites as f64,
            shape: Component { psi: vac.clone(), clock: 0.0 },
            emitter_amp: C64::from(if excited { 1.0 } else { 0.0 }),
            vacuum: Component { psi: if excited { DVector::zeros(dim) } else { vac }, clock: 0.0 },
            modes: Vec::with_capacity(plan.n_modes()),
            exited: CMatrix::zeros(dim, dim),
            exited_clock: 0.0,
            track_exited,
            label_max,
            label_min,
        }
    }

    fn mode_index(&self, label: i64) -> Option<usize> {
        let k = usize::try_from(self.label_max - label).ok()?;
        (k < self.modes.len()).then_some(k)
    }

    /// Weight of the shape vector carried by the emitter and pending modes.
    fn shape_weight(&self) -> f64 {
        let pending: f64 = self
            .modes
            .iter()
            .map(|m| if let ModeState::Pending(c) = m { c.norm_sqr() } else { 0.0 })
            .sum();
        self.emitter_amp.norm_sqr() + pending
    }

    fn sync_all(&mut self) {
        self.kerr.sync(&mut self.shape);
        self.kerr.sync(&mut self.vacuum);
        self.kerr.sync_density(&mut self.exited, &mut self.exited_clock);
        for m in &mut self.modes {
            match m {
                ModeState::Live(c) | ModeState::Exited(Some(c)) => self.kerr.sync(c),
                _ => {}
            }
        }
    }

    /// Squared norm of the probe vector attached to mode `label`.
    pub fn mode_weight(&self, label: i64) -> Result<f64> {
        let Some(k) = self.mode_index(label) else { return Ok(0.0) };
        match &self.modes[k] {
            ModeState::Pending(c) => Ok(c.norm_sqr() * self.shape.psi.norm_squared()),
            ModeState::Live(c) | ModeState::Exited(Some(c)) => Ok(c.psi.norm_squared()),
            ModeState::Exited(None) => {
                Err(Error::Domain(format!("mode {label} was merged after leaving the detector; enable tracking")))
            }
        }
    }
}

impl Backend for SectorBackend {
    fn emit(&mut self, label: i64, theta: f64) -> Result<()> {
        if label != self.label_max - self.modes.len() as i64 {
            return Err(Error::Dimension(format!("mode {label} emitted out of order")));
        }
        let (s, c) = theta.sin_cos();
        self.modes.push(ModeState::Pending(self.emitter_amp * C64::new(0.0, -s)));
        self.emitter_amp *= C64::from(c);
        Ok(())
    }

    fn idle_kerr(&mut self, tau: f64) -> Result<()> {
        self.kerr.now += tau;
        Ok(())
    }

    fn sweep(&mut self, sweep: &Sweep, step: usize, plan: &ConveyorPlan, gates: &[CellGate]) -> Result<()> {
        for op in &sweep.ops {
            let j = match *op {
                ProbeOp::GateSwap(j) | ProbeOp::InPlace(j) => j,
            };
            let k = self.mode_index(j).ok_or_else(|| Error::Dimension(format!("mode {j} has not been emitted")))?;
            if let ModeState::Pending(coef) = self.modes[k] {
                self.kerr.sync(&mut self.shape);
                let psi = &self.shape.psi * coef;
                self.modes[k] = ModeState::Live(Component { psi, clock: self.kerr.now });
            }
            let ModeState::Live(c) = &mut self.modes[k] else {
                return Err(Error::Dimension(format!("mode {j} already left the detector")));
            };
            self.kerr.sync(c);
            c.psi = &gates[plan.cell(step, j)].active * &c.psi;
            self.kerr.now += self.gate_tau;
            c.clock = self.kerr.now;
        }
        // modes in the last cell are never addressed again
        let last = plan.n_sites as i64 - 1;
        for (k, m) in self.modes.iter_mut().enumerate() {
            let label = self.label_max - k as i64;
            if label + step as i64 >= last && matches!(m, ModeState::Live(_)) {
                let ModeState::Live(mut c) = std::mem::replace(m, ModeState::Exited(None)) else { unreachable!() };
                self.kerr.sync(&mut c);
                self.kerr.sync_density(&mut self.exited, &mut self.exited_clock);
                self.exited.gerc(C64::from(1.0), &c.psi, &c.psi, C64::from(1.0));
                if self.track_exited {
                    *m = ModeState::Exited(Some(c));
                }
            }
        }
        Ok(())
    }

    fn probe_density(&mut self) -> Result<CMatrix> {
        self.sync_all();
        let mut rho = self.exited.clone();
        let w = self.shape_weight();
        rho.gerc(C64::from(w), &self.shape.psi, &self.shape.psi, C64::from(1.0));
        rho.gerc(C64::from(1.0), &self.vacuum.psi, &self.vacuum.psi, C64::from(1.0));
        for m in &self.modes {
            if let ModeState::Live(c) = m {
                rho.gerc(C64::from(1.0), &c.psi, &c.psi, C64::from(1.0));
            }
        }
        Ok(rho)
    }

    fn probe_moments(&mut self) -> Result<ProbeMoments> {
        self.sync_all();
        let mut acc = MomentSums::default();
        acc.add_density(&self.exited);
        acc.add_vector(self.shape.psi.as_slice(), self.shape_weight());
        acc.add_vector(self.vacuum.psi.as_slice(), 1.0);
        for m in &self.modes {
            if let ModeState::Live(c) = m {
                acc.add_vector(c.psi.as_slice(), 1.0);
            }
        }
        Ok(acc.finish())
    }

    fn expect_conjugated(&mut self, op: &LadderOp) -> Result<f64> {
        self.sync_all();
        let sq = |psi: &DVector<C64>| op.apply(psi.as_slice()).iter().map(|z| z.norm_sqr()).sum::<f64>();
        let mut total = op.conjugate(&self.exited).trace().re + self.shape_weight() * sq(&self.shape.psi) + sq(&self.vacuum.psi);
        let mut trace = self.exited.trace().re
            + self.shape_weight() * self.shape.psi.norm_squared()
            + self.vacuum.psi.norm_squared();
        for m in &self.modes {
            if let ModeState::Live(c) = m {
                total += sq(&c.psi);
                trace += c.psi.norm_squared();
            }
        }
        Ok(total / trace)
    }

    fn apply_probe(&mut self, op: &LadderOp) -> Result<f64> {
        self.sync_all();
        op.apply_in_place(self.shape.psi.as_mut_slice());
        op.apply_in_place(self.vacuum.psi.as_mut_slice());
        self.exited = op.conjugate(&self.exited);
        let mut norm2 = self.shape_weight() * self.shape.psi.norm_squared()
            + self.vacuum.psi.norm_squared()
            + self.exited.trace().re;
        for m in &mut self.modes {
            if let ModeState::Live(c) = m {
                op.apply_in_place(c.psi.as_mut_slice());
                norm2 += c.psi.norm_squared();
            } else if let ModeState::Exited(Some(c)) = m {
                op.apply_in_place(c.psi.as_mut_slice());
            }
        }
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::numerical("probe update annihilated the state", norm2));
        }
        let f = 1.0 / norm2.sqrt();
        self.shape.psi *= C64::from(f);
        self.vacuum.psi *= C64::from(f);
        self.exited *= C64::from(f * f);
        for m in &mut self.modes {
            if let ModeState::Live(c) | ModeState::Exited(Some(c)) = m {
                c.psi *= C64::from(f);
            }
        }
        Ok(norm2)
    }

    fn populations(&mut self) -> Result<(Vec<f64>, f64)> {
        self.sync_all();
        let pops = (self.label_min..=self.label_max).map(|j| self.mode_weight(j)).collect::<Result<_>>()?;
        Ok((pops, self.emitter_amp.norm_sqr() * self.shape.psi.norm_squared()))
    }
}

//! Local unitaries and the homodyne measurement operator.

use crate::error::{Error, Result};
use crate::model::{cell_coupling, emitter_population, DetectorConfig, WavepacketSpec};
use crate::mps::TwoSiteGate;
use crate::ops::{annihilation, number, unitary_from_hermitian, CMatrix, C64};

/// The probe propagators of one detector cell for one time step: `U0` when
/// the waveguide mode in the cell is empty (self-Kerr only, diagonal) and
/// `U1` when it holds a photon.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGate {
    pub cell: usize,
    pub idle: Vec<C64>,
    pub active: CMatrix,
}

/// Diagonal of `exp(-i τ (K/2) a†²a²)`.
pub fn kerr_phases(dim: usize, kerr: f64, tau: f64) -> Vec<C64> {
    (0..dim)
        .map(|k| {
            let kf = k as f64;
            C64::from_polar(1.0, -0.5 * kerr * kf * (kf - 1.0) * tau)
        })
        .collect()
}

/// `Â(x_n) + Ĥ_r/N_x` with `Â = χ(a†a + α²) + g(x_n)(a + a†)`.
pub fn cell_hamiltonian(n: usize, cfg: &DetectorConfig) -> CMatrix {
    let dim = cfg.fock_dims.probe;
    let a = annihilation(dim);
    let num = number(dim);
    let (chi, alpha, kerr) = (cfg.chi(), cfg.alpha(), cfg.kerr());
    let g = cell_coupling(n, cfg);
    let mut h = (&a + a.adjoint()) * C64::from(g);
    h += (&num + CMatrix::identity(dim, dim) * C64::from(alpha * alpha)) * C64::from(chi);
    for k in 0..dim {
        let kf = k as f64;
        h[(k, k)] += C64::from(0.5 * kerr * kf * (kf - 1.0) / cfg.n_sites as f64);
    }
    h
}

pub fn cell_gate(n: usize, cfg: &DetectorConfig) -> CellGate {
    CellGate {
        cell: n,
        idle: kerr_phases(cfg.fock_dims.probe, cfg.kerr(), cfg.dt / cfg.n_sites as f64),
        active: unitary_from_hermitian(&cell_hamiltonian(n, cfg), cfg.dt),
    }
}

/// Gates for every detector cell. With uniform coupling all cells share one
/// matrix, which is computed once.
pub fn all_cell_gates(cfg: &DetectorConfig) -> Vec<CellGate> {
    let mut gates: Vec<CellGate> = Vec::with_capacity(cfg.n_sites);
    for n in 0..cfg.n_sites {
        let reuse = gates.last().filter(|_| cell_coupling(n, cfg) == cell_coupling(n - 1, cfg));
        let gate = match reuse {
            Some(prev) => CellGate { cell: n, ..prev.clone() },
            None => cell_gate(n, cfg),
        };
        gates.push(gate);
    }
    gates
}

impl CellGate {
    /// Full two-site matrix. `probe_first` selects the (probe, mode) ordering;
    /// otherwise the mode is the left factor.
    pub fn matrix(&self, probe_first: bool) -> CMatrix {
        let d = self.idle.len();
        let mut m = CMatrix::zeros(2 * d, 2 * d);
        let idx = |mode: usize, p: usize| if probe_first { p * 2 + mode } else { mode * d + p };
        for p in 0..d {
            m[(idx(0, p), idx(0, p))] = self.idle[p];
            for q in 0..d {
                m[(idx(1, p), idx(1, q))] = self.active[(p, q)];
            }
        }
        m
    }
}

/// Interaction gate of step `i` in detector cell `n`, on the (waveguide mode,
/// probe) pair. The returned gate targets chain site 0; callers relocate it.
pub fn build_interaction_gate(i: usize, n: usize, cfg: &DetectorConfig) -> Result<TwoSiteGate> {
    if n >= cfg.n_sites {
        return Err(Error::Domain(format!("cell {n} lies outside a detector of {} cells", cfg.n_sites)));
    }
    if i >= cfg.n_steps {
        return Err(Error::Domain(format!("step {i} beyond the last step {}", cfg.n_steps)));
    }
    Ok(TwoSiteGate::new(cell_gate(n, cfg).matrix(false), 0))
}

/// Excitation-conserving emitter gate on (waveguide mode, emitter): rotates
/// `|0,e⟩ ↔ |1,g⟩` by `θ` and leaves `|0,g⟩`, `|1,e⟩` alone.
pub fn emitter_gate_matrix(theta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    let mut m = CMatrix::identity(4, 4);
    // index = mode·2 + emitter, emitter 1 = excited
    m[(1, 1)] = C64::from(c);
    m[(2, 2)] = C64::from(c);
    m[(1, 2)] = C64::new(0.0, -s);
    m[(2, 1)] = C64::new(0.0, -s);
    m
}

/// Emitter gate for step `i`, with `cos²θ = P(t_{i+1})/P(t_i)` so that the
/// excited population follows the target decay exactly.
pub fn build_emitter_gate(i: usize, cfg: &DetectorConfig, spec: &WavepacketSpec) -> TwoSiteGate {
    let (p0, p1) = (emitter_population(cfg.time(i), spec), emitter_population(cfg.time(i + 1), spec));
    let theta = if p0 > 0.0 { (p1 / p0).clamp(0.0, 1.0).sqrt().acos() } else { 0.0 };
    TwoSiteGate::new(emitter_gate_matrix(theta), 0)
}

/// How the recorded homodyne current weighs the conditional signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalConvention {
    /// `J = √κ⟨ŷ⟩ + ΔW/Δt`.
    #[default]
    Standard,
    /// `J = √(2κ)⟨ŷ⟩ + ΔW/Δt`, the increment that drives the state update.
    Innovation,
}

impl SignalConvention {
    /// Prefactor of `⟨ŷ⟩` in the current.
    pub fn gain(self, kappa: f64) -> f64 {
        match self {
            SignalConvention::Standard => kappa.sqrt(),
            SignalConvention::Innovation => (2.0 * kappa).sqrt(),
        }
    }
}

/// Probe moments entering the measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeMoments {
    pub y_mean: f64,
    pub y_var: f64,
    pub x_mean: f64,
    pub n_mean: f64,
}

impl ProbeMoments {
    pub fn of(rho: &CMatrix) -> Self {
        let mut acc = MomentSums::default();
        acc.add_density(rho);
        acc.finish()
    }
}

/// Unnormalized sums of `tr ρ`, `⟨a⟩`, `⟨a²⟩` and `⟨a†a⟩` over the pieces
/// of a probe state.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentSums {
    tr: f64,
    a: C64,
    a2: C64,
    n: f64,
}

impl MomentSums {
    /// Adds `w·|ψ⟩⟨ψ|`.
    pub fn add_vector(&mut self, psi: &[C64], w: f64) {
        let d = psi.len();
        let (mut tr, mut a, mut a2, mut n) = (0.0, C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0);
        for k in 0..d {
            let p = psi[k].norm_sqr();
            tr += p;
            n += k as f64 * p;
            if k + 1 < d {
                a += psi[k].conj() * psi[k + 1] * (k as f64 + 1.0).sqrt();
            }
            if k + 2 < d {
                a2 += psi[k].conj() * psi[k + 2] * ((k as f64 + 1.0) * (k as f64 + 2.0)).sqrt();
            }
        }
        self.tr += w * tr;
        self.a += a * w;
        self.a2 += a2 * w;
        self.n += w * n;
    }

    pub fn add_density(&mut self, rho: &CMatrix) {
        let d = rho.nrows();
        for k in 0..d {
            self.tr += rho[(k, k)].re;
            self.n += k as f64 * rho[(k, k)].re;
            if k + 1 < d {
                self.a += rho[(k + 1, k)] * (k as f64 + 1.0).sqrt();
            }
            if k + 2 < d {
                self.a2 += rho[(k + 2, k)] * ((k as f64 + 1.0) * (k as f64 + 2.0)).sqrt();
            }
        }
    }

    pub fn finish(&self) -> ProbeMoments {
        let (a, a2, n) = (self.a / self.tr, self.a2 / self.tr, self.n / self.tr);
        // y² = (2a†a + 1 - a² - a†²)/2
        let y2 = n + 0.5 - a2.re;
        let y_mean = std::f64::consts::SQRT_2 * a.im;
        ProbeMoments { y_mean, y_var: y2 - y_mean * y_mean, x_mean: std::f64::consts::SQRT_2 * a.re, n_mean: n }
    }
}

/// Upper-triangular probe operator `Σ_j diag(b_j) a^j`, stored as bands:
/// `bands[j][k]` is the matrix element `⟨k|O|k+j⟩`. Measurement updates
/// only ever lower the photon number, so they all take this shape, and a
/// few bands suffice.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderOp {
    pub bands: Vec<Vec<C64>>,
}

impl LadderOp {
    /// `diag(d) + c·a`.
    pub fn ladder(diag: Vec<C64>, lower: C64) -> Self {
        let d = diag.len();
        let first = (0..d.saturating_sub(1)).map(|k| lower * (k as f64 + 1.0).sqrt()).collect();
        LadderOp { bands: vec![diag, first] }
    }

    /// Banded form of an upper-triangular matrix; bands whose entries all
    /// fall below `cutoff` times the largest element are dropped from the top.
    pub fn from_upper(m: &CMatrix, cutoff: f64) -> Self {
        let d = m.nrows();
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut bands: Vec<Vec<C64>> = (0..d).map(|j| (0..d - j).map(|k| m[(k, k + j)]).collect()).collect();
        while bands.len() > 1 && bands.last().unwrap().iter().all(|z| z.norm() <= cutoff * scale) {
            bands.pop();
        }
        LadderOp { bands }
    }

    pub fn dim(&self) -> usize {
        self.bands[0].len()
    }

    fn row(&self, psi: &[C64], k: usize) -> C64 {
        let reach = self.bands.len().min(psi.len() - k);
        let mut z = C64::new(0.0, 0.0);
        for j in 0..reach {
            z += self.bands[j][k] * psi[k + j];
        }
        z
    }

    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = psi.to_vec();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, psi: &mut [C64]) {
        // row k reads only entries at k and above, which are still untouched
        for k in 0..psi.len() {
            psi[k] = self.row(psi, k);
        }
    }

    /// `O ρ O†` for Hermitian `ρ`, in `O(bands·dim²)`.
    pub fn conjugate(&self, rho: &CMatrix) -> CMatrix {
        let d = rho.nrows();
        let mut left = CMatrix::zeros(d, d);
        for j in 0..d {
            let col: Vec<C64> = rho.column(j).iter().copied().collect();
            for i in 0..d {
                left[(i, j)] = self.row(&col, i);
            }
        }
        // (O L†)† = L O† gives the right multiplication from the same rows
        let mut out = CMatrix::zeros(d, d);
        for i in 0..d {
            let row: Vec<C64> = left.row(i).iter().map(|z| z.conj()).collect();
            for j in i..d {
                let z = self.row(&row, j).conj();
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        out
    }

    pub fn matrix(&self) -> CMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d, d);
        for (j, band) in self.bands.iter().enumerate() {
            for (k, &z) in band.iter().enumerate() {
                m[(k, k + j)] = z;
            }
        }
        m
    }
}

/// Euler–Maruyama operator of the ŷ-homodyne stochastic Schrödinger
/// equation with `L = -i√κ a`:
/// `M = 1 + (-κa†a/2 + mL/2 - m²/8)Δt + (L - m/2)ΔW`, `m = √(2κ)⟨ŷ⟩`.
pub fn homodyne_update_op(dim: usize, kappa: f64, dt: f64, y_mean: f64, dw: f64) -> LadderOp {
    let m = (2.0 * kappa).sqrt() * y_mean;
    LadderOp::ladder(
        (0..dim).map(|k| C64::from(1.0 - 0.5 * kappa * k as f64 * dt - m * m * dt / 8.0 - 0.5 * m * dw)).collect(),
        C64::new(0.0, -kappa.sqrt()) * (0.5 * m * dt + dw),
    )
}

/// Update operator that integrates the linear homodyne equation exactly over
/// one step for a given record increment `ΔY = m Δt + ΔW`:
/// `M = e^{-κΔt a†a/2} exp(-i√κ ΔZ a + κΔt' a²/2)` with
/// `Δt' = (1 - e^{-κΔt})/κ`, and `ΔZ` the damping-weighted record, taken as
/// `ΔY (1 - e^{-κΔt/2})/(κΔt/2)`. The result is unnormalized.
pub fn homodyne_kraus_op(dim: usize, kappa: f64, dt: f64, y_mean: f64, dw: f64) -> LadderOp {
    let m = (2.0 * kappa).sqrt() * y_mean;
    let x = 0.5 * kappa * dt;
    let weight = if x > 1e-12 { (-x).exp_m1() / -x } else { 1.0 - 0.5 * x };
    let dz = (m * dt + dw) * weight;
    let dt_eff = if kappa * dt > 1e-12 { -(-kappa * dt).exp_m1() / kappa } else { dt };
    let c1 = C64::new(0.0, -kappa.sqrt() * dz);
    let c2 = C64::from(0.5 * kappa * dt_eff);
    // a and a² commute, so exp(c1 a + c2 a²) = Σ_j P_j a^j with
    // P_j = Σ_{p+2q=j} c1^p c2^q / (p! q!)
    let mut p1 = vec![C64::from(1.0); dim];
    let mut p2 = vec![C64::from(1.0); dim / 2 + 1];
    for j in 1..dim {
        p1[j] = p1[j - 1] * c1 / j as f64;
    }
    for q in 1..p2.len() {
        p2[q] = p2[q - 1] * c2 / q as f64;
    }
    let damp: Vec<f64> = (0..dim).map(|k| (-0.5 * kappa * dt * k as f64).exp()).collect();
    let mut bands = Vec::new();
    for j in 0..dim {
        let pj: C64 = (0..=j / 2).map(|q| p1[j - 2 * q] * p2[q]).sum();
        // √((k+j)!/k!) for each row k
        let mut lift = (1..=j).map(|m| (m as f64).sqrt()).product::<f64>();
        let band: Vec<C64> = (0..dim - j)
            .map(|k| {
                if k > 0 {
                    lift *= ((k + j) as f64 / k as f64).sqrt();
                }
                pj * lift * damp[k]
            })
            .collect();
        if j > 0 && band.iter().all(|z| z.norm() < 1e-16) {
            break;
        }
        bands.push(band);
    }
    LadderOp { bands }
}

/// Dense form of [`homodyne_update_op`].
pub fn homodyne_operator(dim: usize, kappa: f64, dt: f64, y_mean: f64, dw: f64) -> CMatrix {
    homodyne_update_op(dim, kappa, dt, y_mean, dw).matrix()
}

/// Drift part `A = -κa†a/2 + mL/2 - m²/8` of the update operator.
pub fn homodyne_drift_op(dim: usize, kappa: f64, y_mean: f64) -> LadderOp {
    let m = (2.0 * kappa).sqrt() * y_mean;
    LadderOp::ladder(
        (0..dim).map(|k| C64::from(-0.5 * kappa * k as f64 - m * m / 8.0)).collect(),
        C64::new(0.0, -0.5 * m * kappa.sqrt()),
    )
}

/// Systematic norm change of one update, `E[‖Mψ‖²] - 1 = Δt²⟨A†A⟩` with `A`
/// from [`homodyne_drift_op`]. The terms linear in `ΔW` and in `ΔW² - Δt`
/// average out and are left alone.
pub fn norm_drift(rho: &CMatrix, kappa: f64, dt: f64, y_mean: f64) -> f64 {
    let a = homodyne_drift_op(rho.nrows(), kappa, y_mean);
    dt * dt * a.conjugate(rho).trace().re / rho.trace().re
}

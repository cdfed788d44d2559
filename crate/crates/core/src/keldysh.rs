//! The perturbative master equation for the emitter and probe after the
//! waveguide has been integrated out, plus the backaction-free Langevin
//! model and its detectors-in-series variant.
//!
//! The state is kept as two probe blocks in the emitter basis,
//! `ρ = |0⟩⟨0| ⊗ ρ₀₀ + |1⟩⟨1| ⊗ ρ₁₁`. Emitter coherences start at zero and the
//! generator never creates them, so nothing is lost by dropping them.

use std::f64::consts::SQRT_2;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::config::{DetectorConfig, PhotonInput};
use crate::model::wavepacket::{emitter_rate, noise_rate, photon_fraction, WavepacketSpec};
use crate::ops::{CMatrix, C64};
use crate::quad::adaptive_simpson;

/// Below this excited-emitter weight the conditional probe state is taken from
/// the ground block instead. The excited block only decays as a whole, so its
/// normalized shape stays accurate until the weight nears underflow.
pub const CONDITIONAL_FLOOR: f64 = 1e-280;
/// Default RK4 step in units of `τ`.
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_PROBE_DIM: usize = 30;

const TRACE_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KeldyshState {
    /// Probe block with the emitter in its ground state.
    pub ground: CMatrix,
    /// Probe block with the emitter excited.
    pub excited: CMatrix,
    pub t: f64,
}

impl KeldyshState {
    /// Emitter excited (or, for vacuum input, relaxed) and probe in the
    /// displaced vacuum at time `t`.
    pub fn initial(cfg: &DetectorConfig, probe_dim: usize, t: f64) -> Self {
        let mut vac = CMatrix::zeros(probe_dim, probe_dim);
        vac[(0, 0)] = C64::new(1.0, 0.0);
        let zero = CMatrix::zeros(probe_dim, probe_dim);
        match cfg.input {
            PhotonInput::SinglePhoton => KeldyshState { ground: zero, excited: vac, t },
            PhotonInput::Vacuum => KeldyshState { ground: vac, excited: zero, t },
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (2, self.ground.nrows())
    }

    pub fn trace(&self) -> f64 {
        (self.ground.trace() + self.excited.trace()).re
    }

    pub fn emitter_population(&self) -> f64 {
        self.excited.trace().re
    }

    /// Reduced probe state `tr_emitter ρ`.
    pub fn probe_state(&self) -> CMatrix {
        &self.ground + &self.excited
    }

    /// Full density operator on emitter ⊗ probe, emitter index slowest.
    pub fn density_matrix(&self) -> CMatrix {
        let n = self.ground.nrows();
        let mut rho = CMatrix::zeros(2 * n, 2 * n);
        rho.view_mut((0, 0), (n, n)).copy_from(&self.ground);
        rho.view_mut((n, n), (n, n)).copy_from(&self.excited);
        rho
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.ground - self.ground.adjoint()).camax().max((&self.excited - self.excited.adjoint()).camax())
    }

    /// Smallest eigenvalue of `ρ`.
    pub fn min_eigenvalue(&self) -> f64 {
        let lo = |m: &CMatrix| {
            let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
            h.symmetric_eigenvalues().min()
        };
        lo(&self.ground).min(lo(&self.excited))
    }

    /// Conditional probe state after an emission, `tr_emitter(ĉρĉ†)/⟨ĉ†ĉ⟩`.
    fn conditional(&self) -> CMatrix {
        let pe = self.excited.trace().re;
        if pe >= CONDITIONAL_FLOOR {
            &self.excited / C64::new(pe, 0.0)
        } else {
            let pg = self.ground.trace().re;
            &self.ground / C64::new(pg, 0.0)
        }
    }
}

/// Time derivative of the two probe blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub ground: CMatrix,
    pub excited: CMatrix,
}

impl Derivative {
    pub fn trace(&self) -> C64 {
        self.ground.trace() + self.excited.trace()
    }
}

// Banded probe operations; all are O(N²) instead of a dense product.

/// `(a + a†) ρ`.
fn x_left(rho: &CMatrix) -> CMatrix {
    let n = rho.nrows();
    CMatrix::from_fn(n, n, |i, j| {
        let mut v = C64::new(0.0, 0.0);
        if i + 1 < n {
            v += rho[(i + 1, j)] * ((i + 1) as f64).sqrt();
        }
        if i > 0 {
            v += rho[(i - 1, j)] * (i as f64).sqrt();
        }
        v
    })
}

/// `ρ (a + a†)`.
fn x_right(rho: &CMatrix) -> CMatrix {
    let n = rho.nrows();
    CMatrix::from_fn(n, n, |i, j| {
        let mut v = C64::new(0.0, 0.0);
        if j > 0 {
            v += rho[(i, j - 1)] * (j as f64).sqrt();
        }
        if j + 1 < n {
            v += rho[(i, j + 1)] * ((j + 1) as f64).sqrt();
        }
        v
    })
}

/// `D[a]ρ = aρa† - ½{a†a, ρ}`.
fn damping(rho: &CMatrix) -> CMatrix {
    let n = rho.nrows();
    CMatrix::from_fn(n, n, |i, j| {
        let mut v = rho[(i, j)] * (-0.5 * (i + j) as f64);
        if i + 1 < n && j + 1 < n {
            v += rho[(i + 1, j + 1)] * (((i + 1) * (j + 1)) as f64).sqrt();
        }
        v
    })
}

/// Time-dependent rates entering the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// `g · n_det(t)`.
    pub drive: f64,
    /// `Γ(t)`.
    pub noise: f64,
    /// `κ_c(t)`.
    pub emission: f64,
    pub kappa_a: f64,
}

impl Rates {
    pub fn at(t: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> Self {
        let photon = cfg.input == PhotonInput::SinglePhoton;
        Rates {
            drive: if photon { cfg.g() * photon_fraction(t, cfg, spec) } else { 0.0 },
            noise: if photon { noise_rate(t, cfg, spec) } else { 0.0 },
            emission: if photon { emitter_rate(t, spec) } else { 0.0 },
            kappa_a: cfg.kappa_a(),
        }
    }
}

fn apply_rates(state: &KeldyshState, r: &Rates) -> Derivative {
    let sigma = state.conditional();
    let xs = x_left(&sigma);
    let sx = x_right(&sigma);
    let xsx = x_right(&xs);
    let xxs = x_left(&xs);
    let sxx = x_right(&sx);
    let i = C64::new(0.0, 1.0);
    let commutator = (&xs - &sx) * (-i * r.drive);
    let dissipator = (xsx - (xxs + sxx) * C64::new(0.5, 0.0)) * C64::new(r.noise, 0.0);
    let ground = commutator
        + dissipator
        + &state.excited * C64::new(r.emission, 0.0)
        + damping(&state.ground) * C64::new(r.kappa_a, 0.0);
    let excited = &state.excited * C64::new(-r.emission, 0.0) + damping(&state.excited) * C64::new(r.kappa_a, 0.0);
    Derivative { ground, excited }
}

/// Right-hand side of the master equation,
/// `-i[g n_det X, ρ_c] + Γ D[X]ρ_c + κ_c D[ĉ]ρ + κ_a D[a]ρ` with `X = a + a†`.
pub fn generator_apply(state: &KeldyshState, cfg: &DetectorConfig, spec: &WavepacketSpec) -> Derivative {
    apply_rates(state, &Rates::at(state.t, cfg, spec))
}

/// Probe moments along a time grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentSeries {
    pub t: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_var: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub emitter_pop: Vec<f64>,
    /// Most negative eigenvalue of `ρ` seen on the grid.
    pub min_eigenvalue: f64,
}

impl MomentSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, m: Moments, emitter_pop: f64) {
        self.t.push(t);
        self.y_mean.push(m.y_mean);
        self.y_var.push(m.y_var);
        self.x_mean.push(m.x_mean);
        self.emitter_pop.push(emitter_pop);
    }

    /// Writes whitespace-free comma-separated columns
    /// `t, y_mean, y_var, x_mean, emitter_pop` with a header line.
    pub fn write_delimited(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,y_mean,y_var,x_mean,emitter_pop\n");
        for k in 0..self.len() {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                self.t[k], self.y_mean[k], self.y_var[k], self.x_mean[k], self.emitter_pop[k]
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_delimited(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = MomentSeries::default();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), ln + 1)))?;
            if v.len() != 5 {
                return Err(Error::Parse(format!("{}:{}: expected 5 columns", path.display(), ln + 1)));
            }
            s.push(v[0], Moments { y_mean: v[1], y_var: v[2], x_mean: v[3] }, v[4]);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub y_mean: f64,
    pub y_var: f64,
    pub x_mean: f64,
}

/// `⟨ŷ⟩`, `⟨Δŷ²⟩` and `⟨x̂⟩` of a single-mode density matrix.
pub fn probe_moments(rho: &CMatrix) -> Moments {
    let n = rho.nrows();
    // ⟨a⟩ = Σ √(k+1) ρ_{k+1,k}; ⟨a²⟩ = Σ √((k+1)(k+2)) ρ_{k+2,k}
    let mut a = C64::new(0.0, 0.0);
    let mut a2 = C64::new(0.0, 0.0);
    let mut num = 0.0;
    for k in 0..n {
        num += k as f64 * rho[(k, k)].re;
        if k + 1 < n {
            a += rho[(k + 1, k)] * ((k + 1) as f64).sqrt();
        }
        if k + 2 < n {
            a2 += rho[(k + 2, k)] * (((k + 1) * (k + 2)) as f64).sqrt();
        }
    }
    let tr = rho.trace().re;
    // y = i(a† - a)/√2  ⇒  ⟨y⟩ = √2 Im⟨a⟩,  ⟨y²⟩ = ½(2n + 1 - 2 Re⟨a²⟩)
    let y_mean = SQRT_2 * a.im;
    let x_mean = SQRT_2 * a.re;
    let y2 = 0.5 * (2.0 * num + tr) - a2.re;
    Moments { y_mean, y_var: y2 - y_mean * y_mean, x_mean }
}

fn rk4_step(state: &KeldyshState, h: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> KeldyshState {
    let shifted = |base: &KeldyshState, d: &Derivative, f: f64| KeldyshState {
        ground: &base.ground + &d.ground * C64::new(f, 0.0),
        excited: &base.excited + &d.excited * C64::new(f, 0.0),
        t: base.t + f,
    };
    let t = state.t;
    let mid = Rates::at(t + 0.5 * h, cfg, spec);
    let k1 = apply_rates(state, &Rates::at(t, cfg, spec));
    let s2 = shifted(state, &k1, 0.5 * h);
    let k2 = apply_rates(&s2, &mid);
    let s3 = shifted(state, &k2, 0.5 * h);
    let k3 = apply_rates(&s3, &mid);
    let s4 = shifted(state, &k3, h);
    let k4 = apply_rates(&s4, &Rates::at(t + h, cfg, spec));
    let w = |a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix| {
        (a + b * C64::new(2.0, 0.0) + c * C64::new(2.0, 0.0) + d) * C64::new(h / 6.0, 0.0)
    };
    KeldyshState {
        ground: &state.ground + w(&k1.ground, &k2.ground, &k3.ground, &k4.ground),
        excited: &state.excited + w(&k1.excited, &k2.excited, &k3.excited, &k4.excited),
        t: t + h,
    }
}

/// Integrates with fixed-step RK4 of at most `max_step` and records moments
/// at every point of `t_grid` (which must be nondecreasing and not precede
/// the initial state).
///
/// Trace and Hermiticity are checked at every grid point. The literal
/// equation is not guaranteed to keep `ρ` positive, so the smallest
/// eigenvalue is reported in the series instead of being enforced.
pub fn integrate_with_step(
    state0: &KeldyshState,
    cfg: &DetectorConfig,
    spec: &WavepacketSpec,
    t_grid: &[f64],
    max_step: f64,
) -> Result<MomentSeries> {
    if !(max_step > 0.0) {
        return Err(Error::Domain(format!("step must be positive, got {max_step}")));
    }
    let mut state = state0.clone();
    let mut series = MomentSeries { min_eigenvalue: state.min_eigenvalue(), ..Default::default() };
    for &target in t_grid {
        if target < state.t - 1e-12 {
            return Err(Error::Domain(format!("time grid goes backwards at t = {target}")));
        }
        let span = target - state.t;
        let n = (span / max_step).ceil().max(0.0) as usize;
        for _ in 0..n {
            let h = span / n as f64;
            state = rk4_step(&state, h, cfg, spec);
        }
        state.t = target;
        let trace_err = (state.trace() - 1.0).abs();
        if trace_err > TRACE_TOL {
            return Err(Error::numerical(format!("trace drifted at t = {target}"), trace_err));
        }
        let herm = state.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::numerical(format!("lost Hermiticity at t = {target}"), herm));
        }
        series.min_eigenvalue = series.min_eigenvalue.min(state.min_eigenvalue());
        series.push(target, probe_moments(&state.probe_state()), state.emitter_population());
    }
    Ok(series)
}

/// [`integrate_with_step`] with the default step of `10⁻³ τ`.
pub fn integrate(
    state0: &KeldyshState,
    cfg: &DetectorConfig,
    spec: &WavepacketSpec,
    t_grid: &[f64],
) -> Result<MomentSeries> {
    integrate_with_step(state0, cfg, spec, t_grid, DEFAULT_STEP)
}

/// Runs the master equation from the configuration's start time over its
/// sample grid.
pub fn run_keldysh(cfg: &DetectorConfig, probe_dim: usize) -> Result<MomentSeries> {
    let spec = cfg.wavepacket();
    let state = KeldyshState::initial(cfg, probe_dim, cfg.t_start());
    integrate(&state, cfg, &spec, &cfg.sample_times())
}

/// Earliest time at which `n_det` can be non-negligible.
fn first_overlap(spec: &WavepacketSpec) -> f64 {
    -0.5 - spec.x0 - 9.0 / spec.sigma
}

fn langevin(t: f64, g: f64, kappa: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> C64 {
    let lo = first_overlap(spec);
    if t <= lo {
        return C64::new(0.0, 0.0);
    }
    let integrand = |s: f64| (-0.5 * kappa * (t - s)).exp() * photon_fraction(s, cfg, spec);
    let panels = ((t - lo) * spec.sigma * 8.0).ceil().max(8.0) as usize;
    let value = adaptive_simpson(integrand, lo, t, 1e-12, panels);
    C64::new(0.0, -g * value)
}

/// Backaction-free probe amplitude
/// `⟨a(t)⟩ = -ig ∫ e^{-κ_a(t - t')/2} n_det(t') dt'`.
pub fn langevin_mean(t: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> C64 {
    langevin(t, cfg.g(), cfg.kappa_a(), cfg, spec)
}

/// Amplitude of the collective mode of `m` detectors in series: the single
/// detector result with `g → g/√M` and `κ_a → Mκ_a`.
pub fn series_displacement(m: u32, cfg: &DetectorConfig, spec: &WavepacketSpec, t: f64) -> Result<C64> {
    if m < 1 {
        return Err(Error::Domain("series detector count must be >= 1".into()));
    }
    let mf = m as f64;
    Ok(langevin(t, cfg.g() / mf.sqrt(), cfg.kappa_a() * mf, cfg, spec))
}

/// `⟨ŷ⟩ = √2 Im⟨a⟩` for an amplitude.
pub fn y_of(a: C64) -> f64 {
    SQRT_2 * a.im
}

/// Dense `D[L]ρ`, used by tests as an independent oracle for the banded
/// kernels.
pub fn dissipator_dense(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    let ll = &ld * l;
    l * rho * &ld - (&ll * rho + rho * &ll) * C64::new(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::wavepacket::emitter_population;
    use crate::ops::annihilation;

    fn random_state(n: usize, seed: u64) -> KeldyshState {
        let u = |k: u64| crate::seed::keyed_uniform(seed, k) - 0.5;
        let mk = |off: u64| {
            let m = CMatrix::from_fn(n, n, |i, j| C64::new(u(off + (i * n + j) as u64), u(off + 7777 + (i * n + j) as u64)));
            let h = &m * m.adjoint();
            let tr = h.trace();
            h / tr
        };
        KeldyshState { ground: mk(0) * C64::new(0.3, 0.0), excited: mk(100_000) * C64::new(0.7, 0.0), t: 0.0 }
    }

    #[test]
    fn banded_kernels_match_dense_products() {
        let n = 7;
        let s = random_state(n, 3);
        let a = annihilation(n);
        let x = &a + a.adjoint();
        assert!((x_left(&s.ground) - &x * &s.ground).camax() < 1e-14);
        assert!((x_right(&s.ground) - &s.ground * &x).camax() < 1e-14);
        assert!((damping(&s.excited) - dissipator_dense(&a, &s.excited)).camax() < 1e-14);
    }

    #[test]
    fn derivative_is_traceless_and_hermitian() {
        let cfg = DetectorConfig::new(2.0, 2.0, 0.7, 100);
        let spec = cfg.wavepacket();
        let mut s = random_state(8, 11);
        for t in [-1.0, 0.0, 1.3, 2.1] {
            s.t = t;
            let d = generator_apply(&s, &cfg, &spec);
            assert!(d.trace().norm() < 1e-12);
            assert!((&d.ground - d.ground.adjoint()).camax() < 1e-12);
        }
    }

    #[test]
    fn no_coupling_leaves_probe_alone() {
        let cfg = DetectorConfig::new(0.0, 4.0, 0.5, 100);
        let series = run_keldysh(&cfg, 6).unwrap();
        let spec = cfg.wavepacket();
        for k in 0..series.len() {
            assert!(series.y_mean[k].abs() < 1e-14);
            assert!((series.y_var[k] - 0.5).abs() < 1e-12);
            let expect = emitter_population(series.t[k], &spec);
            assert!((series.emitter_pop[k] - expect).abs() < 1e-8, "t {}", series.t[k]);
        }
    }

    #[test]
    fn plateau_matches_heisenberg_equation() {
        let cfg = DetectorConfig::new(1.0, 4.0, 0.0, 100).with_tail(0.5);
        let series = run_keldysh(&cfg, 16).unwrap();
        let last = *series.y_mean.last().unwrap();
        assert!((last.abs() - SQRT_2).abs() < 1e-6, "{last}");
        assert!(series.x_mean.iter().all(|x| x.abs() < 1e-10));
        assert!(series.y_var.iter().all(|v| *v >= 0.5 - 1e-10));
        // ⟨ŷ⟩ follows -√2 g ∫ n_det exactly
        let spec = cfg.wavepacket();
        for k in (0..series.len()).step_by(25) {
            let y = y_of(langevin_mean(series.t[k], &cfg, &spec));
            assert!((series.y_mean[k] - y).abs() < 1e-7);
        }
    }

    #[test]
    fn langevin_limits_and_series_scaling() {
        let cfg = DetectorConfig::new(2.0, 4.0, 0.0, 100);
        let spec = cfg.wavepacket();
        let late = 5.0 - spec.x0;
        let a = langevin_mean(late, &cfg, &spec);
        assert!((a - C64::new(0.0, -2.0)).norm() < 1e-9);
        assert_eq!(langevin_mean(-20.0, &cfg, &spec), C64::new(0.0, 0.0));
        for m in [1u32, 4, 9, 16] {
            let am = series_displacement(m, &cfg, &spec, late).unwrap();
            assert!((am.norm() / a.norm() - 1.0 / (m as f64).sqrt()).abs() < 1e-10);
        }
        assert!(series_displacement(0, &cfg, &spec, late).is_err());
        let damped = DetectorConfig::new(2.0, 4.0, 1.0, 100);
        assert_eq!(series_displacement(1, &damped, &spec, 1.0).unwrap(), langevin_mean(1.0, &damped, &spec));
    }

    #[test]
    fn moment_series_round_trip() {
        let mut s = MomentSeries::default();
        s.push(0.5, Moments { y_mean: -1.25, y_var: 0.75, x_mean: 1e-17 }, 0.125);
        s.push(1.0, Moments { y_mean: -2.5, y_var: 0.5, x_mean: 0.0 }, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        s.write_delimited(&path).unwrap();
        let back = MomentSeries::read_delimited(&path).unwrap();
        assert_eq!(back.t, s.t);
        assert_eq!(back.y_mean, s.y_mean);
        assert_eq!(back.emitter_pop, s.emitter_pop);
    }
}

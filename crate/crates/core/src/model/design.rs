//! Hardware design formulas in SI units: the SNAIL-style coupler, the probe
//! drive steady state, the per-cell cross-Kerr and the unit-cell count needed
//! to reach a target `gτ`.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Resistance quantum `h/e²` in ohms.
pub const RESISTANCE_QUANTUM: f64 = PLANCK / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
/// Reduced flux quantum `ħ/2e` in webers.
pub const REDUCED_FLUX_QUANTUM: f64 = HBAR / (2.0 * ELEMENTARY_CHARGE);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareParams {
    /// Large-junction Josephson energy, `E_J/h` in GHz.
    pub e_j_ghz: f64,
    /// Number of large junctions in the coupler loop.
    pub n_s: u32,
    /// Small-to-large junction ratio.
    pub beta: f64,
    /// Loop flux in radians.
    pub phi_x: f64,
    /// Probe displacement `α`.
    pub alpha_probe: f64,
    /// Photon centre frequency `ω̄` in rad/s.
    pub omega_bar: f64,
    /// Metamaterial characteristic impedance in ohms.
    pub z_tml: f64,
    pub r_k: f64,
    /// Coupler-induced probe self-Kerr in rad/s.
    pub k_q: f64,
    /// Junction-induced probe self-Kerr in rad/s (`≤ 0`).
    pub k_j: f64,
    /// Dimensionless zero-point flux of the probe at a cell.
    pub phi_r: f64,
    /// Unit cell length in metres.
    pub a_cell: f64,
    /// Metamaterial speed of light in m/s.
    pub v_phase: f64,
    /// Drive amplitude `ε` in rad/s.
    pub epsilon_drive: f64,
    /// Detuning `ω_r - ω_d` in rad/s.
    pub delta: f64,
}

impl HardwareParams {
    /// Coupler at its quartic operating point (`φ_x = π`, `β = 1/n_s`) with the
    /// Josephson energy chosen so that `E_Q/φ₀ = i_s`.
    pub fn from_coupler_current(i_s: f64, n_s: u32, alpha: f64, omega_bar: f64, z_tml: f64, k_q: f64) -> Self {
        let e_q = i_s * REDUCED_FLUX_QUANTUM;
        let n = n_s as f64;
        let e_j = e_q * n.powi(3) / (n * n - 1.0);
        HardwareParams {
            e_j_ghz: e_j / PLANCK / 1e9,
            n_s,
            beta: 1.0 / n,
            phi_x: PI,
            alpha_probe: alpha,
            omega_bar,
            z_tml,
            r_k: RESISTANCE_QUANTUM,
            k_q,
            k_j: 0.0,
            phi_r: 0.01,
            a_cell: 10e-6,
            v_phase: 1e6,
            epsilon_drive: 0.0,
            delta: 0.0,
        }
    }

    pub fn e_j_joules(&self) -> f64 {
        self.e_j_ghz * 1e9 * PLANCK
    }

    /// Coupler quartic energy `E_Q` in joules.
    pub fn e_q_joules(&self) -> Result<f64> {
        coupler_energy(self.e_j_joules(), self.n_s)
    }

    /// Total probe self-Kerr `K = K_Q + K_J`.
    pub fn total_kerr(&self) -> f64 {
        self.k_q + self.k_j
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s < 1 {
            return Err(Error::Domain("n_s must be >= 1".into()));
        }
        if !(self.z_tml > 0.0) {
            return Err(Error::Domain(format!("z_tml must be positive, got {}", self.z_tml)));
        }
        if (self.r_k - RESISTANCE_QUANTUM).abs() > 1e-6 * RESISTANCE_QUANTUM {
            return Err(Error::Domain(format!("r_k must equal h/e^2, got {}", self.r_k)));
        }
        if self.k_j > 0.0 {
            return Err(Error::Domain(format!("k_j must be <= 0, got {}", self.k_j)));
        }
        Ok(())
    }
}

/// Coupler quartic energy `E_Q = E_J (n_s² - 1)/n_s³`.
pub fn coupler_energy(e_j: f64, n_s: u32) -> Result<f64> {
    if n_s == 0 {
        return Err(Error::Domain("coupler needs at least one large junction (n_s >= 1)".into()));
    }
    if !(e_j > 0.0) {
        return Err(Error::Domain(format!("E_J must be positive, got {e_j}")));
    }
    let n = n_s as f64;
    Ok(e_j * (n * n - 1.0) / (n * n * n))
}

/// Coupler potential `U_Q(φ) = -βE_J cos(φ - φ_x) - n_s E_J cos(φ/n_s)`.
pub fn coupler_potential(phi: f64, e_j: f64, n_s: u32, beta: f64, phi_x: f64) -> f64 {
    let n = n_s as f64;
    -beta * e_j * (phi - phi_x).cos() - n * e_j * (phi / n).cos()
}

/// Probe steady state under drive, `K|α|²α + iκ_a α/2 = iε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// `|α|`, the root rotated onto the positive real axis.
    pub alpha: f64,
    /// The root before rotation.
    pub raw: C64,
    /// `|K|α|²α + iκα/2 - iε|`, relative to `ε`.
    pub residual: f64,
}

/// Solves the steady-state drive equation for `α`.
///
/// Writing `u = |α|²` gives `K²u³ + (κ²/4)u - ε² = 0`, which has exactly one
/// positive root for `κ > 0`; it is the branch connected to `α = 2ε/κ` at
/// `K = 0`. Newton iteration starts from that `K = 0` value and is safeguarded
/// by bisection.
pub fn steady_state_alpha(kerr: f64, kappa_a: f64, epsilon: f64) -> Result<SteadyState> {
    if !(kappa_a > 0.0) {
        return Err(Error::Domain(format!("kappa_a must be positive, got {kappa_a}")));
    }
    if epsilon == 0.0 {
        return Ok(SteadyState { alpha: 0.0, raw: C64::new(0.0, 0.0), residual: 0.0 });
    }
    let k2 = kerr * kerr;
    let q = 0.25 * kappa_a * kappa_a;
    let e2 = epsilon * epsilon;
    let poly = |u: f64| k2 * u * u * u + q * u - e2;
    let dpoly = |u: f64| 3.0 * k2 * u * u + q;
    let (mut lo, mut hi) = (0.0_f64, e2 / q);
    let mut u = hi;
    for _ in 0..200 {
        let f = poly(u);
        if f > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let mut next = u - f / dpoly(u);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - u).abs() <= 1e-16 * u.max(f64::MIN_POSITIVE) {
            u = next;
            break;
        }
        u = next;
    }
    let r = u.sqrt();
    // α = iε / (K r² + iκ/2)
    let raw = C64::new(0.0, epsilon) / C64::new(kerr * u, 0.5 * kappa_a);
    let residual_vec = raw * (kerr * raw.norm_sqr()) + C64::new(0.0, 0.5 * kappa_a) * raw - C64::new(0.0, epsilon);
    let residual = residual_vec.norm() / epsilon.abs();
    if residual > 1e-12 {
        return Err(Error::numerical("steady-state alpha did not converge", residual));
    }
    Ok(SteadyState { alpha: r, raw, residual })
}

/// Cross-Kerr rate per cell,
/// `ħχ = (v E_Q/a)(4π Z_tml / (R_K ω̄)) |φ_r|²`, returned in rad/s.
pub fn chi_per_cell(hw: &HardwareParams) -> Result<f64> {
    hw.validate()?;
    if !(hw.v_phase > 0.0 && hw.a_cell > 0.0 && hw.omega_bar > 0.0) || hw.phi_r < 0.0 {
        return Err(Error::Domain("v_phase, a_cell, omega_bar must be positive and phi_r >= 0".into()));
    }
    let e_q = hw.e_q_joules()?;
    Ok(hw.v_phase * e_q / (hw.a_cell * HBAR) * (4.0 * PI * hw.z_tml / (hw.r_k * hw.omega_bar))
        * hw.phi_r
        * hw.phi_r)
}

/// `gτ = α χ N a / v` for `n_cells` uniform cells in transmission.
pub fn g_tau_from_hardware(hw: &HardwareParams, n_cells: u64) -> Result<f64> {
    let chi = chi_per_cell(hw)?;
    let tau = n_cells as f64 * hw.a_cell / hw.v_phase;
    Ok(hw.alpha_probe * chi * tau)
}

/// Probe self-Kerr from identical couplers, `ħK_Q = Σ_n E_Q |φ_r|⁴`, in rad/s.
pub fn coupler_self_kerr(e_q: f64, phi_r: f64, n_cells: u64) -> f64 {
    n_cells as f64 * e_q * phi_r.powi(4) / HBAR
}

/// Unit cells needed to reach `gτ`, in reflection mode:
/// `N ≃ ½ (gτ/α · R_K/(8π Z_tml))² ω̄² / (K_Q E_Q/ħ)`, rounded up.
///
/// The factor `½` accounts for the doubled interaction time of a photon
/// reflected off an open termination.
pub fn n_cells_required(g_tau: f64, hw: &HardwareParams) -> Result<u64> {
    n_cells_estimate(g_tau, hw).map(|n| n.ceil() as u64)
}

/// The unrounded unit-cell estimate behind [`n_cells_required`].
pub fn n_cells_estimate(g_tau: f64, hw: &HardwareParams) -> Result<f64> {
    hw.validate()?;
    if !(hw.k_q > 0.0) {
        return Err(Error::Domain(format!("K_Q must be positive, got {}", hw.k_q)));
    }
    let e_q = hw.e_q_joules()?;
    if !(e_q > 0.0) {
        return Err(Error::Domain("E_Q must be positive (n_s >= 2)".into()));
    }
    if !(hw.alpha_probe > 0.0) {
        return Err(Error::Domain("alpha_probe must be positive".into()));
    }
    let ratio = g_tau / hw.alpha_probe * hw.r_k / (8.0 * PI * hw.z_tml);
    Ok(0.5 * ratio * ratio * hw.omega_bar * hw.omega_bar / (hw.k_q * e_q / HBAR))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(k_q_mhz: f64) -> HardwareParams {
        HardwareParams::from_coupler_current(1.1e-6, 3, 5.0, 2.0 * PI * 5e9, 50.0, 2.0 * PI * k_q_mhz * 1e6)
    }

    #[test]
    fn coupler_energy_values() {
        assert_eq!(coupler_energy(1.7, 1).unwrap(), 0.0);
        assert!((coupler_energy(1.0, 3).unwrap() - 8.0 / 27.0).abs() < 1e-15);
        assert!(matches!(coupler_energy(1.0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn coupler_potential_is_quartic_at_operating_point() {
        // Finite-difference oracle for the φ⁴ coefficient E_Q/24.
        let (e_j, n_s) = (1.0, 3u32);
        let beta = 1.0 / n_s as f64;
        let u = |p: f64| coupler_potential(p, e_j, n_s, beta, PI);
        let h = 1e-2;
        let d2 = (u(h) - 2.0 * u(0.0) + u(-h)) / (h * h);
        // The residual is the O(h²) quartic contribution E_Q h²/12.
        assert!(d2.abs() < 1e-5, "quadratic term {d2}");
        let h = 0.05;
        let d4 = (u(2.0 * h) - 4.0 * u(h) + 6.0 * u(0.0) - 4.0 * u(-h) + u(-2.0 * h)) / h.powi(4);
        let e_q = coupler_energy(e_j, n_s).unwrap();
        assert!((d4 - e_q).abs() < 2e-3 * e_q, "{d4} vs {e_q}");
    }

    #[test]
    fn reference_current_reproduces_e_q() {
        let hw = reference(1.0);
        let e_q = hw.e_q_joules().unwrap();
        assert!((e_q / REDUCED_FLUX_QUANTUM - 1.1e-6).abs() < 1e-15);
    }

    #[test]
    fn alpha_linear_limit() {
        let s = steady_state_alpha(0.0, 2.0, 3.0).unwrap();
        assert!((s.alpha - 3.0).abs() < 1e-14);
        let s = steady_state_alpha(1.0, 2.0, 0.0).unwrap();
        assert_eq!(s.alpha, 0.0);
        assert!(steady_state_alpha(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn alpha_root_against_companion_matrix() {
        // Oracle: eigenvalues of the companion matrix of K²u³ + (κ²/4)u - ε².
        for &(k, kappa, eps) in &[(0.3, 1.0, 2.0), (-2.0, 0.5, 1.5), (1e-3, 1.0, 40.0)] {
            let s = steady_state_alpha(k, kappa, eps).unwrap();
            assert!(s.residual < 1e-12);
            let k2 = k * k;
            let comp = nalgebra::Matrix3::new(
                0.0, 0.0, eps * eps / k2,
                1.0, 0.0, -(kappa * kappa / 4.0) / k2,
                0.0, 1.0, 0.0,
            );
            let roots = comp.complex_eigenvalues();
            let positive: Vec<f64> =
                roots.iter().filter(|z| z.im.abs() < 1e-9 && z.re > 0.0).map(|z| z.re).collect();
            assert_eq!(positive.len(), 1);
            assert!((positive[0].sqrt() - s.alpha).abs() < 1e-8 * s.alpha);
        }
    }

    #[test]
    fn chi_scaling_and_round_trip() {
        let mut hw = reference(1.0);
        hw.phi_r = 0.0;
        assert_eq!(chi_per_cell(&hw).unwrap(), 0.0);
        hw.phi_r = 0.02;
        let chi = chi_per_cell(&hw).unwrap();
        let mut doubled = hw.clone();
        doubled.e_j_ghz *= 2.0;
        assert!((chi_per_cell(&doubled).unwrap() / chi - 2.0).abs() < 1e-12);
        // g = αχ over N cells of length a at speed v
        let n = 3000;
        let g_tau = g_tau_from_hardware(&hw, n).unwrap();
        let expect = hw.alpha_probe * chi * n as f64 * hw.a_cell / hw.v_phase;
        assert!((g_tau - expect).abs() < 1e-12 * expect);
        // N cells needed for that gτ in transmission, from the same χ
        let n_back = g_tau / (hw.alpha_probe * chi * hw.a_cell / hw.v_phase);
        assert!((n_back - n as f64).abs() < 1e-6);
    }

    #[test]
    fn n_cells_order_and_scaling() {
        let hw = reference(1.0);
        for g in [1.0, 2.0, 3.0] {
            let n = n_cells_required(g, &hw).unwrap();
            assert!((100..10_000).contains(&n), "g {g}: {n}");
        }
        let n3 = n_cells_required(3.0, &hw).unwrap();
        assert!((1000..10_000).contains(&n3));
        let base = n_cells_estimate(2.0, &hw).unwrap();
        let quad = n_cells_estimate(2.0, &reference(4.0)).unwrap();
        assert!((base / quad - 4.0).abs() < 1e-12);
        let mut bad = hw.clone();
        bad.k_q = 0.0;
        assert!(matches!(n_cells_required(1.0, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn n_cells_monotone_on_grid() {
        let mut prev_k = u64::MAX;
        for k in 1..50 {
            let hw = reference(0.2 * k as f64);
            let n = n_cells_estimate(2.0, &hw).unwrap();
            let nn = n.ceil() as u64;
            assert!(nn <= prev_k);
            prev_k = nn;
            assert!(n_cells_estimate(2.1, &hw).unwrap() > n);
            assert!(n_cells_estimate(2.0, &reference(0.2 * k as f64 + 0.1)).unwrap() < n);
        }
    }
}

//! Gaussian single-photon wavepacket and the detector quantities derived from
//! it: the in-detector photon fraction `n_det(t)`, the backaction noise rate
//! `Γ(t)` and the emitter decay rate `κ_c(t)` that produces the pulse.

use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::model::config::DetectorConfig;
use crate::quad::adaptive_simpson;

pub type C64 = Complex<f64>;

/// A Gaussian wavepacket `ξ(t) = (2σ²/π)^{1/4} e^{-iω̄t} e^{-σ²(t + x₀)²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavepacketSpec {
    pub sigma: f64,
    pub omega_bar: f64,
    /// Emitter position, left of the detector entrance at `-1/2`.
    pub x0: f64,
}

/// Population threshold below which the emitter rate is capped.
const RATE_CAP_POPULATION: f64 = 1e-10;
/// Cap on `κ_c` in units of `σ`.
const RATE_CAP_SIGMAS: f64 = 50.0;

impl WavepacketSpec {
    pub fn new(sigma: f64, omega_bar: f64, x0: f64) -> Self {
        WavepacketSpec { sigma, omega_bar, x0 }
    }

    /// `σ = γ / (2√(2 ln 2))`.
    pub fn sigma_from_fwhm(gamma: f64) -> f64 {
        gamma / (2.0 * (2.0 * LN_2).sqrt())
    }

    /// Spectral FWHM `γ = 2√(2 ln 2) σ` of `|ξ(ω)|²`.
    pub fn spectral_fwhm(&self) -> f64 {
        2.0 * (2.0 * LN_2).sqrt() * self.sigma
    }

    /// FWHM of `|ξ(t)|²` in time, `√(2 ln 2)/σ`.
    pub fn temporal_fwhm(&self) -> f64 {
        (2.0 * LN_2).sqrt() / self.sigma
    }

    /// The emitter is placed so that the pulse emitted during step `l` crosses
    /// the detector during steps `l + |l₀| .. l + |l₀| + N_x`, matching the
    /// discrete conveyor schedule to second order in `Δt`.
    pub fn from_config(cfg: &DetectorConfig) -> Self {
        let l0 = cfg.emitter_site_offset.unsigned_abs() as f64;
        WavepacketSpec {
            sigma: cfg.sigma(),
            omega_bar: 0.0,
            x0: -0.5 - (l0 - 0.5) * cfg.dt,
        }
    }

    fn norm_density(&self) -> f64 {
        (2.0 * self.sigma * self.sigma / PI).sqrt()
    }

    /// `|ξ(x, t)|²` with `ξ(x, t) = ξ(t - x)`.
    pub fn intensity_at(&self, x: f64, t: f64) -> f64 {
        let u = t - x + self.x0;
        self.norm_density() * (-2.0 * self.sigma * self.sigma * u * u).exp()
    }
}

/// `ξ(t)` at the detector origin `x = 0`.
pub fn wavepacket_envelope(t: f64, spec: &WavepacketSpec) -> C64 {
    let amp = (2.0 * spec.sigma * spec.sigma / PI).powf(0.25);
    let u = t + spec.x0;
    C64::from_polar(amp * (-spec.sigma * spec.sigma * u * u).exp(), -spec.omega_bar * t)
}

/// `ξ(x, t) = ξ(t - x)`.
pub fn wavepacket_at(x: f64, t: f64, spec: &WavepacketSpec) -> C64 {
    wavepacket_envelope(t - x, spec)
}

/// Spectral intensity `|ξ(ω)|²`, normalized to unit area.
pub fn spectral_intensity(omega: f64, spec: &WavepacketSpec) -> f64 {
    let d = omega - spec.omega_bar;
    (-d * d / (2.0 * spec.sigma * spec.sigma)).exp() / (spec.sigma * (2.0 * PI).sqrt())
}

/// Probability the emitter is still excited at `t`, `∫_t^∞ |ξ_e|² = erfc(√2σt)/2`.
pub fn emitter_population(t: f64, spec: &WavepacketSpec) -> f64 {
    0.5 * libm::erfc(SQRT_2 * spec.sigma * t)
}

/// Emitter decay rate `κ_c(t) = √(8σ²/π) e^{-2σ²t²} / (1 - erf(√2σt))`.
///
/// Capped at `50σ` once the residual population drops below `1e-10`; the bare
/// formula grows without bound as `t → ∞`.
pub fn emitter_rate(t: f64, spec: &WavepacketSpec) -> f64 {
    let s = spec.sigma;
    let erfc = libm::erfc(SQRT_2 * s * t);
    let cap = RATE_CAP_SIGMAS * s;
    if erfc == 0.0 {
        return cap;
    }
    let rate = (8.0 * s * s / PI).sqrt() * (-2.0 * s * s * t * t).exp() / erfc;
    if 0.5 * erfc < RATE_CAP_POPULATION && t > 0.0 {
        rate.min(cap)
    } else {
        rate
    }
}

/// Bounds `(a, b)` of the Gaussian variable `u = x - t - x₀` over the detector.
fn detector_bounds(t: f64, spec: &WavepacketSpec) -> (f64, f64) {
    (-0.5 - t - spec.x0, 0.5 - t - spec.x0)
}

/// `∫_a^b √(2σ²/π) e^{-2σ²u²} du`, evaluated without cancellation in the tails.
fn gaussian_mass(a: f64, b: f64, sigma: f64) -> f64 {
    let (sa, sb) = (SQRT_2 * sigma * a, SQRT_2 * sigma * b);
    if sa >= 0.0 {
        0.5 * (libm::erfc(sa) - libm::erfc(sb))
    } else if sb <= 0.0 {
        0.5 * (libm::erfc(-sb) - libm::erfc(-sa))
    } else {
        0.5 * (libm::erf(sb) - libm::erf(sa))
    }
}

/// Fraction of the photon inside the detector at time `t`, `n_det(t)`.
pub fn photon_fraction(t: f64, _cfg: &DetectorConfig, spec: &WavepacketSpec) -> f64 {
    let (a, b) = detector_bounds(t, spec);
    gaussian_mass(a, b, spec.sigma).clamp(0.0, 1.0)
}

/// Below this probe decay rate `Γ(t)` switches to its `κ_a → 0` limit.
const KAPPA_LIMIT: f64 = 1e-7;

/// Backaction noise rate
/// `Γ(t) = (4g²/κ_a) ∫ [1 - e^{-κ_a(x + 1/2)/2}] |ξ(x, t)|² dx` over the detector,
/// in closed form.
pub fn noise_rate(t: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> f64 {
    let g = cfg.g();
    let kappa = cfg.kappa_a();
    let s = spec.sigma;
    let (a, b) = detector_bounds(t, spec);
    // x + 1/2 = u + m
    let m = t + spec.x0 + 0.5;
    if kappa < KAPPA_LIMIT {
        let first = s * s;
        let moment = (2.0 * s * s / PI).sqrt()
            * ((-2.0 * first * a * a).exp() - (-2.0 * first * b * b).exp())
            / (4.0 * first);
        let val = 2.0 * g * g * (m * gaussian_mass(a, b, s) + moment);
        return val.max(0.0);
    }
    let c = 0.5 * kappa;
    let shift = c / (4.0 * s * s);
    let weight = (-c * m + c * c / (8.0 * s * s)).exp();
    let damped = weight * gaussian_mass(a + shift, b + shift, s);
    (4.0 * g * g / kappa * (gaussian_mass(a, b, s) - damped)).max(0.0)
}

/// `Γ(t)` by adaptive quadrature of its defining integral; an independent
/// route to [`noise_rate`].
pub fn noise_rate_quadrature(t: f64, cfg: &DetectorConfig, spec: &WavepacketSpec) -> f64 {
    let g = cfg.g();
    let kappa = cfg.kappa_a();
    let integrand = |x: f64| {
        let bracket = if kappa == 0.0 {
            0.5 * (x + 0.5)
        } else {
            -(-0.5 * kappa * (x + 0.5)).exp_m1() / kappa
        };
        bracket * spec.intensity_at(x, t)
    };
    4.0 * g * g * adaptive_simpson(integrand, -0.5, 0.5, 1e-12, 32)
}

/// `n_det(t)` by quadrature, used to cross-check the closed form.
pub fn photon_fraction_quadrature(t: f64, spec: &WavepacketSpec) -> f64 {
    adaptive_simpson(|x| spec.intensity_at(x, t), -0.5, 0.5, 1e-12, 32)
}

/// Time at which the photon centre sits at position `x`.
pub fn centre_arrival(x: f64, spec: &WavepacketSpec) -> f64 {
    x - spec.x0
}

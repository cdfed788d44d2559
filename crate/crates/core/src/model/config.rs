//! Dimensionless simulation parameters.
//!
//! Units: the group velocity `v` and the interaction time `τ = z/v` are both 1,
//! so the detector occupies `x ∈ [-1/2, 1/2]` and every rate is measured in
//! units of `1/τ`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::wavepacket::WavepacketSpec;

/// Local Hilbert-space truncations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FockDims {
    pub waveguide: usize,
    pub probe: usize,
    pub emitter: usize,
}

impl Default for FockDims {
    fn default() -> Self {
        FockDims { waveguide: 2, probe: 16, emitter: 2 }
    }
}

/// Spatial dependence of the longitudinal coupling `g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingProfile {
    #[default]
    Uniform,
    /// `g(x) = 2 ḡ cos²(2πx) + μ(x)` with `μ` drawn uniformly from
    /// `[-f, f]·ḡ`, constant over each unit cell.
    CosineSquared { noise_fraction: f64, seed: u64 },
}

/// What the emitter starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhotonInput {
    #[default]
    SinglePhoton,
    Vacuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub max_bond: usize,
    /// Discarded squared singular-value weight allowed per bond update.
    pub svd_tol: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { max_bond: 64, svd_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Coupling times interaction time, `gτ`.
    pub g_tau: f64,
    /// Photon spectral FWHM times interaction time, `γτ`.
    pub gamma_tau: f64,
    /// Probe decay rate times interaction time, `κ_a τ`.
    pub kappa_a_tau: f64,
    /// `g/χ`; infinite means no cross-Kerr term.
    pub chi_ratio: f64,
    /// `|K|/κ_a`.
    pub kerr_ratio: f64,
    /// Sign of the probe self-Kerr, `+1` or `-1`.
    pub kerr_sign: f64,
    /// Waveguide cells inside the detector, `N_x`.
    pub n_sites: usize,
    pub n_steps: usize,
    /// Time step in units of `τ`; equals the cell length `Δx`.
    pub dt: f64,
    pub fock_dims: FockDims,
    /// Cell offset `l_0 < 0` of the emitter relative to the detector entrance.
    pub emitter_site_offset: i64,
    #[serde(default)]
    pub coupling_profile: CouplingProfile,
    #[serde(default)]
    pub input: PhotonInput,
    #[serde(default)]
    pub truncation: Truncation,
}

/// Residual emitter population at the first simulated instant.
const EMISSION_LEAD_TAIL: f64 = 1e-12;

impl DetectorConfig {
    /// A configuration with `χ = K = 0`, uniform coupling and a step count
    /// covering the full transit plus `tail` extra time units.
    pub fn new(g_tau: f64, gamma_tau: f64, kappa_a_tau: f64, n_sites: usize) -> Self {
        let mut cfg = DetectorConfig {
            g_tau,
            gamma_tau,
            kappa_a_tau,
            chi_ratio: f64::INFINITY,
            kerr_ratio: 0.0,
            kerr_sign: 1.0,
            n_sites,
            n_steps: 0,
            dt: 1.0 / n_sites as f64,
            fock_dims: FockDims::default(),
            emitter_site_offset: -2,
            coupling_profile: CouplingProfile::Uniform,
            input: PhotonInput::SinglePhoton,
            truncation: Truncation::default(),
        };
        cfg.n_steps = cfg.steps_for_tail(0.0);
        cfg
    }

    pub fn with_tail(mut self, tail: f64) -> Self {
        self.n_steps = self.steps_for_tail(tail);
        self
    }

    pub fn with_probe_dim(mut self, dim: usize) -> Self {
        self.fock_dims.probe = dim;
        self
    }

    pub fn with_nonlinearity(mut self, chi_ratio: f64, kerr_ratio: f64, kerr_sign: f64) -> Self {
        self.chi_ratio = chi_ratio;
        self.kerr_ratio = kerr_ratio;
        self.kerr_sign = kerr_sign;
        self
    }

    pub fn with_input(mut self, input: PhotonInput) -> Self {
        self.input = input;
        self
    }

    pub fn g(&self) -> f64 {
        self.g_tau
    }

    pub fn kappa_a(&self) -> f64 {
        self.kappa_a_tau
    }

    /// Cross-Kerr rate `χ = g/(g/χ)`.
    pub fn chi(&self) -> f64 {
        if self.chi_ratio.is_infinite() {
            0.0
        } else {
            self.g_tau / self.chi_ratio
        }
    }

    /// Probe displacement `α = g/χ` (zero when `χ = 0`, where it never enters).
    pub fn alpha(&self) -> f64 {
        if self.chi_ratio.is_infinite() {
            0.0
        } else {
            self.chi_ratio
        }
    }

    /// Signed self-Kerr `K`.
    pub fn kerr(&self) -> f64 {
        self.kerr_sign * self.kerr_ratio * self.kappa_a_tau
    }

    pub fn sigma(&self) -> f64 {
        WavepacketSpec::sigma_from_fwhm(self.gamma_tau)
    }

    pub fn wavepacket(&self) -> WavepacketSpec {
        WavepacketSpec::from_config(self)
    }

    /// First simulated instant. The emitted pulse peaks at `t = 0`; the lead
    /// leaves at most `1e-12` of the photon unemitted before the start.
    pub fn t_start(&self) -> f64 {
        let sigma = self.sigma();
        let lead = inverse_half_erfc(EMISSION_LEAD_TAIL) / (std::f64::consts::SQRT_2 * sigma);
        -(lead / self.dt).ceil() * self.dt
    }

    /// Time at the start of step `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.t_start() + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n_steps)
    }

    /// Time grid on which records are sampled: the end of every step.
    pub fn sample_times(&self) -> Vec<f64> {
        (1..=self.n_steps).map(|i| self.time(i)).collect()
    }

    /// Steps needed for the photon centre to cross the detector with a margin
    /// of three temporal FWHM on both sides, plus `tail`.
    pub fn steps_for_tail(&self, tail: f64) -> usize {
        let spec = self.wavepacket();
        let exit = -spec.x0 + 0.5;
        let end = exit + 3.0 * spec.temporal_fwhm() + tail;
        ((end - self.t_start()) / self.dt).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("g_tau", self.g_tau),
            ("kappa_a_tau", self.kappa_a_tau),
            ("kerr_ratio", self.kerr_ratio),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.gamma_tau > 0.0) || !self.gamma_tau.is_finite() {
            return bad(format!("gamma_tau must be positive, got {}", self.gamma_tau));
        }
        if !(self.chi_ratio > 0.0) {
            return bad(format!("chi_ratio must be positive (inf for chi = 0), got {}", self.chi_ratio));
        }
        if self.kerr_sign != 1.0 && self.kerr_sign != -1.0 {
            return bad(format!("kerr_sign must be +1 or -1, got {}", self.kerr_sign));
        }
        if self.n_sites == 0 {
            return bad("n_sites must be positive".into());
        }
        if ((self.dt * self.n_sites as f64) - 1.0).abs() > 1e-9 {
            return bad(format!(
                "dt * n_sites must equal the interaction time 1 (dx = v dt), got {}",
                self.dt * self.n_sites as f64
            ));
        }
        let f = self.fock_dims;
        if f.waveguide < 2 || f.probe < 2 || f.emitter < 2 {
            return bad(format!("fock_dims must all be >= 2, got {f:?}"));
        }
        if self.emitter_site_offset >= 0 {
            return bad(format!("emitter_site_offset must be negative, got {}", self.emitter_site_offset));
        }
        let needed = self.steps_for_tail(0.0);
        if self.n_steps < needed {
            return bad(format!(
                "n_steps = {} does not cover the photon transit with margin (need >= {needed})",
                self.n_steps
            ));
        }
        if let CouplingProfile::CosineSquared { noise_fraction, .. } = self.coupling_profile {
            if !(0.0..1.0).contains(&noise_fraction) {
                return bad(format!("noise_fraction must lie in [0, 1), got {noise_fraction}"));
            }
        }
        if self.truncation.max_bond == 0 || !(self.truncation.svd_tol >= 0.0) {
            return bad(format!("invalid truncation settings {:?}", self.truncation));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the TOML serialization; identifies the configuration
    /// in every artifact derived from it.
    pub fn config_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Solves `erfc(y)/2 = p` for `y` by bisection (used only for small `p`).
fn inverse_half_erfc(p: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 30.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * libm::erfc(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

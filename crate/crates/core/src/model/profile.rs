//! Spatial coupling profile `g(x)`.

use std::f64::consts::PI;

use crate::model::config::{CouplingProfile, DetectorConfig};
use crate::seed::keyed_uniform;

/// Longitudinal coupling at position `x`; zero outside the detector.
pub fn coupling_profile(x: f64, cfg: &DetectorConfig) -> f64 {
    if x.abs() > 0.5 {
        return 0.0;
    }
    let g = cfg.g();
    match cfg.coupling_profile {
        CouplingProfile::Uniform => g,
        CouplingProfile::CosineSquared { noise_fraction, seed } => {
            let c = (2.0 * PI * x).cos();
            let cell = (((x + 0.5) / cfg.dt).floor() as i64).clamp(0, cfg.n_sites as i64 - 1);
            let mu = (2.0 * keyed_uniform(seed, cell as u64) - 1.0) * noise_fraction * g;
            2.0 * g * c * c + mu
        }
    }
}

/// Coupling of detector cell `n`, sampled at the cell's left edge `x_n`.
pub fn cell_coupling(n: usize, cfg: &DetectorConfig) -> f64 {
    coupling_profile(cell_position(n, cfg), cfg)
}

/// Left edge `x_n = -1/2 + nΔx` of detector cell `n`.
pub fn cell_position(n: usize, cfg: &DetectorConfig) -> f64 {
    -0.5 + n as f64 * cfg.dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;

    #[test]
    fn uniform_is_constant_inside() {
        let cfg = DetectorConfig::new(2.5, 2.0, 0.0, 50);
        for k in 0..=20 {
            let x = -0.5 + k as f64 * 0.05;
            assert_eq!(coupling_profile(x, &cfg), 2.5);
        }
        assert_eq!(coupling_profile(0.51, &cfg), 0.0);
        assert_eq!(coupling_profile(-0.7, &cfg), 0.0);
    }

    #[test]
    fn cosine_profile_averages_to_mean() {
        let mut cfg = DetectorConfig::new(2.0, 2.0, 0.0, 400);
        cfg.coupling_profile = CouplingProfile::CosineSquared { noise_fraction: 0.0, seed: 1 };
        let mean = adaptive_simpson(|x| coupling_profile(x, &cfg), -0.5, 0.5, 1e-12, 16);
        assert!((mean - 2.0).abs() < 1e-10, "{mean}");
        let cells: f64 = (0..400).map(|n| cell_coupling(n, &cfg)).sum::<f64>() / 400.0;
        assert!((cells - 2.0).abs() < 1e-10);
    }

    #[test]
    fn noise_is_reproducible_and_bounded() {
        let mut cfg = DetectorConfig::new(2.0, 2.0, 0.0, 200);
        cfg.coupling_profile = CouplingProfile::CosineSquared { noise_fraction: 0.1, seed: 77 };
        let a: Vec<f64> = (0..200).map(|n| cell_coupling(n, &cfg)).collect();
        let b: Vec<f64> = (0..200).map(|n| cell_coupling(n, &cfg)).collect();
        assert_eq!(a, b);
        let mut clean = cfg.clone();
        clean.coupling_profile = CouplingProfile::CosineSquared { noise_fraction: 0.0, seed: 77 };
        let mut any_diff = false;
        for n in 0..200 {
            let d = a[n] - cell_coupling(n, &clean);
            assert!(d.abs() <= 0.2 + 1e-12);
            any_diff |= d.abs() > 1e-6;
        }
        assert!(any_diff);
        cfg.coupling_profile = CouplingProfile::CosineSquared { noise_fraction: 0.1, seed: 78 };
        assert_ne!(a[10], cell_coupling(10, &cfg));
    }
}

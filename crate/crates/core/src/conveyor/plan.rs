//! The conveyor-belt schedule.
//!
//! Waveguide modes are labelled by `j`; during step `i` mode `j` sits in
//! detector cell `n = j + i`, so the pattern of occupied modes slides one
//! cell to the right per step. The emitter feeds mode `l₀ - i` during step
//! `i`. Only labels that ever receive amplitude are kept in the chain.

use crate::model::{emitter_population, DetectorConfig, PhotonInput, WavepacketSpec};

/// Per-step emission probability below which a step is treated as idle.
pub const EMISSION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConveyorPlan {
    pub n_sites: usize,
    pub n_steps: usize,
    pub l0: i64,
    first_emission: usize,
    /// Mixing angle of the emitter gate for each emitting step.
    angles: Vec<f64>,
}

/// One probe action during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeOp {
    /// Interact with the mode and hop over it.
    GateSwap(i64),
    /// Interact with the neighbouring mode without moving.
    InPlace(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

/// How the probe visits the labels `p..=q` of one step. Probe positions are
/// measured by a gap `g`: every label `≤ g` lies to its left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub direction: Direction,
    pub start_gap: i64,
    pub end_gap: i64,
    pub ops: Vec<ProbeOp>,
}

impl ConveyorPlan {
    pub fn new(cfg: &DetectorConfig, spec: &WavepacketSpec) -> Self {
        let mut plan = ConveyorPlan {
            n_sites: cfg.n_sites,
            n_steps: cfg.n_steps,
            l0: cfg.emitter_site_offset,
            first_emission: 0,
            angles: Vec::new(),
        };
        if cfg.input == PhotonInput::Vacuum {
            return plan;
        }
        let pop: Vec<f64> = (0..=cfg.n_steps).map(|i| emitter_population(cfg.time(i), spec)).collect();
        let active: Vec<usize> = (0..cfg.n_steps).filter(|&i| pop[i] - pop[i + 1] > EMISSION_FLOOR).collect();
        let (Some(&first), Some(&last)) = (active.first(), active.last()) else {
            return plan;
        };
        plan.first_emission = first;
        plan.angles = (first..=last)
            .map(|i| {
                if i == last || pop[i] <= 0.0 {
                    std::f64::consts::FRAC_PI_2
                } else {
                    (pop[i + 1] / pop[i]).clamp(0.0, 1.0).sqrt().acos()
                }
            })
            .collect();
        plan
    }

    /// Number of waveguide modes that receive amplitude.
    pub fn n_modes(&self) -> usize {
        self.angles.len()
    }

    /// Inclusive label range `(min, max)`, or `None` without emission.
    pub fn label_range(&self) -> Option<(i64, i64)> {
        if self.angles.is_empty() {
            return None;
        }
        let max = self.l0 - self.first_emission as i64;
        Some((max - self.angles.len() as i64 + 1, max))
    }

    /// `(label, θ)` fed by the emitter during step `i`. The gate moves
    /// `sin²θ` of the remaining excitation into the waveguide.
    pub fn emission(&self, i: usize) -> Option<(i64, f64)> {
        let k = i.checked_sub(self.first_emission)?;
        self.angles.get(k).map(|&theta| (self.l0 - i as i64, theta))
    }

    /// Labels inside the detector during step `i`, clipped to the chain.
    pub fn active_range(&self, i: usize) -> Option<(i64, i64)> {
        let (lmin, lmax) = self.label_range()?;
        let i = i as i64;
        let lo = lmin.max(-i);
        let hi = lmax.min(self.n_sites as i64 - 1 - i);
        (lo <= hi).then_some((lo, hi))
    }

    /// Detector cell holding `label` during step `i`.
    pub fn cell(&self, i: usize, label: i64) -> usize {
        (label + i as i64) as usize
    }
}

/// Chooses the cheapest way to sweep the probe across `p..=q` from `gap`.
/// Candidate starts are tried in a fixed order so ties resolve
/// deterministically.
pub fn plan_sweep(gap: i64, p: i64, q: i64) -> Sweep {
    debug_assert!(p <= q);
    let candidates = [
        (Direction::Left, q),
        (Direction::Left, q - 1),
        (Direction::Right, p - 1),
        (Direction::Right, p),
    ];
    let (direction, start_gap) =
        candidates.into_iter().min_by_key(|&(_, s)| (s - gap).abs()).expect("candidate list is not empty");
    let mut ops = Vec::with_capacity((q - p + 1) as usize);
    let end_gap = match direction {
        Direction::Left => {
            let mut top = q;
            if start_gap == q - 1 {
                ops.push(ProbeOp::InPlace(q));
                top = q - 1;
            }
            ops.extend((p..=top).rev().map(ProbeOp::GateSwap));
            p - 1
        }
        Direction::Right => {
            let mut bottom = p;
            if start_gap == p {
                ops.push(ProbeOp::InPlace(p));
                bottom = p + 1;
            }
            ops.extend((bottom..=q).map(ProbeOp::GateSwap));
            q
        }
    };
    Sweep { direction, start_gap, end_gap, ops }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emission_angles_empty_the_emitter() {
        let cfg = DetectorConfig::new(2.0, 4.0, 0.0, 50);
        let spec = cfg.wavepacket();
        let plan = ConveyorPlan::new(&cfg, &spec);
        let (lmin, lmax) = plan.label_range().unwrap();
        assert_eq!((lmax - lmin + 1) as usize, plan.n_modes());
        let mut remaining = 1.0;
        let mut fed = Vec::new();
        for i in 0..cfg.n_steps {
            if let Some((label, theta)) = plan.emission(i) {
                fed.push(label);
                remaining *= theta.cos().powi(2);
            }
        }
        assert!(remaining < 1e-20);
        assert_eq!(fed.len(), plan.n_modes());
        assert!(fed.windows(2).all(|w| w[1] == w[0] - 1));
    }

    #[test]
    fn vacuum_has_no_modes() {
        let cfg = DetectorConfig::new(2.0, 4.0, 1.0, 50).with_input(PhotonInput::Vacuum);
        let plan = ConveyorPlan::new(&cfg, &cfg.wavepacket());
        assert_eq!(plan.n_modes(), 0);
        assert!(plan.active_range(10).is_none());
    }

    #[test]
    fn sweeps_cover_the_window_once() {
        for gap in -8..8 {
            for (p, q) in [(-3, 2), (0, 0), (1, 4)] {
                let s = plan_sweep(gap, p, q);
                let mut seen: Vec<i64> = s
                    .ops
                    .iter()
                    .map(|op| match *op {
                        ProbeOp::GateSwap(j) | ProbeOp::InPlace(j) => j,
                    })
                    .collect();
                seen.sort();
                assert_eq!(seen, (p..=q).collect::<Vec<_>>());
                // replay gap bookkeeping
                let mut g = s.start_gap;
                for op in &s.ops {
                    match *op {
                        ProbeOp::InPlace(j) => assert!(j == g || j == g + 1),
                        ProbeOp::GateSwap(j) => {
                            if j == g {
                                g -= 1;
                            } else {
                                assert_eq!(j, g + 1);
                                g += 1;
                            }
                        }
                    }
                }
                assert_eq!(g, s.end_gap);
            }
        }
    }

    #[test]
    fn alternating_sweeps_need_few_swaps() {
        let (mut p, mut q) = (-10, 10);
        let mut gap = 10;
        let mut moves = 0;
        for _ in 0..20 {
            let s = plan_sweep(gap, p, q);
            moves += (s.start_gap - gap).abs();
            gap = s.end_gap;
            p -= 1;
            q -= 1;
        }
        assert!(moves <= 12, "{moves}");
    }
}

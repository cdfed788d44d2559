//! Photon/no-photon decisions from homodyne records: matched filtering,
//! threshold choice, figures of merit, and Wigner functions of the probe.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::conveyor::{EnsembleResult, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::ops::CMatrix;
use crate::table::write_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterNormalization {
    /// `Σ f² Δt = 1`: vacuum scores then have unit variance.
    #[default]
    UnitEnergy,
    /// Largest `|f|` equal to one.
    UnitPeak,
}

/// Filter samples `f_k = f(kΔt)` on offsets from the start of the window.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilter {
    pub f: Vec<f64>,
    pub dt: f64,
    pub tau_m: f64,
    pub normalization: FilterNormalization,
}

impl MatchedFilter {
    /// Filter built from arbitrary samples.
    pub fn from_samples(samples: &[f64], dt: f64, normalization: FilterNormalization) -> Result<Self> {
        let energy: f64 = samples.iter().map(|x| x * x).sum::<f64>() * dt;
        let peak = samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::Domain("the mean signal vanishes in the window, so no filter can be built".into()));
        }
        let scale = match normalization {
            FilterNormalization::UnitEnergy => 1.0 / energy.sqrt(),
            FilterNormalization::UnitPeak => 1.0 / peak,
        };
        Ok(MatchedFilter {
            f: samples.iter().map(|x| x * scale).collect(),
            dt,
            tau_m: samples.len() as f64 * dt,
            normalization,
        })
    }

    /// Time offset of the largest filter weight.
    pub fn peak_offset(&self) -> f64 {
        let k = self.f.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |(k, _)| k);
        k as f64 * self.dt
    }

    /// `Σ f² Δt`.
    pub fn energy(&self) -> f64 {
        self.f.iter().map(|x| x * x).sum::<f64>() * self.dt
    }
}

/// `f ∝ ⟨ŷ⟩` averaged over photon trajectories, over the first `tau_m` of
/// the record (the whole record when `tau_m` is `None`).
pub fn build_filter(ensemble: &EnsembleResult, tau_m: Option<f64>) -> Result<MatchedFilter> {
    build_filter_with(ensemble, tau_m, FilterNormalization::UnitEnergy)
}

pub fn build_filter_with(
    ensemble: &EnsembleResult,
    tau_m: Option<f64>,
    normalization: FilterNormalization,
) -> Result<MatchedFilter> {
    let t = &ensemble.t;
    if t.len() < 2 {
        return Err(Error::Domain("a filter needs at least two samples".into()));
    }
    let dt = t[1] - t[0];
    let len = match tau_m {
        Some(w) if !(w > 0.0) => return Err(Error::Domain(format!("window length must be positive, got {w}"))),
        Some(w) => ((w / dt).round() as usize).min(t.len()),
        None => t.len(),
    };
    MatchedFilter::from_samples(&ensemble.mean_y[..len], dt, normalization)
}

/// `J̄(t_eval) = Σ_k J(t_eval + kΔt) f_k Δt`, with `t_eval` measured from the
/// first sample of the record.
pub fn filtered_signal(record: &TrajectoryRecord, filter: &MatchedFilter, t_eval: f64) -> Result<f64> {
    let j = record.j_hom.as_ref().ok_or_else(|| Error::Domain("record carries no homodyne current".into()))?;
    let shift = (t_eval / filter.dt).round();
    if shift < 0.0 {
        return Err(Error::Domain(format!("evaluation time {t_eval} precedes the record")));
    }
    convolve_at(j, filter, shift as usize)
}

fn convolve_at(j: &[f64], filter: &MatchedFilter, shift: usize) -> Result<f64> {
    if shift + filter.f.len() > j.len() {
        return Err(Error::Domain(format!(
            "filter window of {} samples at offset {shift} exceeds a record of {}",
            filter.f.len(),
            j.len()
        )));
    }
    Ok(j[shift..].iter().zip(&filter.f).map(|(a, b)| a * b).sum::<f64>() * filter.dt)
}

/// `max_t J̄(t)` over every placement of the window inside the record, for
/// unknown arrival times.
pub fn max_filtered_signal(record: &TrajectoryRecord, filter: &MatchedFilter) -> Result<f64> {
    let j = record.j_hom.as_ref().ok_or_else(|| Error::Domain("record carries no homodyne current".into()))?;
    let last = j.len().checked_sub(filter.f.len()).ok_or_else(|| Error::Domain("filter longer than record".into()))?;
    (0..=last).map(|s| convolve_at(j, filter, s)).try_fold(f64::NEG_INFINITY, |m, x| x.map(|x| m.max(x)))
}

/// Scores of every record at `t_eval = 0`, or maximized over placements.
pub fn score_records(records: &[TrajectoryRecord], filter: &MatchedFilter, max_over_window: bool) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| if max_over_window { max_filtered_signal(r, filter) } else { filtered_signal(r, filter, 0.0) })
        .collect()
}

/// The threshold maximizing the assignment fidelity, with its operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub fidelity: f64,
    pub eta: f64,
    pub p_dark: f64,
}

/// Click rule: a score strictly above the threshold.
fn clicks(scores: &[f64], threshold: f64) -> usize {
    scores.iter().filter(|&&s| s > threshold).count()
}

/// Candidate thresholds: below every score, between each pair of adjacent
/// distinct pooled scores, and above every score.
fn candidates(photon: &[f64], vacuum: &[f64]) -> Vec<f64> {
    let mut pooled: Vec<f64> = photon.iter().chain(vacuum).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();
    let mut out = Vec::with_capacity(pooled.len() + 1);
    out.push(pooled[0] - 1.0);
    out.extend(pooled.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    out.push(pooled[pooled.len() - 1] + 1.0);
    out
}

/// Maximizes `F = (η + 1 - p_D)/2` over the candidate thresholds; among
/// equally good thresholds the one with the fewest dark counts wins.
pub fn optimize_threshold(scores_photon: &[f64], scores_vacuum: &[f64]) -> Result<ThresholdChoice> {
    if scores_photon.is_empty() || scores_vacuum.is_empty() {
        return Err(Error::Domain("threshold optimization needs scores for both classes".into()));
    }
    let mut ph = scores_photon.to_vec();
    let mut va = scores_vacuum.to_vec();
    ph.sort_by(f64::total_cmp);
    va.sort_by(f64::total_cmp);
    let (n1, n0) = (ph.len() as i128, va.len() as i128);
    // F is monotone in c1·N0 - c0·N1, compared exactly in integers
    let mut best: Option<(i128, i128, f64)> = None;
    let (mut i1, mut i0) = (0usize, 0usize);
    for thr in candidates(&ph, &va) {
        while i1 < ph.len() && ph[i1] <= thr {
            i1 += 1;
        }
        while i0 < va.len() && va[i0] <= thr {
            i0 += 1;
        }
        let (c1, c0) = (n1 - i1 as i128, n0 - i0 as i128);
        let key = c1 * n0 - c0 * n1;
        let better = match best {
            None => true,
            Some((k, bc0, _)) => key > k || (key == k && c0 < bc0),
        };
        if better {
            best = Some((key, c0, thr));
        }
    }
    let threshold = best.expect("at least two candidates").2;
    let eta = clicks(scores_photon, threshold) as f64 / n1 as f64;
    let p_dark = clicks(scores_vacuum, threshold) as f64 / n0 as f64;
    Ok(ThresholdChoice { threshold, fidelity: 0.5 * (eta + 1.0 - p_dark), eta, p_dark })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub eta: f64,
    pub p_dark: f64,
    pub fidelity: f64,
    /// `√(F(1-F)/N)` with `N` the smaller of the two class sizes.
    pub stderr: f64,
    pub threshold: f64,
    pub tau_m: f64,
    pub n_click_1: usize,
    pub n_traj_1: usize,
    pub n_click_0: usize,
    pub n_traj_0: usize,
}

pub fn assignment_report(
    scores_photon: &[f64],
    scores_vacuum: &[f64],
    threshold: f64,
    tau_m: f64,
) -> Result<DetectionReport> {
    if scores_photon.is_empty() || scores_vacuum.is_empty() {
        return Err(Error::Domain("an assignment report needs scores for both classes".into()));
    }
    let (n1, n0) = (scores_photon.len(), scores_vacuum.len());
    let (c1, c0) = (clicks(scores_photon, threshold), clicks(scores_vacuum, threshold));
    let eta = c1 as f64 / n1 as f64;
    let p_dark = c0 as f64 / n0 as f64;
    let fidelity = 0.5 * (eta + 1.0 - p_dark);
    let n = n1.min(n0) as f64;
    Ok(DetectionReport {
        eta,
        p_dark,
        fidelity,
        stderr: (fidelity * (1.0 - fidelity) / n).sqrt(),
        threshold,
        tau_m,
        n_click_1: c1,
        n_traj_1: n1,
        n_click_0: c0,
        n_traj_0: n0,
    })
}

impl DetectionReport {
    /// Flat `key = value` lines.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("eta", self.eta),
            ("p_dark", self.p_dark),
            ("fidelity", self.fidelity),
            ("stderr", self.stderr),
            ("threshold", self.threshold),
            ("tau_m", self.tau_m),
        ] {
            writeln!(s, "{k} = {v:e}").expect("writing to a string");
        }
        for (k, v) in [
            ("n_click_1", self.n_click_1),
            ("n_traj_1", self.n_traj_1),
            ("n_click_0", self.n_click_0),
            ("n_traj_0", self.n_traj_0),
        ] {
            writeln!(s, "{k} = {v}").expect("writing to a string");
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_key_values()).map_err(|e| Error::io(path, e))
    }
}

/// `(p_D, η)` for every candidate threshold, from the most permissive
/// threshold to the strictest.
pub fn roc_curve(scores_photon: &[f64], scores_vacuum: &[f64]) -> Result<Vec<(f64, f64)>> {
    if scores_photon.is_empty() || scores_vacuum.is_empty() {
        return Err(Error::Domain("a ROC curve needs scores for both classes".into()));
    }
    let (n1, n0) = (scores_photon.len() as f64, scores_vacuum.len() as f64);
    Ok(candidates(scores_photon, scores_vacuum)
        .into_iter()
        .map(|thr| (clicks(scores_vacuum, thr) as f64 / n0, clicks(scores_photon, thr) as f64 / n1))
        .collect())
}

pub fn write_roc(path: &Path, roc: &[(f64, f64)]) -> Result<()> {
    let (pd, eta): (Vec<f64>, Vec<f64>) = roc.iter().copied().unzip();
    write_table(path, &["p_dark", "eta"], &[&pd, &eta])
}

/// Wigner function on a grid, row-major with `y` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

impl WignerGrid {
    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.w[iy * self.x.len() + ix]
    }

    /// Integral over the grid by the trapezoidal rule (uniform grids).
    pub fn integral(&self) -> f64 {
        let (nx, ny) = (self.x.len(), self.y.len());
        if nx < 2 || ny < 2 {
            return 0.0;
        }
        let (dx, dy) = (self.x[1] - self.x[0], self.y[1] - self.y[0]);
        let mut acc = 0.0;
        for iy in 0..ny {
            let wy = if iy == 0 || iy == ny - 1 { 0.5 } else { 1.0 };
            for ix in 0..nx {
                let wx = if ix == 0 || ix == nx - 1 { 0.5 } else { 1.0 };
                acc += wx * wy * self.at(ix, iy);
            }
        }
        acc * dx * dy
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut xs = Vec::with_capacity(self.w.len());
        let mut ys = Vec::with_capacity(self.w.len());
        for &y in &self.y {
            for &x in &self.x {
                xs.push(x);
                ys.push(y);
            }
        }
        write_table(path, &["x", "y", "w"], &[&xs, &ys, &self.w])
    }
}

/// Wigner function of a single-mode state in the convention where a coherent
/// state `|α⟩` is centred at `(√2 Re α, √2 Im α)` and the vacuum peaks at
/// `1/π`. Uses the stable Laguerre recurrence over Fock-basis elements.
pub fn wigner(rho: &CMatrix, x_grid: &[f64], y_grid: &[f64]) -> Result<WignerGrid> {
    let d = rho.nrows();
    if d == 0 || rho.ncols() != d {
        return Err(Error::Dimension("density matrix must be square and nonempty".into()));
    }
    let tr: f64 = (0..d).map(|k| rho[(k, k)].re).sum();
    if (tr - 1.0).abs() > 1e-6 {
        return Err(Error::Domain(format!("density matrix has trace {tr}")));
    }
    let herm = (rho - rho.adjoint()).camax();
    if herm > 1e-8 {
        return Err(Error::Domain(format!("density matrix is not Hermitian (deviation {herm:e})")));
    }
    let min_eig = SymmetricEigen::new((rho + rho.adjoint()) * crate::ops::C64::from(0.5)).eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(Error::Domain(format!("density matrix has negative eigenvalue {min_eig:e}")));
    }
    type C = crate::ops::C64;
    let mut w = Vec::with_capacity(x_grid.len() * y_grid.len());
    let mut list = vec![C::new(0.0, 0.0); d];
    for &y in y_grid {
        for &x in x_grid {
            let a = C::new(x, y) / std::f64::consts::SQRT_2;
            list[0] = C::from((-2.0 * a.norm_sqr()).exp() / std::f64::consts::PI);
            let mut acc = rho[(0, 0)].re * list[0].re;
            for n in 1..d {
                list[n] = a * 2.0 * list[n - 1] / (n as f64).sqrt();
                acc += 2.0 * (rho[(0, n)] * list[n]).re;
            }
            for m in 1..d {
                let sm = (m as f64).sqrt();
                let mut temp = list[m];
                list[m] = (a.conj() * 2.0 * temp - list[m - 1] * sm) / sm;
                acc += (rho[(m, m)] * list[m]).re;
                for n in m + 1..d {
                    let next = (a * 2.0 * list[n - 1] - temp * sm) / (n as f64).sqrt();
                    temp = list[n];
                    list[n] = next;
                    acc += 2.0 * (rho[(m, n)] * list[n]).re;
                }
            }
            w.push(acc);
        }
    }
    Ok(WignerGrid { x: x_grid.to_vec(), y: y_grid.to_vec(), w })
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

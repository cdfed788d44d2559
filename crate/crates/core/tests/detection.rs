use std::f64::consts::{PI, SQRT_2};

use jtwpd::conveyor::*;
use jtwpd::detection::*;
use jtwpd::keldysh::run_keldysh;
use jtwpd::model::*;
use jtwpd::ops::{annihilation, coherent_state, unitary_from_hermitian, CMatrix, C64};
use jtwpd::Error;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fidelity_at(photon: &[f64], vacuum: &[f64], thr: f64) -> (f64, f64) {
    let eta = photon.iter().filter(|&&s| s > thr).count() as f64 / photon.len() as f64;
    let pd = vacuum.iter().filter(|&&s| s > thr).count() as f64 / vacuum.len() as f64;
    (0.5 * (eta + 1.0 - pd), pd)
}

/// Every pooled score and the extremes as thresholds, O(N²).
fn brute_force(photon: &[f64], vacuum: &[f64]) -> (f64, f64) {
    let mut thresholds: Vec<f64> = photon.iter().chain(vacuum).copied().collect();
    thresholds.push(f64::NEG_INFINITY);
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for &t in &thresholds {
        let (f, pd) = fidelity_at(photon, vacuum, t);
        if f > best.0 + 1e-15 || ((f - best.0).abs() <= 1e-15 && pd < best.1) {
            best = (f, pd);
        }
    }
    best
}

#[test]
fn threshold_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..200 {
        let n1 = rng.random_range(1..40);
        let n0 = rng.random_range(1..40);
        let shift = rng.random::<f64>() * 3.0;
        // coarse rounding creates ties across and within classes
        let q = |x: f64| if trial % 2 == 0 { (x * 4.0).round() / 4.0 } else { x };
        let ph: Vec<f64> = (0..n1).map(|_| q(rng.random::<f64>() * 2.0 + shift)).collect();
        let va: Vec<f64> = (0..n0).map(|_| q(rng.random::<f64>() * 2.0)).collect();
        let choice = optimize_threshold(&ph, &va).unwrap();
        let (f, pd) = brute_force(&ph, &va);
        assert!((choice.fidelity - f).abs() < 1e-12, "trial {trial}: {} vs {f}", choice.fidelity);
        assert!((choice.p_dark - pd).abs() < 1e-12, "trial {trial}: tie broken towards {} not {pd}", choice.p_dark);
        let (f_at, _) = fidelity_at(&ph, &va, choice.threshold);
        assert!((f_at - choice.fidelity).abs() < 1e-12);
    }
}

#[test]
fn threshold_limits() {
    let ph = [3.0, 4.0, 5.0];
    let va = [-1.0, 0.0, 1.0, 2.0];
    let c = optimize_threshold(&ph, &va).unwrap();
    assert_eq!(c.fidelity, 1.0);
    assert!(c.threshold >= 2.0 && c.threshold < 3.0);

    let same = [0.1, 0.5, 0.9, 1.3];
    let c = optimize_threshold(&same, &same).unwrap();
    assert_eq!(c.fidelity, 0.5);
    assert_eq!(c.p_dark, 0.0);
    assert!(optimize_threshold(&[], &same).is_err());
}

#[test]
fn report_arithmetic() {
    let ph: Vec<f64> = (0..2000).map(|k| if k < 1800 { 1.0 } else { -1.0 }).collect();
    let va: Vec<f64> = (0..2000).map(|k| if k < 200 { 1.0 } else { -1.0 }).collect();
    let r = assignment_report(&ph, &va, 0.0, 2.5).unwrap();
    assert_eq!((r.n_click_1, r.n_traj_1, r.n_click_0, r.n_traj_0), (1800, 2000, 200, 2000));
    assert!((r.fidelity - 0.9).abs() < 1e-15);
    assert!((r.stderr - (0.09f64 / 2000.0).sqrt()).abs() < 1e-15);
    assert!((r.stderr - 0.0067).abs() < 1e-4);

    let r = assignment_report(&[1.0], &[-1.0], 0.0, 1.0).unwrap();
    assert_eq!((r.eta, r.p_dark, r.fidelity), (1.0, 0.0, 1.0));
    let r = assignment_report(&[1.0, -1.0], &[1.0, -1.0], 0.0, 1.0).unwrap();
    assert_eq!(r.fidelity, 0.5);
    assert!(assignment_report(&[], &[1.0], 0.0, 1.0).is_err());

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("report.txt");
    r.write(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.contains("fidelity = 5e-1"));
    assert!(text.contains("n_traj_0 = 2"));
}

#[test]
fn roc_runs_from_permissive_to_strict() {
    let ph = [0.5, 1.5, 2.5];
    let va = [0.0, 1.0];
    let roc = roc_curve(&ph, &va).unwrap();
    assert_eq!(roc.first(), Some(&(1.0, 1.0)));
    assert_eq!(roc.last(), Some(&(0.0, 0.0)));
    assert!(roc.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1));
    let dir = tempfile::tempdir().unwrap();
    write_roc(&dir.path().join("roc.csv"), &roc).unwrap();
}

fn fake_record(j: Vec<f64>, dt: f64) -> TrajectoryRecord {
    let n = j.len();
    TrajectoryRecord {
        t: (1..=n).map(|k| k as f64 * dt).collect(),
        j_hom: Some(j),
        y_mean: vec![0.0; n],
        y_var: vec![0.5; n],
        x_mean: vec![0.0; n],
        snapshots: Vec::new(),
        seed: 0,
        discarded_weight: 0.0,
        max_bond: 1,
        config_hash: String::new(),
        backend: BackendKind::Sector,
    }
}

#[test]
fn filter_and_scores() {
    let dt = 0.1;
    let f = MatchedFilter::from_samples(&[2.0; 10], dt, FilterNormalization::UnitEnergy).unwrap();
    assert!(f.f.iter().all(|&x| (x - f.f[0]).abs() < 1e-15));
    assert!((f.energy() - 1.0).abs() < 1e-14);
    assert!((f.tau_m - 1.0).abs() < 1e-15);
    let peak = MatchedFilter::from_samples(&[0.0, -4.0, 2.0], dt, FilterNormalization::UnitPeak).unwrap();
    assert_eq!(peak.f, vec![0.0, -1.0, 0.5]);
    assert!((peak.peak_offset() - dt).abs() < 1e-15);
    assert!(matches!(MatchedFilter::from_samples(&[0.0; 4], dt, FilterNormalization::UnitEnergy), Err(Error::Domain(_))));

    let zero = fake_record(vec![0.0; 20], dt);
    assert_eq!(filtered_signal(&zero, &f, 0.0).unwrap(), 0.0);

    let mut j = vec![0.0; 20];
    j[3] = 7.0;
    let rec = fake_record(j.clone(), dt);
    let impulse = MatchedFilter { f: vec![0.0, 0.0, 0.0, 1.0], dt, tau_m: 0.4, normalization: FilterNormalization::UnitPeak };
    assert!((filtered_signal(&rec, &impulse, 0.0).unwrap() - 7.0 * dt).abs() < 1e-15);
    assert_eq!(filtered_signal(&rec, &impulse, 0.1).unwrap(), 0.0);
    assert!(filtered_signal(&rec, &impulse, 1.7).is_err());
    assert!(filtered_signal(&rec, &impulse, -0.1).is_err());
    let best = max_filtered_signal(&rec, &impulse).unwrap();
    assert!((best - 7.0 * dt).abs() < 1e-15);

    // scores are linear in the current and the decisions do not change
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let recs: Vec<TrajectoryRecord> =
        (0..30).map(|k| fake_record((0..20).map(|_| rng.random::<f64>() + (k % 2) as f64).collect(), dt)).collect();
    let scaled: Vec<TrajectoryRecord> = recs
        .iter()
        .map(|r| fake_record(r.j_hom.as_ref().unwrap().iter().map(|x| 3.5 * x).collect(), dt))
        .collect();
    let a = score_records(&recs, &f, false).unwrap();
    let b = score_records(&scaled, &f, false).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((3.5 * x - y).abs() < 1e-12);
    }
    let (pa, va): (Vec<f64>, Vec<f64>) = (a.iter().step_by(2).copied().collect(), a.iter().skip(1).step_by(2).copied().collect());
    let (pb, vb): (Vec<f64>, Vec<f64>) = (b.iter().step_by(2).copied().collect(), b.iter().skip(1).step_by(2).copied().collect());
    let (ca, cb) = (optimize_threshold(&pa, &va).unwrap(), optimize_threshold(&pb, &vb).unwrap());
    assert_eq!(ca.fidelity, cb.fidelity);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(*x > ca.threshold, *y > cb.threshold);
    }
}

#[test]
fn vacuum_scores_have_unit_variance_and_filter_tracks_the_signal() {
    let cfg = DetectorConfig::new(2.0, 6.0, 1.0, 100).with_probe_dim(16).with_tail(1.0);
    let spec = cfg.wavepacket();
    let opts = RunOptions::default().with_backend(BackendKind::Sector);
    let photon = run_ensemble_with(&cfg, &spec, 150, 1, &opts).unwrap();
    let vac_cfg = cfg.clone().with_input(PhotonInput::Vacuum);
    let vacuum = run_ensemble_with(&vac_cfg, &vac_cfg.wavepacket(), 400, 2, &opts).unwrap();
    let filter = build_filter(&photon, None).unwrap();
    assert!((filter.energy() - 1.0).abs() < 1e-12);
    assert!(build_filter(&photon, Some(-1.0)).is_err());
    assert_eq!(build_filter(&photon, Some(1.0)).unwrap().f.len(), 100);

    let s = score_records(&vacuum.records, &filter, false).unwrap();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 4.0 / n.sqrt(), "{mean}");
    assert!((var - 1.0).abs() < 4.0 * (2.0 / n).sqrt(), "{var}");

    // the filter peaks where the master-equation displacement does
    let k = run_keldysh(&cfg, 16).unwrap();
    let peak_k = k.y_mean.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
    let t_peak = k.t[peak_k] - k.t[0];
    assert!((filter.peak_offset() - t_peak).abs() < 0.15, "{} vs {t_peak}", filter.peak_offset());
}

/// `W(x, y) = tr(ρ D(β) Π D(β)†)/π` with `β = (x + iy)/√2`, on a padded space.
fn parity_wigner(rho: &CMatrix, x: f64, y: f64) -> f64 {
    let big = 60;
    let d = rho.nrows();
    let mut r = CMatrix::zeros(big, big);
    r.view_mut((0, 0), (d, d)).copy_from(rho);
    let beta = C64::new(x, y) / SQRT_2;
    let a = annihilation(big);
    // D(β) = exp(βa† - β*a) = exp(-iH) with H = i(βa† - β*a)
    let gen = (a.adjoint() * beta - &a * beta.conj()) * C64::new(0.0, 1.0);
    let disp = unitary_from_hermitian(&gen, 1.0);
    let parity = CMatrix::from_diagonal(&DVector::from_fn(big, |k, _| C64::from(if k % 2 == 0 { 1.0 } else { -1.0 })));
    let shifted = disp.adjoint() * &r * &disp;
    (shifted * parity).trace().re / PI
}

fn pure(v: &[C64]) -> CMatrix {
    let v = DVector::from_column_slice(v);
    &v * v.adjoint()
}

#[test]
fn wigner_matches_the_displaced_parity_oracle() {
    let d = 14;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<C64> = (0..d).map(|k| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * (-0.3 * k as f64).exp()).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<C64> = v.into_iter().map(|z| z / n).collect();
    let rho = pure(&v) * C64::from(0.7) + pure(&coherent_state(C64::new(0.5, -0.4), d)) * C64::from(0.3);
    let (xs, ys) = (vec![-1.3, 0.0, 0.4, 1.9], vec![-0.7, 0.2, 1.1]);
    let w = wigner(&rho, &xs, &ys).unwrap();
    for (iy, &y) in ys.iter().enumerate() {
        for (ix, &x) in xs.iter().enumerate() {
            let o = parity_wigner(&rho, x, y);
            assert!((w.at(ix, iy) - o).abs() < 1e-8, "({x}, {y}): {} vs {o}", w.at(ix, iy));
        }
    }
}

#[test]
fn wigner_of_textbook_states() {
    let d = 30;
    let vac = pure(&coherent_state(C64::new(0.0, 0.0), d));
    let w = wigner(&vac, &[0.0, 1.0], &[0.0]).unwrap();
    assert!((w.at(0, 0) - 1.0 / PI).abs() < 1e-14);
    assert!((w.at(1, 0) - (-1.0f64).exp() / PI).abs() < 1e-14);

    let alpha = C64::new(1.2, -0.8);
    let coh = pure(&coherent_state(alpha, d));
    let (cx, cy) = (SQRT_2 * alpha.re, SQRT_2 * alpha.im);
    let w = wigner(&coh, &[cx, cx + 0.5], &[cy]).unwrap();
    assert!((w.at(0, 0) - 1.0 / PI).abs() < 1e-10);
    assert!((w.at(1, 0) - (-0.25f64).exp() / PI).abs() < 1e-10);

    let grid = linspace(-7.0, 7.0, 141);
    let full = wigner(&coh, &grid, &grid).unwrap();
    assert!((full.integral() - 1.0).abs() < 1e-6);
    let dir = tempfile::tempdir().unwrap();
    full.write(&dir.path().join("w.csv")).unwrap();

    // two displaced vacua: a mixture has no fringes, a superposition does
    let (p, q) = (coherent_state(C64::new(0.0, 2.0), d), coherent_state(C64::new(0.0, -2.0), d));
    let mix = (pure(&p) + pure(&q)) * C64::from(0.5);
    let mut cat: Vec<C64> = p.iter().zip(&q).map(|(a, b)| a + b).collect();
    let n = cat.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    cat.iter_mut().for_each(|z| *z /= n);
    let line = linspace(-2.0, 2.0, 81);
    let wm = wigner(&mix, &line, &[0.0]).unwrap();
    let wc = wigner(&pure(&cat), &line, &[0.0]).unwrap();
    assert!(wm.w.iter().all(|&x| x > -1e-12));
    assert!(wc.w.iter().cloned().fold(f64::INFINITY, f64::min) < -0.1);
    let lobes = wigner(&mix, &[0.0], &[2.0 * SQRT_2, 0.0]).unwrap();
    assert!(lobes.w[0] > 100.0 * lobes.w[1].abs());
}

#[test]
fn wigner_rejects_unphysical_input() {
    let mut rho = CMatrix::identity(3, 3);
    assert!(matches!(wigner(&rho, &[0.0], &[0.0]), Err(Error::Domain(_))));
    rho = CMatrix::zeros(2, 2);
    rho[(0, 0)] = C64::from(1.0);
    rho[(0, 1)] = C64::new(0.0, 0.3);
    assert!(matches!(wigner(&rho, &[0.0], &[0.0]), Err(Error::Domain(_))));
    rho[(0, 0)] = C64::from(1.5);
    rho[(1, 1)] = C64::from(-0.5);
    rho[(0, 1)] = C64::from(0.0);
    assert!(matches!(wigner(&rho, &[0.0], &[0.0]), Err(Error::Domain(_))));
}

#[test]
fn probe_straddling_the_entrance_is_spread_along_y() {
    // half the photon inside: the probe is a blend of displaced states
    let cfg = DetectorConfig::new(2.0, 2.0, 0.0, 60).with_probe_dim(20);
    let spec = cfg.wavepacket();
    let t_half = cfg.sample_times().into_iter().find(|&t| photon_fraction(t, &cfg, &spec) > 0.5).unwrap();
    let opts = RunOptions::default().with_snapshots(vec![t_half]);
    let rec = run_trajectory_with(&cfg, &spec, 0, &opts).unwrap();
    let rho = &rec.snapshots[0].probe;
    let ys = linspace(-5.0, 2.0, 141);
    let w = wigner(rho, &[0.0], &ys).unwrap();
    let mass: f64 = w.w.iter().sum();
    let mean: f64 = w.w.iter().zip(&ys).map(|(a, y)| a * y).sum::<f64>() / mass;
    let var: f64 = w.w.iter().zip(&ys).map(|(a, y)| a * (y - mean).powi(2)).sum::<f64>() / mass;
    assert!(var > 0.8, "y spread {var}");
    assert!(mean < -0.5);
}

mod common;

use common::{distance, random_local, random_unitary, rng, Dense};
use jtwpd::mps::{basis_state, init_product_state, swap_matrix, Side, TwoSiteGate};
use jtwpd::ops::{number, CMatrix, C64};
use rand::Rng;

#[test]
fn product_state_basics() {
    let dims = [2, 3, 2];
    let locals = vec![basis_state(2, 0), basis_state(3, 1), basis_state(2, 0)];
    let mps = init_product_state(&dims, &locals).unwrap();
    assert_eq!(mps.ortho_center(), 0);
    assert_eq!(mps.max_bond_dim(), 1);
    let pops = mps.population_snapshot();
    assert_eq!(pops, vec![0.0, 1.0, 0.0]);
    assert!((mps.overlap(&mps) - C64::new(1.0, 0.0)).norm() < 1e-15);
    assert!(init_product_state(&[2, 2], &[basis_state(2, 0)]).is_err());
    assert!(init_product_state(&[2], &[basis_state(3, 0)]).is_err());
}

#[test]
fn identity_gate_changes_nothing() {
    let mut r = rng(1);
    let dims = [2, 3, 2, 2];
    let locals: Vec<_> = dims.iter().map(|&d| random_local(d, &mut r)).collect();
    let mut mps = init_product_state(&dims, &locals).unwrap();
    let before = mps.to_dense();
    mps.apply_two_site_gate(&TwoSiteGate::new(CMatrix::identity(6, 6), 1)).unwrap();
    let after = mps.to_dense();
    let fid: C64 = before.iter().zip(&after).map(|(a, b)| a.conj() * b).sum();
    assert!((fid.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn beamsplitter_splits_single_excitation() {
    let theta: f64 = 0.3;
    let (c, s) = (theta.cos(), theta.sin());
    let mut g = CMatrix::identity(4, 4);
    // |01⟩ = index 1, |10⟩ = index 2
    g[(1, 1)] = C64::new(c, 0.0);
    g[(1, 2)] = C64::new(-s, 0.0);
    g[(2, 1)] = C64::new(s, 0.0);
    g[(2, 2)] = C64::new(c, 0.0);
    let mut mps = init_product_state(&[2, 2], &[basis_state(2, 1), basis_state(2, 0)]).unwrap();
    mps.apply_two_site_gate(&TwoSiteGate::new(g, 0)).unwrap();
    assert_eq!(mps.bond_dims(), vec![2]);
    let p = mps.population_snapshot();
    assert!((p[0] - c * c).abs() < 1e-14 && (p[1] - s * s).abs() < 1e-14);
}

#[test]
fn random_circuits_match_statevector() {
    for trial in 0..6u64 {
        let mut r = rng(100 + trial);
        let n = 3 + (trial as usize % 4);
        let dims: Vec<usize> = (0..n).map(|_| 2 + r.random_range(0..2usize)).collect();
        let locals: Vec<_> = dims.iter().map(|&d| random_local(d, &mut r)).collect();
        let mut mps = init_product_state(&dims, &locals).unwrap().with_truncation(1024, 0.0);
        let mut dense = Dense::product(&dims, &locals);
        for _ in 0..60 {
            let i = r.random_range(0..n - 1);
            let (d1, d2) = (mps.phys_dim(i), mps.phys_dim(i + 1));
            let choice = r.random_range(0..3);
            let side = if r.random::<bool>() { Side::Left } else { Side::Right };
            match choice {
                0 => {
                    let u = random_unitary(d1 * d2, &mut r);
                    mps.apply_two_site_gate_centered(&TwoSiteGate::new(u.clone(), i), side).unwrap();
                    dense.apply_two(i, &u);
                }
                1 => {
                    let u = random_unitary(d1 * d2, &mut r);
                    mps.apply_gate_and_swap(&TwoSiteGate::new(u.clone(), i), side).unwrap();
                    dense.apply_two(i, &u);
                    dense.swap(i);
                }
                _ => {
                    mps.swap_sites_centered(i, side).unwrap();
                    dense.swap(i);
                }
            }
            assert!(mps.canonical_residual() < 1e-10);
            assert!(mps.bonds_consistent());
        }
        assert_eq!(mps.phys_dims(), dense.dims);
        let err = distance(&mps.to_dense(), &dense.psi);
        assert!(err < 1e-8, "trial {trial}: {err}");
        assert!(mps.cum_discarded() < 1e-20);
        for site in 0..n {
            let rho = mps.reduced_density(site).unwrap();
            let oracle = dense.reduced(site);
            assert!((rho - &oracle).camax() < 1e-10);
            let nexp = mps.local_expectation(site, &number(dense.dims[site])).unwrap();
            let pops = mps.population_snapshot();
            assert!((nexp.re - pops[site]).abs() < 1e-10);
        }
    }
}

#[test]
fn swap_bookkeeping_and_double_swap() {
    let mut r = rng(9);
    let dims = [2, 3, 2, 4, 2];
    let locals: Vec<_> = dims.iter().map(|&d| random_local(d, &mut r)).collect();
    let mut mps = init_product_state(&dims, &locals).unwrap().with_truncation(64, 0.0);
    let u = random_unitary(6, &mut r);
    mps.apply_two_site_gate(&TwoSiteGate::new(u, 1)).unwrap();
    let before_vec = mps.to_dense();
    let pops_by_label: Vec<f64> = mps.population_snapshot();
    // carry label 1 to the end of the chain
    for i in 1..4 {
        mps.swap_sites(i).unwrap();
    }
    assert_eq!(mps.position_of(1), Some(4));
    assert_eq!(mps.phys_dims(), vec![2, 2, 4, 2, 3]);
    let pops = mps.population_snapshot();
    for (pos, &p) in pops.iter().enumerate() {
        assert!((p - pops_by_label[mps.label_at(pos)]).abs() < 1e-12);
    }
    for i in (1..4).rev() {
        mps.swap_sites(i).unwrap();
    }
    assert_eq!(mps.labels(), &[0, 1, 2, 3, 4]);
    let d = distance(&mps.to_dense(), &before_vec);
    assert!(d < 1e-12, "{d}");
    mps.swap_sites(2).unwrap();
    mps.swap_sites(2).unwrap();
    assert!(distance(&mps.to_dense(), &before_vec) < 1e-12);
}

#[test]
fn swap_matrix_is_the_permutation() {
    let s = swap_matrix(2, 3);
    let mut d = Dense::product(&[2, 3], &[vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)], basis_state(3, 2)]);
    let orig = d.clone();
    d.apply_two(0, &s);
    let mut via_swap = orig.clone();
    via_swap.swap(0);
    assert!(distance(&d.psi, &via_swap.psi) < 1e-15);
}

#[test]
fn truncation_is_recorded_and_capped() {
    let mut r = rng(21);
    let dims = [3, 3, 3, 3];
    let locals: Vec<_> = dims.iter().map(|&d| random_local(d, &mut r)).collect();
    let mut mps = init_product_state(&dims, &locals).unwrap().with_truncation(2, 1e-12);
    let mut last = 0.0;
    let mut saw_error = false;
    for k in 0..20 {
        let u = random_unitary(9, &mut r);
        match mps.apply_two_site_gate(&TwoSiteGate::new(u, k % 3)) {
            Ok(()) => {
                assert!(mps.cum_discarded() >= last);
                last = mps.cum_discarded();
                assert!(mps.max_bond_dim() <= 2);
                assert!((mps.norm() - 1.0).abs() < 1e-10);
            }
            Err(jtwpd::Error::Truncation { .. }) => {
                saw_error = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(saw_error, "random gates at bond cap 2 must exceed the hard limit");
}

#[test]
fn measurement_update_renormalizes() {
    let mut mps = init_product_state(&[2, 3], &[basis_state(2, 0), vec![C64::new(0.6, 0.0), C64::new(0.8, 0.0), C64::new(0.0, 0.0)]]).unwrap();
    let mut p = CMatrix::zeros(3, 3);
    p[(1, 1)] = C64::new(1.0, 0.0);
    let norm2 = mps.apply_single_site(1, &p, true).unwrap();
    assert!((norm2 - 0.64).abs() < 1e-14);
    assert!((mps.norm() - 1.0).abs() < 1e-14);
    assert!((mps.population_snapshot()[1] - 1.0).abs() < 1e-14);
}

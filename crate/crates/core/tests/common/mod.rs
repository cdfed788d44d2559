#![allow(dead_code)]

use jtwpd::ops::{unitary_from_hermitian, CMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force state vector over a chain, site 0 slowest.
#[derive(Clone, Debug)]
pub struct Dense {
    pub dims: Vec<usize>,
    pub psi: Vec<C64>,
}

impl Dense {
    pub fn product(dims: &[usize], locals: &[Vec<C64>]) -> Self {
        let mut psi = vec![C64::new(1.0, 0.0)];
        for v in locals {
            let mut next = Vec::with_capacity(psi.len() * v.len());
            for a in &psi {
                for b in v {
                    next.push(a * b);
                }
            }
            psi = next;
        }
        Dense { dims: dims.to_vec(), psi }
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    pub fn apply_two(&mut self, i: usize, g: &CMatrix) {
        let st = self.strides();
        let (d1, d2) = (self.dims[i], self.dims[i + 1]);
        let mut out = vec![C64::new(0.0, 0.0); self.psi.len()];
        for (idx, amp) in self.psi.iter().enumerate() {
            if *amp == C64::new(0.0, 0.0) {
                continue;
            }
            let s1 = (idx / st[i]) % d1;
            let s2 = (idx / st[i + 1]) % d2;
            let base = idx - s1 * st[i] - s2 * st[i + 1];
            for t1 in 0..d1 {
                for t2 in 0..d2 {
                    out[base + t1 * st[i] + t2 * st[i + 1]] += g[(t1 * d2 + t2, s1 * d2 + s2)] * amp;
                }
            }
        }
        self.psi = out;
    }

    pub fn swap(&mut self, i: usize) {
        let st = self.strides();
        let (d1, d2) = (self.dims[i], self.dims[i + 1]);
        let mut new_dims = self.dims.clone();
        new_dims.swap(i, i + 1);
        let mut tmp = Dense { dims: new_dims, psi: vec![C64::new(0.0, 0.0); self.psi.len()] };
        let nst = tmp.strides();
        for (idx, amp) in self.psi.iter().enumerate() {
            let s1 = (idx / st[i]) % d1;
            let s2 = (idx / st[i + 1]) % d2;
            let base = idx - s1 * st[i] - s2 * st[i + 1];
            // the prefix and suffix strides are unchanged
            tmp.psi[base + s2 * nst[i] + s1 * nst[i + 1]] = *amp;
        }
        *self = tmp;
    }

    pub fn apply_one(&mut self, i: usize, op: &CMatrix) {
        let st = self.strides();
        let d = self.dims[i];
        let mut out = vec![C64::new(0.0, 0.0); self.psi.len()];
        for (idx, amp) in self.psi.iter().enumerate() {
            let s = (idx / st[i]) % d;
            let base = idx - s * st[i];
            for t in 0..d {
                out[base + t * st[i]] += op[(t, s)] * amp;
            }
        }
        self.psi = out;
    }

    pub fn normalize(&mut self) {
        let n = self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        self.psi.iter_mut().for_each(|z| *z /= n);
    }

    pub fn reduced(&self, i: usize) -> CMatrix {
        let st = self.strides();
        let d = self.dims[i];
        let mut rho = CMatrix::zeros(d, d);
        for (idx, amp) in self.psi.iter().enumerate() {
            let s = (idx / st[i]) % d;
            let base = idx - s * st[i];
            for t in 0..d {
                rho[(s, t)] += amp * self.psi[base + t * st[i]].conj();
            }
        }
        rho
    }
}

pub fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn random_unitary(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let h = random_hermitian(n, rng);
    unitary_from_hermitian(&h, 2.0)
}

pub fn random_local(d: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

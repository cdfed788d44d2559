//! Single-mode Fock-space operators shared by the simulators.

use nalgebra::{Complex, DMatrix};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Truncated annihilation operator, `a|n⟩ = √n |n-1⟩`.
pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn creation(dim: usize) -> CMatrix {
    annihilation(dim).adjoint()
}

pub fn number(dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) })
}

/// `x = (a + a†)/√2`.
pub fn quadrature_x(dim: usize) -> CMatrix {
    let a = annihilation(dim);
    (&a + a.adjoint()) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
}

/// `y = i(a† - a)/√2`.
pub fn quadrature_y(dim: usize) -> CMatrix {
    let a = annihilation(dim);
    (a.adjoint() - &a) * C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2)
}

/// `tr(O ρ)`.
pub fn trace_product(op: &CMatrix, rho: &CMatrix) -> C64 {
    let n = op.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += op[(i, k)] * rho[(k, i)];
        }
    }
    acc
}

/// Matrix exponential of a Hermitian matrix times `-i t`, `exp(-i t H)`, via
/// its eigendecomposition.
pub fn unitary_from_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = nalgebra::linalg::SymmetricEigen::new(h.clone());
    let phases = eig.eigenvalues.map(|e| C64::from_polar(1.0, -t * e));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, p) in phases.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= *p;
        }
    }
    scaled * v.adjoint()
}

/// Coherent state `|α⟩` truncated to `dim` levels and renormalized.
pub fn coherent_state(alpha: C64, dim: usize) -> Vec<C64> {
    let mut v = Vec::with_capacity(dim);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        v.push(c);
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter().map(|z| z / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commutator_is_identity_below_cutoff() {
        let d = 8;
        let a = annihilation(d);
        let c = &a * a.adjoint() - a.adjoint() * &a;
        for i in 0..d - 1 {
            assert!((c[(i, i)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        assert!((number(d) - a.adjoint() * &a).norm() < 1e-14);
    }

    #[test]
    fn exponential_is_unitary() {
        let d = 6;
        let h = quadrature_x(d) + number(d) * C64::new(0.3, 0.0);
        let u = unitary_from_hermitian(&h, 0.7);
        let id = CMatrix::identity(d, d);
        assert!((&u * u.adjoint() - id).norm() < 1e-12);
        // first-order check against I - i t H
        let small = unitary_from_hermitian(&h, 1e-6);
        let approx = CMatrix::identity(d, d) - h * C64::new(0.0, 1e-6);
        assert!((small - approx).norm() < 1e-10);
    }

    #[test]
    fn coherent_state_moments() {
        let alpha = C64::new(0.4, -0.7);
        let v = coherent_state(alpha, 30);
        let psi = nalgebra::DVector::from_vec(v);
        let a = annihilation(30);
        let m = (psi.adjoint() * (&a * &psi))[(0, 0)];
        assert!((m - alpha).norm() < 1e-12);
    }
}

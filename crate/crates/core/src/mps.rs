//! Finite-chain matrix product states with a single orthogonality centre,
//! two-site gates with controlled SVD truncation, and local observables.
//!
//! Site tensors are stored column-major with index order `(left, phys, right)`,
//! so the same buffer reshapes for free into either a `(left·phys) × right`
//! or a `left × (phys·right)` matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ops::{CMatrix, C64};

/// Discarded weight per bond update above which a capped truncation is an
/// error rather than an approximation.
pub const HARD_DISCARD_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteTensor {
    pub left: usize,
    pub phys: usize,
    pub right: usize,
    pub data: Vec<C64>,
}

impl SiteTensor {
    fn zeros(left: usize, phys: usize, right: usize) -> Self {
        SiteTensor { left, phys, right, data: vec![C64::new(0.0, 0.0); left * phys * right] }
    }

    #[inline]
    fn idx(&self, l: usize, s: usize, r: usize) -> usize {
        l + self.left * (s + self.phys * r)
    }

    #[inline]
    pub fn get(&self, l: usize, s: usize, r: usize) -> C64 {
        self.data[self.idx(l, s, r)]
    }

    /// `(left·phys) × right` view as an owned matrix.
    fn as_left_matrix(&self) -> CMatrix {
        DMatrix::from_column_slice(self.left * self.phys, self.right, &self.data)
    }

    /// `left × (phys·right)` view as an owned matrix.
    fn as_right_matrix(&self) -> CMatrix {
        DMatrix::from_column_slice(self.left, self.phys * self.right, &self.data)
    }

    fn from_left_matrix(m: &CMatrix, phys: usize) -> Self {
        SiteTensor { left: m.nrows() / phys, phys, right: m.ncols(), data: m.as_slice().to_vec() }
    }

    fn from_right_matrix(m: &CMatrix, phys: usize) -> Self {
        SiteTensor { left: m.nrows(), phys, right: m.ncols() / phys, data: m.as_slice().to_vec() }
    }
}

/// Which of the two updated sites carries the orthogonality centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A gate on sites `site` and `site + 1`, indexed `s = s_left·d_right + s_right`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSiteGate {
    pub matrix: CMatrix,
    pub site: usize,
    pub unitary: bool,
}

impl TwoSiteGate {
    pub fn new(matrix: CMatrix, site: usize) -> Self {
        TwoSiteGate { matrix, site, unitary: true }
    }

    pub fn unitarity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        (&self.matrix * self.matrix.adjoint() - CMatrix::identity(n, n)).camax()
    }
}

/// The SWAP gate for local dimensions `d1` (left) and `d2` (right), mapping
/// `|a⟩|b⟩ → |b⟩|a⟩` with output indexed as `b·d1 + a`.
pub fn swap_matrix(d1: usize, d2: usize) -> CMatrix {
    let n = d1 * d2;
    let mut m = CMatrix::zeros(n, n);
    for a in 0..d1 {
        for b in 0..d2 {
            m[(b * d1 + a, a * d2 + b)] = C64::new(1.0, 0.0);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixProductState {
    sites: Vec<SiteTensor>,
    ortho_center: usize,
    pub max_bond: usize,
    pub svd_tol: f64,
    cum_discarded: f64,
    /// Logical system living at each chain position; swaps permute it.
    labels: Vec<usize>,
}

/// Product state `⊗ₖ |ψₖ⟩` with bond dimension 1 and the centre on site 0.
pub fn init_product_state(phys_dims: &[usize], local_states: &[Vec<C64>]) -> Result<MatrixProductState> {
    if phys_dims.is_empty() {
        return Err(Error::Dimension("a chain needs at least one site".into()));
    }
    if phys_dims.len() != local_states.len() {
        return Err(Error::Dimension(format!(
            "{} physical dimensions but {} local states",
            phys_dims.len(),
            local_states.len()
        )));
    }
    let mut sites = Vec::with_capacity(phys_dims.len());
    for (k, (&d, psi)) in phys_dims.iter().zip(local_states).enumerate() {
        if psi.len() != d {
            return Err(Error::Dimension(format!("site {k}: state of length {} for dimension {d}", psi.len())));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("site {k}: local state has norm {norm}")));
        }
        sites.push(SiteTensor { left: 1, phys: d, right: 1, data: psi.clone() });
    }
    Ok(MatrixProductState {
        sites,
        ortho_center: 0,
        max_bond: 64,
        svd_tol: 1e-8,
        cum_discarded: 0.0,
        labels: (0..phys_dims.len()).collect(),
    })
}

/// Basis state `|n⟩` of dimension `d`.
pub fn basis_state(d: usize, n: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); d];
    v[n] = C64::new(1.0, 0.0);
    v
}

impl MatrixProductState {
    pub fn with_truncation(mut self, max_bond: usize, svd_tol: f64) -> Self {
        self.max_bond = max_bond;
        self.svd_tol = svd_tol;
        self
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn ortho_center(&self) -> usize {
        self.ortho_center
    }

    pub fn cum_discarded(&self) -> f64 {
        self.cum_discarded
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.phys).collect()
    }

    pub fn phys_dim(&self, site: usize) -> usize {
        self.sites[site].phys
    }

    /// Bond dimensions between neighbouring sites (length `len - 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().take(self.sites.len() - 1).map(|s| s.right).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn site(&self, k: usize) -> &SiteTensor {
        &self.sites[k]
    }

    pub fn label_at(&self, pos: usize) -> usize {
        self.labels[pos]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn position_of(&self, label: usize) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites.len() {
            return Err(Error::Dimension(format!("site {site} outside a chain of {}", self.sites.len())));
        }
        Ok(())
    }

    /// Moves the orthogonality centre to `to` with QR sweeps.
    pub fn move_center(&mut self, to: usize) {
        while self.ortho_center < to {
            let i = self.ortho_center;
            let m = self.sites[i].as_left_matrix();
            let phys = self.sites[i].phys;
            let qr = m.qr();
            let (q, r) = (qr.q(), qr.r());
            self.sites[i] = SiteTensor::from_left_matrix(&q, phys);
            let next = &self.sites[i + 1];
            let nphys = next.phys;
            let merged = r * next.as_right_matrix();
            self.sites[i + 1] = SiteTensor::from_right_matrix(&merged, nphys);
            self.ortho_center += 1;
        }
        while self.ortho_center > to {
            let i = self.ortho_center;
            let m = self.sites[i].as_right_matrix();
            let phys = self.sites[i].phys;
            let qr = m.adjoint().qr();
            let (q, r) = (qr.q(), qr.r());
            self.sites[i] = SiteTensor::from_right_matrix(&q.adjoint(), phys);
            let prev = &self.sites[i - 1];
            let pphys = prev.phys;
            let merged = prev.as_left_matrix() * r.adjoint();
            self.sites[i - 1] = SiteTensor::from_left_matrix(&merged, pphys);
            self.ortho_center -= 1;
        }
    }

    /// Applies `gate` with the resulting centre on `gate.site + 1`.
    pub fn apply_two_site_gate(&mut self, gate: &TwoSiteGate) -> Result<()> {
        self.apply_two_site(gate, Side::Right, false)
    }

    pub fn apply_two_site_gate_centered(&mut self, gate: &TwoSiteGate, center: Side) -> Result<()> {
        self.apply_two_site(gate, center, false)
    }

    /// Applies `gate` and then exchanges the two sites in a single update.
    pub fn apply_gate_and_swap(&mut self, gate: &TwoSiteGate, center: Side) -> Result<()> {
        self.apply_two_site(gate, center, true)
    }

    /// Exchanges the physical content of sites `i` and `i + 1` and the
    /// logical labels that go with it. Observables of every logical system
    /// are unchanged.
    pub fn swap_sites(&mut self, i: usize) -> Result<()> {
        self.swap_sites_centered(i, Side::Right)
    }

    pub fn swap_sites_centered(&mut self, i: usize, center: Side) -> Result<()> {
        self.check_site(i + 1)?;
        let (d1, d2) = (self.sites[i].phys, self.sites[i + 1].phys);
        let gate = TwoSiteGate::new(CMatrix::identity(d1 * d2, d1 * d2), i);
        self.apply_two_site(&gate, center, true)
    }

    fn apply_two_site(&mut self, gate: &TwoSiteGate, center: Side, swap: bool) -> Result<()> {
        self.apply_gate_matrix(gate.site, &gate.matrix, center, swap)
    }

    /// Applies the two-site matrix `g` to sites `i`, `i + 1`, optionally
    /// exchanging them afterwards, and leaves the centre on `center`.
    pub fn apply_gate_matrix(&mut self, i: usize, g: &CMatrix, center: Side, swap: bool) -> Result<()> {
        self.check_site(i + 1)?;
        let (d1, d2) = (self.sites[i].phys, self.sites[i + 1].phys);
        if g.nrows() != d1 * d2 || g.ncols() != d1 * d2 {
            return Err(Error::Dimension(format!(
                "gate of size {}x{} on sites with dimensions {d1}, {d2}",
                g.nrows(),
                g.ncols()
            )));
        }
        if self.ortho_center < i {
            self.move_center(i);
        } else if self.ortho_center > i + 1 {
            self.move_center(i + 1);
        }
        let a = &self.sites[i];
        let b = &self.sites[i + 1];
        let (dl, dr) = (a.left, b.right);
        // θ[(l, s1), (s2, r)]
        let theta = a.as_left_matrix() * b.as_right_matrix();
        let (o1, o2) = if swap { (d2, d1) } else { (d1, d2) };
        let mut out = CMatrix::zeros(dl * o1, o2 * dr);
        let mut v = vec![C64::new(0.0, 0.0); d1 * d2];
        for r in 0..dr {
            for l in 0..dl {
                let mut any = false;
                for s1 in 0..d1 {
                    for s2 in 0..d2 {
                        let x = theta[(l + dl * s1, s2 + d2 * r)];
                        any |= x != C64::new(0.0, 0.0);
                        v[s1 * d2 + s2] = x;
                    }
                }
                if !any {
                    continue;
                }
                for t1 in 0..d1 {
                    for t2 in 0..d2 {
                        let row = t1 * d2 + t2;
                        let mut acc = C64::new(0.0, 0.0);
                        for (col, x) in v.iter().enumerate() {
                            acc += g[(row, col)] * x;
                        }
                        if swap {
                            out[(l + dl * t2, t1 + d1 * r)] = acc;
                        } else {
                            out[(l + dl * t1, t2 + d2 * r)] = acc;
                        }
                    }
                }
            }
        }
        self.split(i, out, o1, o2, center)?;
        if swap {
            self.labels.swap(i, i + 1);
        }
        Ok(())
    }

    /// Splits a two-site block back into sites `i`, `i + 1` by truncated SVD.
    fn split(&mut self, i: usize, theta: CMatrix, d1: usize, d2: usize, center: Side) -> Result<()> {
        let (s, u, vt) = svd(&theta)?;
        let total: f64 = s.iter().map(|x| x * x).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::numerical(format!("two-site block at bond {i} has norm {total}"), total));
        }
        // smallest k whose tail weight stays below tolerance
        let mut tail = 0.0;
        let mut keep = s.len();
        while keep > 1 {
            let w = s[keep - 1].powi(2) / total;
            if tail + w >= self.svd_tol && w > 0.0 {
                break;
            }
            tail += w;
            keep -= 1;
        }
        let mut discarded = tail;
        if keep > self.max_bond {
            discarded += s[self.max_bond..keep].iter().map(|x| x * x).sum::<f64>() / total;
            keep = self.max_bond;
            if discarded > HARD_DISCARD_LIMIT {
                return Err(Error::Truncation { bond: i, discarded, limit: HARD_DISCARD_LIMIT });
            }
        }
        self.cum_discarded += discarded;
        let kept_norm: f64 = s[..keep].iter().map(|x| x * x).sum::<f64>().sqrt();
        let rows = u.nrows();
        let mut left = CMatrix::zeros(rows, keep);
        let cols = vt.ncols();
        let mut right = CMatrix::zeros(keep, cols);
        for k in 0..keep {
            let sk = s[k] / kept_norm;
            let (lw, rw) = match center {
                Side::Left => (sk, 1.0),
                Side::Right => (1.0, sk),
            };
            for r in 0..rows {
                left[(r, k)] = u[(r, k)] * lw;
            }
            for c in 0..cols {
                right[(k, c)] = vt[(k, c)] * rw;
            }
        }
        self.sites[i] = SiteTensor::from_left_matrix(&left, d1);
        self.sites[i + 1] = SiteTensor::from_right_matrix(&right, d2);
        self.ortho_center = match center {
            Side::Left => i,
            Side::Right => i + 1,
        };
        Ok(())
    }

    /// Applies a single-site operator at `site`; non-unitary operators are
    /// followed by renormalization when `normalize` is set. Returns the
    /// squared norm of the state after the operator and before any
    /// renormalization.
    pub fn apply_single_site(&mut self, site: usize, op: &CMatrix, normalize: bool) -> Result<f64> {
        self.check_site(site)?;
        let d = self.sites[site].phys;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::Dimension(format!("{}x{} operator on a site of dimension {d}", op.nrows(), op.ncols())));
        }
        self.move_center(site);
        let t = &self.sites[site];
        let mut out = SiteTensor::zeros(t.left, d, t.right);
        for r in 0..t.right {
            for l in 0..t.left {
                for s in 0..d {
                    let mut acc = C64::new(0.0, 0.0);
                    for k in 0..d {
                        acc += op[(s, k)] * t.get(l, k, r);
                    }
                    let idx = out.idx(l, s, r);
                    out.data[idx] = acc;
                }
            }
        }
        let norm2: f64 = out.data.iter().map(|z| z.norm_sqr()).sum();
        if normalize {
            if !(norm2 > 0.0) {
                return Err(Error::numerical("single-site update annihilated the state", norm2));
            }
            let f = 1.0 / norm2.sqrt();
            out.data.iter_mut().for_each(|z| *z *= f);
        }
        self.sites[site] = out;
        Ok(norm2)
    }

    /// Reduced density matrix of the centre site.
    fn center_density(&self) -> CMatrix {
        let t = &self.sites[self.ortho_center];
        local_density(t, None, None)
    }

    /// Single-site reduced density operator `tr_{≠site} |ψ⟩⟨ψ|`, contracted
    /// from the orthogonality centre.
    pub fn reduced_density(&self, site: usize) -> Result<CMatrix> {
        self.check_site(site)?;
        let c = self.ortho_center;
        if site == c {
            return Ok(self.center_density());
        }
        if site > c {
            // environment from the left, starting at the centre
            let mut env = CMatrix::identity(self.sites[c].left, self.sites[c].left);
            for k in c..site {
                env = transfer_left(&env, &self.sites[k]);
            }
            Ok(local_density(&self.sites[site], Some(&env), None))
        } else {
            let mut env = CMatrix::identity(self.sites[c].right, self.sites[c].right);
            for k in (site + 1..=c).rev() {
                env = transfer_right(&env, &self.sites[k]);
            }
            Ok(local_density(&self.sites[site], None, Some(&env)))
        }
    }

    /// `⟨ψ|O_site|ψ⟩`.
    pub fn local_expectation(&self, site: usize, op: &CMatrix) -> Result<C64> {
        self.check_site(site)?;
        let d = self.sites[site].phys;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::Dimension(format!("{}x{} operator on a site of dimension {d}", op.nrows(), op.ncols())));
        }
        let rho = self.reduced_density(site)?;
        Ok(crate::ops::trace_product(op, &rho))
    }

    /// `⟨n̂⟩` on every site in two sweeps out of the centre.
    pub fn population_snapshot(&self) -> Vec<f64> {
        let n = self.sites.len();
        let c = self.ortho_center;
        let mut pops = vec![0.0; n];
        let number = |rho: &CMatrix| (0..rho.nrows()).map(|k| k as f64 * rho[(k, k)].re).sum::<f64>();
        pops[c] = number(&self.center_density());
        let mut env = CMatrix::identity(self.sites[c].left, self.sites[c].left);
        for k in c..n - 1 {
            env = transfer_left(&env, &self.sites[k]);
            pops[k + 1] = number(&local_density(&self.sites[k + 1], Some(&env), None));
        }
        let mut env = CMatrix::identity(self.sites[c].right, self.sites[c].right);
        for k in (1..=c).rev() {
            env = transfer_right(&env, &self.sites[k]);
            pops[k - 1] = number(&local_density(&self.sites[k - 1], None, Some(&env)));
        }
        pops
    }

    pub fn norm(&self) -> f64 {
        self.overlap(self).re.sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &MatrixProductState) -> C64 {
        let mut env = CMatrix::identity(1, 1);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let mut next = CMatrix::zeros(a.right, b.right);
            for s in 0..a.phys {
                let am = slice_matrix(a, s);
                let bm = slice_matrix(b, s);
                next += am.adjoint() * &env * bm;
            }
            env = next;
        }
        env[(0, 0)]
    }

    /// Full state vector with site 0 as the slowest index. Intended for
    /// short chains only.
    pub fn to_dense(&self) -> Vec<C64> {
        let mut acc = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for t in &self.sites {
            let mut next = CMatrix::zeros(acc.nrows() * t.phys, t.right);
            for row in 0..acc.nrows() {
                for s in 0..t.phys {
                    let piece = acc.row(row) * slice_matrix(t, s);
                    next.row_mut(row * t.phys + s).copy_from(&piece);
                }
            }
            acc = next;
        }
        acc.column(0).iter().cloned().collect()
    }

    /// Largest deviation from the isometry conditions of the mixed canonical
    /// form.
    pub fn canonical_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, t) in self.sites.iter().enumerate() {
            if k < self.ortho_center {
                let m = t.as_left_matrix();
                let g = m.adjoint() * &m;
                worst = worst.max((g - CMatrix::identity(t.right, t.right)).camax());
            } else if k > self.ortho_center {
                let m = t.as_right_matrix();
                let g = &m * m.adjoint();
                worst = worst.max((g - CMatrix::identity(t.left, t.left)).camax());
            }
        }
        worst
    }

    pub fn bonds_consistent(&self) -> bool {
        let n = self.sites.len();
        self.sites[0].left == 1
            && self.sites[n - 1].right == 1
            && self.sites.windows(2).all(|w| w[0].right == w[1].left)
    }
}

/// Thin SVD `θ = U diag(s) V†`, singular values in nonincreasing order.
fn svd(theta: &CMatrix) -> Result<(Vec<f64>, CMatrix, CMatrix)> {
    let (m, n) = theta.shape();
    let f = faer::Mat::<faer::c64>::from_fn(m, n, |i, j| theta[(i, j)]);
    let dec = f.thin_svd().map_err(|e| Error::numerical(format!("SVD did not converge: {e:?}"), f64::NAN))?;
    let (u, v, sv) = (dec.U(), dec.V(), dec.S().column_vector());
    let k = m.min(n);
    let s: Vec<f64> = (0..k).map(|i| sv[i].re).collect();
    let um = CMatrix::from_fn(m, k, |i, j| u[(i, j)]);
    let vt = CMatrix::from_fn(k, n, |i, j| v[(j, i)].conj());
    Ok((s, um, vt))
}

/// `A[:, s, :]` as a `left × right` matrix.
fn slice_matrix(t: &SiteTensor, s: usize) -> CMatrix {
    CMatrix::from_fn(t.left, t.right, |l, r| t.get(l, s, r))
}

/// `E' = Σ_s A_s† E A_s`.
fn transfer_left(env: &CMatrix, t: &SiteTensor) -> CMatrix {
    let mut out = CMatrix::zeros(t.right, t.right);
    for s in 0..t.phys {
        let a = slice_matrix(t, s);
        out += a.adjoint() * env * &a;
    }
    out
}

/// `E' = Σ_s A_s E A_s†`.
fn transfer_right(env: &CMatrix, t: &SiteTensor) -> CMatrix {
    let mut out = CMatrix::zeros(t.left, t.left);
    for s in 0..t.phys {
        let a = slice_matrix(t, s);
        out += &a * env * a.adjoint();
    }
    out
}

/// Single-site density matrix from a site tensor and optional left (bra,
/// ket) and right (ket, bra) environments; a missing environment is the
/// identity.
fn local_density(t: &SiteTensor, left: Option<&CMatrix>, right: Option<&CMatrix>) -> CMatrix {
    let d = t.phys;
    let slices: Vec<CMatrix> = (0..d).map(|s| slice_matrix(t, s)).collect();
    let mut rho = CMatrix::zeros(d, d);
    for s in 0..d {
        let ls = match left {
            Some(e) => e * &slices[s],
            None => slices[s].clone(),
        };
        let lsr = match right {
            Some(e) => ls * e,
            None => ls,
        };
        for sp in 0..d {
            rho[(s, sp)] = lsr.iter().zip(slices[sp].iter()).map(|(x, y)| x * y.conj()).sum();
        }
    }
    rho
}

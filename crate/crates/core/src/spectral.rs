//! Biorthonormal eigensystem of ℒ₀ and its slow/fast partition.

use std::cmp::Ordering;
use std::sync::OnceLock;

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::superop::SuperOp;

pub const DEFAULT_ZERO_TOL: f64 = 1e-9;
pub const CONDITION_LIMIT: f64 = 1e8;

// Eigenvalues closer than this (relative to the spectral radius) are
// treated as one degenerate cluster.
const CLUSTER_TOL: f64 = 1e-8;

/// Eigen-decomposition of ℒ₀ with `left · right = 1`.
#[derive(Debug)]
pub struct SpectralData {
    hdim: usize,
    generator: Mat<c64>,
    eigenvalues: Vec<c64>,
    right: Mat<c64>,
    left: Mat<c64>,
    slow: Vec<usize>,
    fast: Vec<usize>,
    gap: f64,
    condition: f64,
    p: OnceLock<Mat<c64>>,
    linv: OnceLock<Mat<c64>>,
}

impl Clone for SpectralData {
    fn clone(&self) -> Self {
        Self {
            hdim: self.hdim,
            generator: self.generator.clone(),
            eigenvalues: self.eigenvalues.clone(),
            right: self.right.clone(),
            left: self.left.clone(),
            slow: self.slow.clone(),
            fast: self.fast.clone(),
            gap: self.gap,
            condition: self.condition,
            p: self.p.clone(),
            linv: self.linv.clone(),
        }
    }
}

impl SpectralData {
    pub fn hdim(&self) -> usize {
        self.hdim
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The decomposed generator ℒ₀.
    pub fn generator(&self) -> MatRef<'_, c64> {
        self.generator.as_ref()
    }

    pub fn eigenvalues(&self) -> &[c64] {
        &self.eigenvalues
    }

    /// Columns are the right eigenvectors `|r_i⟩`.
    pub fn right_vectors(&self) -> MatRef<'_, c64> {
        self.right.as_ref()
    }

    /// Rows are the left eigenvectors `⟨l_i|`.
    pub fn left_vectors(&self) -> MatRef<'_, c64> {
        self.left.as_ref()
    }

    pub fn slow_indices(&self) -> &[usize] {
        &self.slow
    }

    pub fn fast_indices(&self) -> &[usize] {
        &self.fast
    }

    pub fn slow_dim(&self) -> usize {
        self.slow.len()
    }

    /// `min |λ|` over the fast set; `+∞` when the fast set is empty.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// 1-norm condition number of the right-vector matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// `d² × n_slow` matrix of slow right vectors.
    pub fn slow_right(&self) -> Mat<c64> {
        Mat::from_fn(self.dim(), self.slow.len(), |i, k| self.right[(i, self.slow[k])])
    }

    /// `n_slow × d²` matrix of slow left vectors.
    pub fn slow_left(&self) -> Mat<c64> {
        Mat::from_fn(self.slow.len(), self.dim(), |k, j| self.left[(self.slow[k], j)])
    }

    /// Dense `P = Σ_slow |r⟩⟨l|`, cached.
    pub fn p_dense(&self) -> &Mat<c64> {
        self.p.get_or_init(|| self.slow_right() * self.slow_left())
    }

    pub fn q_dense(&self) -> Mat<c64> {
        linalg::identity(self.dim()) - self.p_dense()
    }

    /// Dense `(Qℒ₀Q)⁻¹ = Σ_fast λ⁻¹ |r⟩⟨l|`, cached.
    pub fn fast_inverse_dense(&self) -> Result<&Mat<c64>> {
        if self.gap == 0.0 {
            return Err(Error::ZeroGap);
        }
        Ok(self.linv.get_or_init(|| {
            let n = self.dim();
            let f = &self.fast;
            let rf = Mat::from_fn(n, f.len(), |i, k| self.right[(i, f[k])] / self.eigenvalues[f[k]]);
            let lf = Mat::from_fn(f.len(), n, |k, j| self.left[(f[k], j)]);
            rf * lf
        }))
    }

    /// `PAP + QAQ`.
    pub fn diagonal_part(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        let p = self.p_dense();
        let pa = p * a;
        let ap = a * p;
        let pap = &pa * p;
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - pa[(i, j)] - ap[(i, j)] + pap[(i, j)] * 2.0)
    }

    /// `PAQ + QAP`.
    pub fn off_diagonal_part(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        let p = self.p_dense();
        let pa = p * a;
        let ap = a * p;
        let pap = &pa * p;
        Mat::from_fn(a.nrows(), a.ncols(), |i, j| pa[(i, j)] + ap[(i, j)] - pap[(i, j)] * 2.0)
    }

    /// `ℒ₀⁻¹ A P − P A ℒ₀⁻¹` on dense matrices.
    pub fn resolvent_dense(&self, a: MatRef<'_, c64>) -> Result<Mat<c64>> {
        let linv = self.fast_inverse_dense()?;
        let p = self.p_dense();
        Ok(linv * (a * p) - p * (a * linv))
    }

    /// Slow-space coordinates of `A`: `L_slow · A · R_slow`.
    pub fn slow_block(&self, a: MatRef<'_, c64>) -> Mat<c64> {
        self.slow_left() * (a * self.slow_right())
    }
}

fn spectral_radius(values: &[c64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn cmp_eig(a: c64, b: c64, tol: f64) -> Ordering {
    if (a.re - b.re).abs() > tol {
        b.re.total_cmp(&a.re)
    } else if (a.im - b.im).abs() > tol {
        b.im.total_cmp(&a.im)
    } else {
        Ordering::Equal
    }
}

/// Group indices of nearly equal eigenvalues.
fn clusters(values: &[c64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut centers: Vec<c64> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match centers.iter().position(|&c| (c - v).norm() <= tol) {
            Some(g) => groups[g].push(i),
            None => {
                groups.push(vec![i]);
                centers.push(v);
            }
        }
    }
    groups
}

/// Basis of the column span of `v` that equals the identity on a greedily
/// chosen set of pivot rows. Gives sparse, reproducible vectors for
/// degenerate eigenspaces.
fn pivoted_basis(v: MatRef<'_, c64>) -> Mat<c64> {
    let (n, m) = (v.nrows(), v.ncols());
    let mut work = v.to_owned();
    let mut pivots = Vec::with_capacity(m);
    for k in 0..m {
        let best = (0..n)
            .filter(|r| !pivots.contains(r))
            .map(|r| work[(r, k)].norm())
            .fold(0.0, f64::max);
        let r = (0..n)
            .filter(|r| !pivots.contains(r))
            .find(|&r| work[(r, k)].norm() >= best * (1.0 - 1e-9))
            .expect("nonempty");
        let piv = work[(r, k)];
        for c in k + 1..m {
            let f = work[(r, c)] / piv;
            for i in 0..n {
                let w = work[(i, k)];
                work[(i, c)] -= f * w;
            }
        }
        pivots.push(r);
    }
    let square = Mat::from_fn(m, m, |a, b| v[(pivots[a], b)]);
    let mut out = v * linalg::inverse(square.as_ref());
    // exact zeros and ones on pivot rows
    for (k, &r) in pivots.iter().enumerate() {
        for c in 0..m {
            out[(r, c)] = if c == k { c64::new(1.0, 0.0) } else { ZERO };
        }
    }
    out
}

/// Scale `v` so its first largest-modulus entry equals one.
fn normalize_column(v: &mut Mat<c64>, col: usize) {
    let n = v.nrows();
    let best = (0..n).map(|i| v[(i, col)].norm()).fold(0.0, f64::max);
    if best == 0.0 {
        return;
    }
    let i = (0..n).find(|&i| v[(i, col)].norm() >= best * (1.0 - 1e-9)).unwrap();
    let s = v[(i, col)];
    for r in 0..n {
        v[(r, col)] /= s;
    }
    v[(i, col)] = c64::new(1.0, 0.0);
}

fn null_space(a: MatRef<'_, c64>, m: usize, tol: f64) -> Result<Mat<c64>> {
    let svd = a.svd().map_err(|_| Error::NoConvergence)?;
    let n = a.ncols();
    let s = svd.S().column_vector();
    let smallest = s[n - m];
    if smallest.re > tol {
        return Err(Error::DefectiveOperator {
            condition: f64::INFINITY,
        });
    }
    let v = svd.V();
    Ok(Mat::from_fn(n, m, |i, k| v[(i, n - m + k)]))
}

/// Eigen-decompose ℒ₀ and split off the slow set `|λ| ≤ zero_tol · max(1, ρ)`.
pub fn decompose(l0: &SuperOp, zero_tol: f64) -> Result<SpectralData> {
    let a = l0.dense();
    let a = a.as_ref().as_ref();
    let n = a.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty superoperator".into()));
    }
    if !(zero_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("invalid zero tolerance {zero_tol}")));
    }
    let evd = a.eigen().map_err(|_| Error::NoConvergence)?;
    let raw: Vec<c64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let rho = spectral_radius(&raw);
    let scale = rho.max(1.0);
    let ctol = CLUSTER_TOL * scale;

    let mut groups = clusters(&raw, ctol);
    let centers: Vec<c64> = groups
        .iter()
        .map(|g| g.iter().map(|&i| raw[i]).sum::<c64>() / g.len() as f64)
        .collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&x, &y| cmp_eig(centers[x], centers[y], ctol));
    let groups_sorted: Vec<(c64, Vec<usize>)> = order
        .iter()
        .map(|&g| (centers[g], std::mem::take(&mut groups[g])))
        .collect();

    let mut right = Mat::<c64>::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    let mut col = 0;
    for (center, members) in &groups_sorted {
        let m = members.len();
        if m == 1 {
            let i = members[0];
            for r in 0..n {
                right[(r, col)] = u[(r, i)];
            }
            normalize_column(&mut right, col);
            values.push(raw[i]);
            col += 1;
            continue;
        }
        let vc = Mat::from_fn(n, m, |r, k| u[(r, members[k])]);
        let q = vc.qr().compute_thin_Q();
        let resid = a * &q - &q * faer::Scale(*center);
        let basis = if linalg::max_abs(resid.as_ref()) <= 1e-9 * scale {
            q
        } else {
            let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { *center } else { ZERO });
            null_space(shifted.as_ref(), m, 1e-7 * scale)?
        };
        let basis = pivoted_basis(basis.as_ref());
        for k in 0..m {
            for r in 0..n {
                right[(r, col)] = basis[(r, k)];
            }
            normalize_column(&mut right, col);
            values.push(*center);
            col += 1;
        }
    }

    let left = linalg::inverse(right.as_ref());
    let condition = linalg::norm_one(right.as_ref()) * linalg::norm_one(left.as_ref());
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(Error::DefectiveOperator { condition });
    }
    // eigen-residual guards against a nearly defective ℒ₀ that slipped through
    let lam = Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { ZERO });
    let resid = a * &right - &right * &lam;
    if linalg::max_abs(resid.as_ref()) > 1e-7 * scale * linalg::max_abs(right.as_ref()) {
        return Err(Error::DefectiveOperator { condition });
    }

    let threshold = zero_tol * scale;
    let (slow, fast): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| values[i].norm() <= threshold);
    if slow.is_empty() {
        return Err(Error::EmptySlowSpace);
    }
    let gap = fast.iter().map(|&i| values[i].norm()).fold(f64::INFINITY, f64::min);
    Ok(SpectralData {
        hdim: l0.hdim(),
        generator: a.to_owned(),
        eigenvalues: values,
        right,
        left,
        slow,
        fast,
        gap,
        condition,
        p: OnceLock::new(),
        linv: OnceLock::new(),
    })
}

/// `P` and `Q = 1 − P` as superoperators.
#[derive(Clone, Debug)]
pub struct Projectors {
    pub p: SuperOp,
    pub q: SuperOp,
    pub slow_dim: usize,
}

pub fn projectors(sd: &SpectralData) -> Projectors {
    let p = SuperOp::from_dense(sd.hdim, sd.p_dense().clone()).expect("square");
    let q = SuperOp::from_dense(sd.hdim, sd.q_dense()).expect("square");
    Projectors {
        p,
        q,
        slow_dim: sd.slow_dim(),
    }
}

/// `(Qℒ₀Q)⁻¹`, zero on the slow space.
pub fn fast_inverse(sd: &SpectralData) -> Result<SuperOp> {
    SuperOp::from_dense(sd.hdim, sd.fast_inverse_dense()?.clone())
}

/// `ℛ₀ A = Qℒ₀⁻¹AP − PAℒ₀⁻¹Q`.
pub fn resolvent_apply(sd: &SpectralData, a: &SuperOp) -> Result<SuperOp> {
    if a.hdim() != sd.hdim {
        return Err(Error::dim("resolvent argument", sd.hdim, a.hdim()));
    }
    SuperOp::from_dense(sd.hdim, sd.resolvent_dense(a.dense().as_ref().as_ref())?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbativeReport {
    pub gap: f64,
    pub norm: f64,
    pub ok: bool,
}

/// Checks `Δ > 2ε‖𝒱‖` with the spectral norm.
pub fn check_perturbative_limit(sd: &SpectralData, v: &SuperOp, epsilon: f64) -> PerturbativeReport {
    let norm = v.spectral_norm();
    PerturbativeReport {
        gap: sd.gap,
        norm,
        ok: sd.gap > 2.0 * epsilon * norm,
    }
}

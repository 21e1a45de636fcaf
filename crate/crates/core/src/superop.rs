//! Vectorized operators and superoperators.
//!
//! Operators are row-stacked: component `i*d + j` of `vec(ρ)` is `ρ[i][j]`.
//! Under this convention `χ ↦ AχB` has matrix `A ⊗ Bᵀ`.

use std::borrow::Cow;

use faer::sparse::{SparseRowMat, Triplet};
use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{self, re, I, ONE, ZERO};
use crate::operator::OperatorMatrix;

/// Storage is sparse below this fill ratio.
pub const SPARSE_FILL_RATIO: f64 = 0.1;

#[derive(Clone, Debug)]
enum Storage {
    Dense(Mat<c64>),
    Sparse(SparseRowMat<usize, c64>),
}

/// Linear map on vectorized operators of a `hdim`-dimensional Hilbert space.
#[derive(Clone, Debug)]
pub struct SuperOp {
    hdim: usize,
    storage: Storage,
}

impl SuperOp {
    pub fn from_dense(hdim: usize, m: Mat<c64>) -> Result<Self> {
        let n = hdim * hdim;
        if m.nrows() != n {
            return Err(Error::dim("superoperator rows", n, m.nrows()));
        }
        if m.ncols() != n {
            return Err(Error::dim("superoperator columns", n, m.ncols()));
        }
        Ok(Self {
            hdim,
            storage: Storage::Dense(m),
        })
    }

    /// Build from `(row, col, value)` entries; duplicates are summed. The
    /// storage kind follows the fill ratio of the merged entries.
    pub fn from_triplets(hdim: usize, mut entries: Vec<(usize, usize, c64)>) -> Self {
        let n = hdim * hdim;
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<Triplet<usize, usize, c64>> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < n && c < n, "triplet index out of range");
            match merged.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => merged.push(Triplet::new(r, c, v)),
            }
        }
        merged.retain(|t| t.val != ZERO);
        let fill = if n == 0 { 1.0 } else { merged.len() as f64 / (n * n) as f64 };
        let storage = if fill < SPARSE_FILL_RATIO {
            Storage::Sparse(
                SparseRowMat::try_new_from_triplets(n, n, &merged).expect("indices checked above"),
            )
        } else {
            let mut m = Mat::zeros(n, n);
            for t in &merged {
                m[(t.row, t.col)] = t.val;
            }
            Storage::Dense(m)
        };
        Self { hdim, storage }
    }

    pub fn identity(hdim: usize) -> Self {
        let n = hdim * hdim;
        Self::from_triplets(hdim, (0..n).map(|i| (i, i, ONE)).collect())
    }

    pub fn zeros(hdim: usize) -> Self {
        Self::from_triplets(hdim, Vec::new())
    }

    /// Hilbert-space dimension d.
    pub fn hdim(&self) -> usize {
        self.hdim
    }

    /// Matrix dimension d².
    pub fn dim(&self) -> usize {
        self.hdim * self.hdim
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse(_))
    }

    /// Stored nonzeros (all entries for dense storage).
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense(m) => m.nrows() * m.ncols(),
            Storage::Sparse(s) => s.compute_nnz(),
        }
    }

    pub fn dense(&self) -> Cow<'_, Mat<c64>> {
        match &self.storage {
            Storage::Dense(m) => Cow::Borrowed(m),
            Storage::Sparse(s) => Cow::Owned(s.to_dense()),
        }
    }

    pub fn into_dense(self) -> Mat<c64> {
        match self.storage {
            Storage::Dense(m) => m,
            Storage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Sparse(s) => {
                let rp = s.symbolic().row_ptr();
                let cols = &s.symbolic().col_idx()[rp[i]..rp[i + 1]];
                match cols.binary_search(&j) {
                    Ok(k) => s.val()[rp[i] + k],
                    Err(_) => ZERO,
                }
            }
        }
    }

    /// `y = G x`.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let mut y = vec![ZERO; self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[c64], y: &mut [c64]) {
        let n = self.dim();
        assert_eq!(x.len(), n, "vector length");
        assert_eq!(y.len(), n, "vector length");
        match &self.storage {
            Storage::Dense(m) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut acc = ZERO;
                    for (j, xj) in x.iter().enumerate() {
                        acc += m[(i, j)] * xj;
                    }
                    *yi = acc;
                }
            }
            Storage::Sparse(s) => {
                let rp = s.symbolic().row_ptr();
                let ci = s.symbolic().col_idx();
                let val = s.val();
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut acc = ZERO;
                    for k in rp[i]..rp[i + 1] {
                        acc += val[k] * x[ci[k]];
                    }
                    *yi = acc;
                }
            }
        }
    }

    /// Apply to an operator: `devec(G vec(ρ))`.
    pub fn apply_operator(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix> {
        if rho.dim() != self.hdim {
            return Err(Error::dim("superoperator argument", self.hdim, rho.dim()));
        }
        Ok(devectorize(&self.apply(&vectorize(rho))))
    }

    fn check_same(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.hdim != other.hdim {
            return Err(Error::dim(context, self.hdim, other.hdim));
        }
        Ok(())
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        match (&self.storage, &other.storage) {
            (Storage::Sparse(_), Storage::Sparse(_)) => {
                let mut t = self.triplets();
                t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, v * sign)));
                Self::from_triplets(self.hdim, t)
            }
            _ => {
                let a = self.dense();
                let b = other.dense();
                let m = Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] + b[(i, j)] * sign);
                Self {
                    hdim: self.hdim,
                    storage: Storage::Dense(m),
                }
            }
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "superoperator sum")?;
        Ok(self.combine(other, 1.0))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "superoperator difference")?;
        Ok(self.combine(other, -1.0))
    }

    /// Composition `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same(other, "superoperator product")?;
        let m = match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => a * b,
            (Storage::Sparse(a), Storage::Dense(b)) => a * b,
            (Storage::Dense(a), Storage::Sparse(b)) => a * b,
            (Storage::Sparse(a), Storage::Sparse(b)) => {
                return Ok(Self::from_triplets(self.hdim, sparse_product(a, b)));
            }
        };
        Ok(Self {
            hdim: self.hdim,
            storage: Storage::Dense(m),
        })
    }

    pub fn scale(&self, s: c64) -> Self {
        match &self.storage {
            Storage::Dense(m) => Self {
                hdim: self.hdim,
                storage: Storage::Dense(linalg::scaled(m.as_ref(), s)),
            },
            Storage::Sparse(_) => Self::from_triplets(
                self.hdim,
                self.triplets().into_iter().map(|(r, c, v)| (r, c, v * s)).collect(),
            ),
        }
    }

    /// Nonzero entries as `(row, col, value)`.
    pub fn triplets(&self) -> Vec<(usize, usize, c64)> {
        match &self.storage {
            Storage::Dense(m) => {
                let mut out = Vec::new();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if m[(i, j)] != ZERO {
                            out.push((i, j, m[(i, j)]));
                        }
                    }
                }
                out
            }
            Storage::Sparse(s) => {
                let rp = s.symbolic().row_ptr();
                let ci = s.symbolic().col_idx();
                let val = s.val();
                let mut out = Vec::with_capacity(val.len());
                for i in 0..s.nrows() {
                    for k in rp[i]..rp[i + 1] {
                        out.push((i, ci[k], val[k]));
                    }
                }
                out
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => linalg::max_abs(m.as_ref()),
            Storage::Sparse(s) => s.val().iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        linalg::max_abs_diff(self.dense().as_ref().as_ref(), other.dense().as_ref().as_ref())
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm(self.dense().as_ref().as_ref())
    }

    /// `vec(I)† G`, which vanishes for trace-preserving generators.
    pub fn trace_row(&self) -> Vec<c64> {
        let d = self.hdim;
        let mut row = vec![ZERO; self.dim()];
        for (r, c, v) in self.triplets() {
            if r / d == r % d {
                row[c] += v;
            }
        }
        row
    }
}

fn sparse_product(a: &SparseRowMat<usize, c64>, b: &SparseRowMat<usize, c64>) -> Vec<(usize, usize, c64)> {
    let (arp, aci, av) = (a.symbolic().row_ptr(), a.symbolic().col_idx(), a.val());
    let (brp, bci, bv) = (b.symbolic().row_ptr(), b.symbolic().col_idx(), b.val());
    let mut out = Vec::new();
    for i in 0..a.nrows() {
        for k in arp[i]..arp[i + 1] {
            let m = aci[k];
            for l in brp[m]..brp[m + 1] {
                out.push((i, bci[l], av[k] * bv[l]));
            }
        }
    }
    out
}

/// Row-stacked vectorization.
pub fn vectorize(rho: &OperatorMatrix) -> Vec<c64> {
    let d = rho.dim();
    let m = rho.mat();
    (0..d * d).map(|k| m[(k / d, k % d)]).collect()
}

/// Inverse of [`vectorize`]. Panics if the length is not a perfect square.
pub fn devectorize(v: &[c64]) -> OperatorMatrix {
    let d = (v.len() as f64).sqrt().round() as usize;
    assert_eq!(d * d, v.len(), "vector length is not a perfect square");
    OperatorMatrix::from_fn(d, |i, j| v[i * d + j])
}

fn sandwich_triplets(a: MatRef<'_, c64>, b: MatRef<'_, c64>, coef: c64, out: &mut Vec<(usize, usize, c64)>) {
    let d = a.nrows();
    let nz = |m: MatRef<'_, c64>| {
        let mut v = Vec::new();
        for i in 0..d {
            for j in 0..d {
                if m[(i, j)] != ZERO {
                    v.push((i, j, m[(i, j)]));
                }
            }
        }
        v
    };
    let an = nz(a);
    let bn = nz(b);
    // (AχB)_{ij} = Σ A_ik χ_kl B_lj
    for &(i, k, av) in &an {
        for &(l, j, bv) in &bn {
            out.push((i * d + j, k * d + l, coef * av * bv));
        }
    }
}

/// Superoperator of `χ ↦ AχB`.
pub fn sandwich_superop(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<SuperOp> {
    if a.dim() != b.dim() {
        return Err(Error::dim("sandwich", a.dim(), b.dim()));
    }
    let mut t = Vec::new();
    sandwich_triplets(a.mat(), b.mat(), ONE, &mut t);
    Ok(SuperOp::from_triplets(a.dim(), t))
}

/// `−i[H, ·]` as triplets.
fn commutator_triplets(h: &OperatorMatrix, out: &mut Vec<(usize, usize, c64)>) {
    let id = OperatorMatrix::identity(h.dim());
    sandwich_triplets(h.mat(), id.mat(), -I, out);
    sandwich_triplets(id.mat(), h.mat(), I, out);
}

/// Generator data: `H₀`, jump channels and perturbing Hamiltonians.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    pub hamiltonian: OperatorMatrix,
    pub jumps: Vec<(f64, OperatorMatrix)>,
    pub perturbation_hamiltonians: Vec<OperatorMatrix>,
    pub epsilon: f64,
}

impl LindbladSpec {
    pub fn new(hamiltonian: OperatorMatrix) -> Self {
        Self {
            hamiltonian,
            jumps: Vec::new(),
            perturbation_hamiltonians: Vec::new(),
            epsilon: 0.0,
        }
    }

    pub fn with_jump(mut self, rate: f64, op: OperatorMatrix) -> Self {
        self.jumps.push((rate, op));
        self
    }

    pub fn with_perturbation(mut self, h: OperatorMatrix) -> Self {
        self.perturbation_hamiltonians.push(h);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn hdim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.hdim();
        let herm_err = self.hamiltonian.hermiticity_error();
        if herm_err > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "hamiltonian is not hermitian (error {herm_err:.3e})"
            )));
        }
        for (k, (rate, op)) in self.jumps.iter().enumerate() {
            if !(*rate >= 0.0) || !rate.is_finite() {
                return Err(Error::InvalidArgument(format!("jump {k} has invalid rate {rate}")));
            }
            if op.dim() != d {
                return Err(Error::dim("jump operator", d, op.dim()));
            }
        }
        for h in &self.perturbation_hamiltonians {
            if h.dim() != d {
                return Err(Error::dim("perturbation hamiltonian", d, h.dim()));
            }
            let e = h.hermiticity_error();
            if e > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "perturbation hamiltonian is not hermitian (error {e:.3e})"
                )));
            }
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid epsilon {}", self.epsilon)));
        }
        Ok(())
    }
}

/// `(ℒ₀, 𝒱)` for `ρ̇ = (ℒ₀ + ε𝒱)ρ`. ε is not applied to 𝒱.
pub fn lindblad_superop(spec: &LindbladSpec) -> Result<(SuperOp, SuperOp)> {
    spec.validate()?;
    let d = spec.hdim();
    let id = OperatorMatrix::identity(d);
    let mut t = Vec::new();
    commutator_triplets(&spec.hamiltonian, &mut t);
    for (rate, l) in &spec.jumps {
        if *rate == 0.0 {
            continue;
        }
        let ld = l.dagger();
        let ldl = &ld * l;
        sandwich_triplets(l.mat(), ld.mat(), re(*rate), &mut t);
        sandwich_triplets(ldl.mat(), id.mat(), re(-0.5 * rate), &mut t);
        sandwich_triplets(id.mat(), ldl.mat(), re(-0.5 * rate), &mut t);
    }
    let l0 = SuperOp::from_triplets(d, t);
    let mut t = Vec::new();
    for h in &spec.perturbation_hamiltonians {
        commutator_triplets(h, &mut t);
    }
    Ok((l0, SuperOp::from_triplets(d, t)))
}

/// Structural checks of a candidate Lindblad generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorDiagnostics {
    /// `max |vec(I)† G|`.
    pub trace_error: f64,
    /// `max |G(X)† − G(X†)|` over matrix units.
    pub hermiticity_error: f64,
    /// Smallest eigenvalue of the Choi matrix of `G` compressed to the
    /// complement of the maximally entangled vector. Non-negative exactly
    /// for generators of Lindblad form.
    pub conditional_eigmin: f64,
}

pub fn generator_diagnostics(g: &SuperOp) -> GeneratorDiagnostics {
    let d = g.hdim();
    let m = g.dense();
    let trace_error = g.trace_row().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut hermiticity_error = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for i in 0..d {
                for j in 0..d {
                    let lhs = m[(a * d + b, i * d + j)].conj();
                    let rhs = m[(b * d + a, j * d + i)];
                    hermiticity_error = hermiticity_error.max((lhs - rhs).norm());
                }
            }
        }
    }
    // C[(a,i),(b,j)] = G(|i⟩⟨j|)_ab
    let choi = Mat::from_fn(d * d, d * d, |r, c| {
        let (a, i) = (r / d, r % d);
        let (b, j) = (c / d, c % d);
        m[(a * d + b, i * d + j)]
    });
    let omega = Mat::from_fn(d * d, 1, |r, _| if r / d == r % d { re(1.0 / (d as f64).sqrt()) } else { ZERO });
    let proj = linalg::identity(d * d) - &omega * omega.adjoint();
    let compressed = &proj * &choi * &proj;
    // the Ω direction is annihilated by the projector and shows up as an
    // exact zero, so it cannot mask a negative eigenvalue
    GeneratorDiagnostics {
        trace_error,
        hermiticity_error,
        conditional_eigmin: linalg::hermitian_eigmin(compressed.as_ref()),
    }
}

/// `Ŝ ℒ = [ℒ, S] = ℒS − Sℒ`.
pub fn hat_apply(s: &SuperOp, l: &SuperOp) -> Result<SuperOp> {
    l.compose(s)?.try_sub(&s.compose(l)?)
}

/// Dense variant of [`hat_apply`] used inside the series recursion.
pub(crate) fn hat_dense(s: MatRef<'_, c64>, l: MatRef<'_, c64>) -> Mat<c64> {
    l * s - s * l
}

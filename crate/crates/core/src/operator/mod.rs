//! Finite-dimensional operators on a Hilbert space and a small expression
//! language for writing them down in configuration files.

mod expr;

pub use expr::{parse_expr, parse_operator_expr, OperatorExpr, SymbolTable};

use std::ops::{Add, Mul, Neg, Sub};

use faer::{c64, Mat, MatRef, Scale};

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// A dense `d × d` complex matrix acting on a Hilbert space of dimension `d`.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    entries: Mat<c64>,
}

impl OperatorMatrix {
    pub fn from_mat(entries: Mat<c64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::dim("operator (square)", entries.nrows(), entries.ncols()));
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidArgument("operator dimension must be positive".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> c64) -> Self {
        assert!(dim > 0, "operator dimension must be positive");
        Self {
            entries: Mat::from_fn(dim, dim, f),
        }
    }

    /// Build from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let d = rows.len();
        for r in rows {
            if r.len() != d {
                return Err(Error::dim("operator row", d, r.len()));
            }
        }
        Self::from_mat(Mat::from_fn(d, d, |i, j| c64::new(rows[i][j], 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| ZERO)
    }

    /// `|i⟩⟨j|` in a `dim`-dimensional space.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        Self::from_fn(dim, |a, b| if a == i && b == j { ONE } else { ZERO })
    }

    /// Projector onto the normalized vector `psi`.
    pub fn projector(psi: &[c64]) -> Self {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        Self::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj() / norm2)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn mat(&self) -> MatRef<'_, c64> {
        self.entries.as_ref()
    }

    pub fn into_mat(self) -> Mat<c64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> c64 {
        self.entries[(i, j)]
    }

    pub fn dagger(&self) -> Self {
        Self {
            entries: self.entries.adjoint().to_owned(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            entries: self.entries.transpose().to_owned(),
        }
    }

    pub fn trace(&self) -> c64 {
        (0..self.dim()).map(|k| self.entries[(k, k)]).sum()
    }

    pub fn scale(&self, s: c64) -> Self {
        Self {
            entries: Scale(s) * &self.entries,
        }
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(c64::new(s, 0.0))
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "operator sum")?;
        Ok(Self {
            entries: &self.entries + &other.entries,
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "operator difference")?;
        Ok(Self {
            entries: &self.entries - &other.entries,
        })
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "operator product")?;
        Ok(Self {
            entries: &self.entries * &other.entries,
        })
    }

    /// `[self, other]`
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "commutator")?;
        Ok(Self {
            entries: linalg::commutator(self.mat(), other.mat()),
        })
    }

    /// `{self, other}`
    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other, "anticommutator")?;
        Ok(Self {
            entries: &self.entries * &other.entries + &other.entries * &self.entries,
        })
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(self.mat())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim(), "max_abs_diff: dimension mismatch");
        linalg::max_abs_diff(self.mat(), other.mat())
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::max_abs_diff(self.mat(), self.entries.adjoint().to_owned().as_ref())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(A + A†)/2`
    pub fn hermitized(&self) -> Self {
        Self {
            entries: linalg::hermitian_part(self.mat()),
        }
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigmin(self.mat())
    }

    /// `Tr(self · other)`
    pub fn trace_product(&self, other: &Self) -> c64 {
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.entries[(i, k)] * other.entries[(k, i)];
            }
        }
        acc
    }

    /// Expectation value `Tr(self · rho)`.
    pub fn expectation(&self, rho: &Self) -> c64 {
        self.trace_product(rho)
    }

    fn check_same_dim(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dim(context, self.dim(), other.dim()));
        }
        Ok(())
    }
}

impl PartialEq for OperatorMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.max_abs_diff(other) == 0.0
    }
}

impl<'a> Add<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        self.try_add(rhs).expect("operator sum: dimension mismatch")
    }
}

impl<'a> Sub<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        self.try_sub(rhs).expect("operator difference: dimension mismatch")
    }
}

impl<'a> Mul<&'a OperatorMatrix> for &'a OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &'a OperatorMatrix) -> OperatorMatrix {
        self.try_mul(rhs).expect("operator product: dimension mismatch")
    }
}

impl Neg for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        self.scale_re(-1.0)
    }
}

/// Spin-`two_j/2` ladder and z operators `(J+, J-, Jz)`.
///
/// The basis is ordered from `m = j` down to `m = -j`, so the fully polarized
/// state is the first basis vector.
pub fn spin_operators(two_j: usize) -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    let dim = two_j + 1;
    let j = two_j as f64 / 2.0;
    let m_of = |k: usize| j - k as f64;
    let jz = OperatorMatrix::from_fn(dim, |a, b| if a == b { c64::new(m_of(a), 0.0) } else { ZERO });
    // J+|m⟩ = sqrt(j(j+1) - m(m+1)) |m+1⟩ and |m+1⟩ sits one index up.
    let jplus = OperatorMatrix::from_fn(dim, |a, b| {
        if a + 1 == b {
            let m = m_of(b);
            c64::new((j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let jminus = jplus.dagger();
    (jplus, jminus, jz)
}

/// Kronecker product with `a`'s index varying slowest.
pub fn tensor(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    let (da, db) = (a.dim(), b.dim());
    OperatorMatrix::from_fn(da * db, |r, c| a.get(r / db, c / db) * b.get(r % db, c % db))
}

/// Pauli-type spin-1/2 operators with eigenvalues ±1/2: `(σ+, σ-, σx, σy, σz)`.
pub fn spin_half() -> [OperatorMatrix; 5] {
    let (sp, sm, sz) = spin_operators(1);
    let sx = (&sp + &sm).scale_re(0.5);
    let sy = (&sp - &sm).scale(c64::new(0.0, -0.5));
    [sp, sm, sx, sy, sz]
}

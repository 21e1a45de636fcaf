//! Dense kernels shared by the rest of the crate: matrix exponentials,
//! norms and a few conveniences on top of `faer`.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, MatRef, Scale};

pub(crate) const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub(crate) const I: c64 = c64 { re: 0.0, im: 1.0 };

#[inline]
pub(crate) fn re(x: f64) -> c64 {
    c64::new(x, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: MatRef<'_, c64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!(a.nrows(), b.nrows());
    assert_eq!(a.ncols(), b.ncols());
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            best = best.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    best
}

/// Largest singular value. Zero for empty matrices.
pub fn spectral_norm(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if max_abs(m) == 0.0 {
        return 0.0;
    }
    match m.singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        // SVD failures are essentially impossible for finite input; fall back
        // to the Frobenius bound rather than abort a diagnostic.
        Err(_) => m.norm_l2(),
    }
}

/// Maximum absolute column sum.
pub fn norm_one(m: MatRef<'_, c64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::identity(n, n)
}

pub fn inverse(m: MatRef<'_, c64>) -> Mat<c64> {
    m.partial_piv_lu().inverse()
}

/// Solve `a x = b`.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a.partial_piv_lu().solve(b)
}

pub fn commutator(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    a * b - b * a
}

pub(crate) fn scaled(m: MatRef<'_, c64>, s: c64) -> Mat<c64> {
    Scale(s) * m
}

/// Hermitian part `(m + m†)/2`.
pub fn hermitian_part(m: MatRef<'_, c64>) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5)
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn hermitian_eigmin(m: MatRef<'_, c64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let h = hermitian_part(m);
    h.self_adjoint_eigenvalues(faer::Side::Lower)
        .map(|v| v.into_iter().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NAN)
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: MatRef<'_, c64>) -> crate::Result<Vec<c64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.eigenvalues().map_err(|_| crate::Error::NoConvergence)
}

// Padé(13) coefficients for exp, Higham (2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Odd and even parts of the degree-13 Padé numerator at `a`.
fn pade13_parts(a: MatRef<'_, c64>) -> (Mat<c64>, Mat<c64>) {
    let n = a.nrows();
    let b = PADE13;
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (Scale(re(b[13])) * &a6 + Scale(re(b[11])) * &a4 + Scale(re(b[9])) * &a2)
        + Scale(re(b[7])) * &a6
        + Scale(re(b[5])) * &a4
        + Scale(re(b[3])) * &a2
        + Scale(re(b[1])) * &id;
    let u = a * inner_u;
    let v = &a6 * (Scale(re(b[12])) * &a6 + Scale(re(b[10])) * &a4 + Scale(re(b[8])) * &a2)
        + Scale(re(b[6])) * &a6
        + Scale(re(b[4])) * &a4
        + Scale(re(b[2])) * &a2
        + Scale(re(b[0])) * &id;
    (u, v)
}

fn scaling_exponent(a: MatRef<'_, c64>) -> i32 {
    let norm = norm_one(a);
    if norm <= THETA13 || norm == 0.0 {
        0
    } else {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    }
}

/// Matrix exponential by scaling and squaring with a Padé(13) kernel.
pub fn expm(a: MatRef<'_, c64>) -> Mat<c64> {
    let n = a.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    if max_abs(a) == 0.0 {
        return identity(n);
    }
    let s = scaling_exponent(a);
    let scaled_a = Scale(re(0.5f64.powi(s))) * a;
    let (u, v) = pade13_parts(scaled_a.as_ref());
    let p = &v + &u;
    let q = &v - &u;
    let mut r = solve(q.as_ref(), p.as_ref());
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `exp(a) - 1` without the cancellation of forming `exp(a)` first.
///
/// Uses `r13 - 1 = q⁻¹ (2u)` for the Padé kernel and
/// `e^{2x} - 1 = (e^x - 1)(2 + (e^x - 1))` while squaring.
pub fn expm1(a: MatRef<'_, c64>) -> Mat<c64> {
    let n = a.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let s = scaling_exponent(a);
    let scaled_a = Scale(re(0.5f64.powi(s))) * a;
    let (u, v) = pade13_parts(scaled_a.as_ref());
    let q = &v - &u;
    let two_u = Scale(re(2.0)) * &u;
    let mut d = solve(q.as_ref(), two_u.as_ref());
    let two = Scale(re(2.0)) * identity(n);
    for _ in 0..s {
        d = &d * (&two + &d);
    }
    d
}

/// Least-squares fit of `log y = slope * log x + c`; returns the slope.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

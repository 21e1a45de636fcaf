//! Schrieffer–Wolff series for `ℒ = ℒ₀ + ε𝒱` with the canonical gauge
//! `S^D = 0`.
//!
//! Writing `T_{p,k}` for the εᵏ coefficient of `Ŝᵖ 𝒱^O`, the generator
//! equation gives
//!
//! ```text
//! S_1 = −ℛ₀ 𝒱^O
//! S_n = −ℛ₀ Ŝ_{n−1} 𝒱^D − ℛ₀ Σ_{m≥1} c_{2m} T_{2m,n−1}      (n ≥ 2)
//! 𝒲_1 = 𝒱^D,   𝒲_n = Σ_{p odd} t_p T_{p,n−1}                  (n ≥ 2)
//! ```
//!
//! with `x coth x = Σ c_{2m} x^{2m}` and `tanh(x/2) = Σ t_p x^p`.

use faer::{c64, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{self, re, ZERO};
use crate::operator::OperatorMatrix;
use crate::spectral::SpectralData;
use crate::superop::{hat_dense, SuperOp};

pub const MAX_ORDER: usize = 8;

// x coth x: c0, c2, c4, c6, c8
const XCOTH: [(f64, f64); 5] = [(1.0, 1.0), (1.0, 3.0), (-1.0, 45.0), (2.0, 945.0), (-1.0, 4725.0)];
// tanh(x/2): t1, t3, t5, t7, t9
const TANH_HALF: [(f64, f64); 5] = [
    (1.0, 2.0),
    (-1.0, 24.0),
    (1.0, 240.0),
    (-17.0, 40320.0),
    (31.0, 725760.0),
];

fn xcoth(two_m: usize) -> f64 {
    let (a, b) = XCOTH[two_m / 2];
    a / b
}

fn tanh_half(p: usize) -> f64 {
    let (a, b) = TANH_HALF[(p - 1) / 2];
    a / b
}

/// Generator terms `S_1 … S_nmax`.
#[derive(Clone, Debug)]
pub struct SwGenerator {
    hdim: usize,
    terms: Vec<Mat<c64>>,
    // chains[p][k] = T_{p,k}; None where identically zero
    chains: Vec<Vec<Option<Mat<c64>>>>,
    v_diag: Mat<c64>,
}

impl SwGenerator {
    pub fn nmax(&self) -> usize {
        self.terms.len()
    }

    /// `S_n` for `1 ≤ n ≤ nmax`.
    pub fn term(&self, n: usize) -> Result<SuperOp> {
        Ok(SuperOp::from_dense(self.hdim, self.term_dense(n)?.to_owned()).expect("square"))
    }

    pub fn term_dense(&self, n: usize) -> Result<MatRef<'_, c64>> {
        if n == 0 || n > self.terms.len() {
            return Err(Error::OrderUnavailable {
                requested: n,
                available: self.terms.len(),
            });
        }
        Ok(self.terms[n - 1].as_ref())
    }

    /// `Σ_{n ≤ order} εⁿ S_n`.
    pub fn sum(&self, epsilon: f64, order: usize) -> Result<Mat<c64>> {
        let n = self.hdim * self.hdim;
        let mut s = Mat::zeros(n, n);
        for k in 1..=order {
            s += faer::Scale(re(epsilon.powi(k as i32))) * self.term_dense(k)?;
        }
        Ok(s)
    }
}

fn chain(chains: &[Vec<Option<Mat<c64>>>], p: usize, k: usize) -> Option<&Mat<c64>> {
    chains.get(p).and_then(|row| row.get(k)).and_then(|m| m.as_ref())
}

/// Solve the generator equation order by order up to `nmax`.
pub fn generator_terms(sd: &SpectralData, v: &SuperOp, nmax: usize) -> Result<SwGenerator> {
    if nmax == 0 || nmax > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("order must lie in 1..={MAX_ORDER}, got {nmax}")));
    }
    if v.hdim() != sd.hdim() {
        return Err(Error::dim("perturbation", sd.hdim(), v.hdim()));
    }
    let vd = v.dense();
    let vd = vd.as_ref().as_ref();
    let v_diag = sd.diagonal_part(vd);
    let v_off = sd.off_diagonal_part(vd);

    let mut chains: Vec<Vec<Option<Mat<c64>>>> = vec![vec![None; nmax]; nmax];
    chains[0][0] = Some(v_off);
    let mut terms: Vec<Mat<c64>> = Vec::with_capacity(nmax);
    for n in 1..=nmax {
        let s_n = if n == 1 {
            -sd.resolvent_dense(chain(&chains, 0, 0).unwrap().as_ref())?
        } else {
            let mut rhs = hat_dense(terms[n - 2].as_ref(), v_diag.as_ref());
            let mut two_m = 2;
            while two_m < n {
                if let Some(t) = chain(&chains, two_m, n - 1) {
                    rhs += faer::Scale(re(xcoth(two_m))) * t;
                }
                two_m += 2;
            }
            -sd.resolvent_dense(rhs.as_ref())?
        };
        terms.push(s_n);
        // T_{p,n} = Σ_{j=1}^{n} Ŝ_j T_{p−1,n−j}, needed for k = n < nmax
        if n < nmax {
            for p in 1..=n {
                let mut acc: Option<Mat<c64>> = None;
                for j in 1..=n {
                    if let Some(prev) = chain(&chains, p - 1, n - j) {
                        let h = hat_dense(terms[j - 1].as_ref(), prev.as_ref());
                        acc = Some(match acc {
                            Some(a) => a + h,
                            None => h,
                        });
                    }
                }
                chains[p][n] = acc;
            }
        }
    }
    Ok(SwGenerator {
        hdim: sd.hdim(),
        terms,
        chains,
        v_diag,
    })
}

/// Correction terms `𝒲_n` and their slow-space projections.
#[derive(Clone, Debug)]
pub struct EffectiveSeries {
    hdim: usize,
    epsilon: f64,
    w_terms: Vec<Mat<c64>>,
    leff_terms: Vec<Mat<c64>>,
}

impl EffectiveSeries {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn nmax(&self) -> usize {
        self.w_terms.len()
    }

    pub fn hdim(&self) -> usize {
        self.hdim
    }

    fn check_order(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.w_terms.len() {
            return Err(Error::OrderUnavailable {
                requested: n,
                available: self.w_terms.len(),
            });
        }
        Ok(())
    }

    /// Full-space `𝒲_n`.
    pub fn w_term(&self, n: usize) -> Result<MatRef<'_, c64>> {
        self.check_order(n)?;
        Ok(self.w_terms[n - 1].as_ref())
    }

    /// `L_eff^(n) = ⟨l_α|𝒲_n|r_β⟩` over slow indices.
    pub fn leff_term(&self, n: usize) -> Result<MatRef<'_, c64>> {
        self.check_order(n)?;
        Ok(self.leff_terms[n - 1].as_ref())
    }
}

pub fn correction_terms(gen: &SwGenerator, sd: &SpectralData, epsilon: f64) -> Result<EffectiveSeries> {
    if gen.hdim != sd.hdim() {
        return Err(Error::dim("generator", sd.hdim(), gen.hdim));
    }
    let nmax = gen.nmax();
    let mut w_terms = Vec::with_capacity(nmax);
    w_terms.push(gen.v_diag.clone());
    for n in 2..=nmax {
        let dim = gen.v_diag.nrows();
        let mut w = Mat::<c64>::zeros(dim, dim);
        let mut p = 1;
        while p < n {
            if let Some(t) = chain(&gen.chains, p, n - 1) {
                w += faer::Scale(re(tanh_half(p))) * t;
            }
            p += 2;
        }
        w_terms.push(w);
    }
    let leff_terms = w_terms.iter().map(|w| sd.slow_block(w.as_ref())).collect();
    Ok(EffectiveSeries {
        hdim: sd.hdim(),
        epsilon,
        w_terms,
        leff_terms,
    })
}

/// `Σ_{n ≤ order} εⁿ L_eff^(n)` in slow-space coordinates.
pub fn effective_liouvillian(series: &EffectiveSeries, order: usize) -> Result<Mat<c64>> {
    series.check_order(order)?;
    let s = series.leff_terms[0].nrows();
    let mut acc = Mat::zeros(s, s);
    for n in 1..=order {
        acc += faer::Scale(re(series.epsilon.powi(n as i32))) * &series.leff_terms[n - 1];
    }
    Ok(acc)
}

/// Orders one to three of `L_eff` from their explicit block formulas,
/// independent of the recursion:
///
/// ```text
/// L₁ = 𝒱^P
/// L₂ = −𝒱⁻ ℒ₀⁻¹ 𝒱⁺
/// L₃ = 𝒱⁻ ℒ₀⁻¹ 𝒱^Q ℒ₀⁻¹ 𝒱⁺ − ½ {𝒱^P, 𝒱⁻ ℒ₀⁻² 𝒱⁺}
/// ```
pub fn closed_form_leff(sd: &SpectralData, v: &SuperOp, order: usize) -> Result<Mat<c64>> {
    let vd = v.dense();
    let v = vd.as_ref().as_ref();
    let linv = sd.fast_inverse_dense()?;
    let (l, r) = (sd.slow_left(), sd.slow_right());
    let vp = &l * (v * &r);
    match order {
        1 => Ok(vp),
        2 => Ok(-(&l * (v * (linv * (v * &r))))),
        3 => {
            let q = sd.q_dense();
            let left = &l * v * linv;
            let right = linv * (v * &r);
            let middle = &left * (&q * v * &q) * &right;
            let sq = &left * &right;
            Ok(middle - faer::Scale(re(0.5)) * (&vp * &sq + &sq * &vp))
        }
        _ => Err(Error::OrderUnavailable {
            requested: order,
            available: 3,
        }),
    }
}

/// Off-diagonal size `‖P L′ Q‖ + ‖Q L′ P‖` of `L′ = e^{−S}(ℒ₀ + ε𝒱)e^{S}`
/// with `S` truncated at `order`.
///
/// `L′ − ℒ₀` is assembled from `e^{±S} − 1` so that the O(1) diagonal
/// blocks of ℒ₀ never enter the subtraction.
pub fn decoupling_residual(
    sd: &SpectralData,
    v: &SuperOp,
    gen: &SwGenerator,
    epsilon: f64,
    order: usize,
) -> Result<f64> {
    if order == 0 || order > gen.nmax() {
        return Err(Error::OrderUnavailable {
            requested: order,
            available: gen.nmax(),
        });
    }
    let s = gen.sum(epsilon, order)?;
    let d = linalg::expm1(s.as_ref());
    let dm = linalg::expm1((-&s).as_ref());
    let ev = faer::Scale(re(epsilon)) * v.dense().as_ref();
    let l = sd.generator() + &ev;
    let ld = &l * &d;
    let x = ev + &dm * &l + &ld + &dm * &ld;
    let p = sd.p_dense();
    let px = p * &x;
    let xp = &x * p;
    let pxp = &px * p;
    let pxq = &px - &pxp;
    let qxp = &xp - &pxp;
    Ok(linalg::spectral_norm(pxq.as_ref()) + linalg::spectral_norm(qxp.as_ref()))
}

/// Effective generator on the system factor when the slow space is
/// `{σ ⊗ μ}` for a fixed ancilla state σ (ancilla factor on the left).
#[derive(Clone, Debug)]
pub struct ReducedGenerator {
    pub generator: SuperOp,
    pub ancilla_state: OperatorMatrix,
    pub ancilla_dim: usize,
    pub system_dim: usize,
}

struct Factorization {
    sigma: Mat<c64>,
    da: usize,
    ds: usize,
}

fn factorize(sd: &SpectralData) -> Result<Factorization> {
    let slow = sd.slow_dim();
    let ds = (slow as f64).sqrt().round() as usize;
    let d = sd.hdim();
    if ds * ds != slow || ds == 0 || !d.is_multiple_of(ds) {
        return Err(Error::NonProductSlowSpace);
    }
    let da = d / ds;
    let n = d * d;
    let idx = |a: usize, s: usize, a2: usize, s2: usize| (a * ds + s) * d + (a2 * ds + s2);
    // P (1/d_A ⊗ |0⟩⟨0|) = σ ⊗ |0⟩⟨0|
    let p = sd.p_dense();
    let mut probe = vec![ZERO; n];
    for a in 0..da {
        probe[idx(a, 0, a, 0)] = re(1.0 / da as f64);
    }
    let image: Vec<c64> = (0..n).map(|i| (0..n).map(|j| p[(i, j)] * probe[j]).sum()).collect();
    let sigma = Mat::from_fn(da, da, |a, b| image[idx(a, 0, b, 0)]);
    // P must equal E∘Tr_A with E(μ) = σ ⊗ μ
    let scale = linalg::max_abs(p.as_ref()).max(1.0);
    for a in 0..da {
        for s in 0..ds {
            for a2 in 0..da {
                for s2 in 0..ds {
                    let row = idx(a, s, a2, s2);
                    for b in 0..da {
                        for t in 0..ds {
                            for b2 in 0..da {
                                for t2 in 0..ds {
                                    let col = idx(b, t, b2, t2);
                                    let expect = if s == t && s2 == t2 && b == b2 {
                                        sigma[(a, a2)]
                                    } else {
                                        ZERO
                                    };
                                    if (p[(row, col)] - expect).norm() > 1e-8 * scale {
                                        return Err(Error::NonProductSlowSpace);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Factorization { sigma, da, ds })
}

/// `Tr_A ∘ W ∘ (σ ⊗ ·)` on the system's vectorized space.
fn reduce(f: &Factorization, w: MatRef<'_, c64>, d: usize) -> Mat<c64> {
    let (da, ds) = (f.da, f.ds);
    let idx = |a: usize, s: usize, a2: usize, s2: usize| (a * ds + s) * d + (a2 * ds + s2);
    Mat::from_fn(ds * ds, ds * ds, |row, col| {
        let (s1, s2) = (row / ds, row % ds);
        let (s3, s4) = (col / ds, col % ds);
        let mut acc = ZERO;
        for a in 0..da {
            for b in 0..da {
                for b2 in 0..da {
                    let sig = f.sigma[(b, b2)];
                    if sig != ZERO {
                        acc += w[(idx(a, s1, a, s2), idx(b, s3, b2, s4))] * sig;
                    }
                }
            }
        }
        acc
    })
}

fn reduced_from(sd: &SpectralData, w: MatRef<'_, c64>) -> Result<ReducedGenerator> {
    let f = factorize(sd)?;
    let m = reduce(&f, w, sd.hdim());
    Ok(ReducedGenerator {
        generator: SuperOp::from_dense(f.ds, m).expect("square"),
        ancilla_state: OperatorMatrix::from_mat(f.sigma.clone())?,
        ancilla_dim: f.da,
        system_dim: f.ds,
    })
}

/// The single order-`n` term `L_eff^(n)` on the system space (ε not applied).
pub fn reduced_term(series: &EffectiveSeries, sd: &SpectralData, n: usize) -> Result<ReducedGenerator> {
    reduced_from(sd, series.w_term(n)?)
}

/// `Σ_{n ≤ order} εⁿ L_eff^(n)` on the system space.
pub fn reduced_effective(series: &EffectiveSeries, sd: &SpectralData, order: usize) -> Result<ReducedGenerator> {
    series.check_order(order)?;
    let dim = series.w_terms[0].nrows();
    let mut w = Mat::<c64>::zeros(dim, dim);
    for n in 1..=order {
        w += faer::Scale(re(series.epsilon.powi(n as i32))) * &series.w_terms[n - 1];
    }
    reduced_from(sd, w.as_ref())
}

/// Pair each `reference` value with a distinct `candidate`, smallest
/// distances first. Returns the candidate index for each reference.
pub fn match_eigenvalues(reference: &[c64], candidates: &[c64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(reference.len() * candidates.len());
    for (i, r) in reference.iter().enumerate() {
        for (j, c) in candidates.iter().enumerate() {
            pairs.push(((r - c).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![usize::MAX; reference.len()];
    let mut used = vec![false; candidates.len()];
    for (_, i, j) in pairs {
        if out[i] == usize::MAX && !used[j] {
            out[i] = j;
            used[j] = true;
        }
    }
    out
}

/// Largest distance between the eigenvalues of the order-`order` effective
/// Liouvillian and the matching exact eigenvalues of `ℒ₀ + ε𝒱`.
pub fn slow_spectrum_error(sd: &SpectralData, v: &SuperOp, series: &EffectiveSeries, order: usize) -> Result<f64> {
    let leff = effective_liouvillian(series, order)?;
    let effective = linalg::eigenvalues(leff.as_ref())?;
    let full = sd.generator() + faer::Scale(re(series.epsilon)) * v.dense().as_ref();
    let exact = linalg::eigenvalues(full.as_ref())?;
    let pairing = match_eigenvalues(&effective, &exact);
    Ok(effective
        .iter()
        .zip(&pairing)
        .map(|(e, &j)| (e - exact[j]).norm())
        .fold(0.0, f64::max))
}

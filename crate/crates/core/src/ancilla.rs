//! Second-order elimination of an ancilla with a unique steady state, via
//! integrated correlation functions and the quantum regression theorem.

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg::{self, re, ZERO};
use crate::operator::{tensor, OperatorMatrix};
use crate::spectral::{decompose, SpectralData, DEFAULT_ZERO_TOL};
use crate::superop::{devectorize, sandwich_superop, vectorize, SuperOp};

const HERMITIAN_TOL: f64 = 1e-12;
const CLOSURE_TOL: f64 = 1e-10;
const RATE_CLAMP: f64 = 1e-9;

/// Ancilla generator plus Hamiltonian couplings `𝒱χ = −iε[Σ A_α ⊗ S_α, χ]`,
/// ancilla on the left tensor factor.
#[derive(Clone, Debug)]
pub struct AncillaModel {
    pub ancilla_l0: SuperOp,
    pub couplings: Vec<(OperatorMatrix, OperatorMatrix)>,
    pub epsilon: f64,
}

impl AncillaModel {
    pub fn new(ancilla_l0: SuperOp, couplings: Vec<(OperatorMatrix, OperatorMatrix)>, epsilon: f64) -> Result<Self> {
        if couplings.is_empty() {
            return Err(Error::InvalidArgument("at least one coupling is required".into()));
        }
        let da = ancilla_l0.hdim();
        let ds = couplings[0].1.dim();
        for (a, s) in &couplings {
            if a.dim() != da {
                return Err(Error::dim("ancilla coupling operator", da, a.dim()));
            }
            if s.dim() != ds {
                return Err(Error::dim("system coupling operator", ds, s.dim()));
            }
            if !a.is_hermitian(HERMITIAN_TOL) || !s.is_hermitian(HERMITIAN_TOL) {
                return Err(Error::InvalidArgument("coupling operators must be Hermitian".into()));
            }
        }
        if !epsilon.is_finite() {
            return Err(Error::InvalidArgument("epsilon must be finite".into()));
        }
        steady_state(&ancilla_l0)?;
        Ok(Self {
            ancilla_l0,
            couplings,
            epsilon,
        })
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_l0.hdim()
    }

    pub fn system_dim(&self) -> usize {
        self.couplings[0].1.dim()
    }

    pub fn ancilla_ops(&self) -> Vec<OperatorMatrix> {
        self.couplings.iter().map(|(a, _)| a.clone()).collect()
    }

    pub fn system_ops(&self) -> Vec<OperatorMatrix> {
        self.couplings.iter().map(|(_, s)| s.clone()).collect()
    }

    /// `ℒ₀ ⊗ id` and `𝒱` (without ε) on the joint space.
    pub fn joint_generators(&self) -> Result<(SuperOp, SuperOp)> {
        let (da, ds) = (self.ancilla_dim(), self.system_dim());
        let d = da * ds;
        let mut trip = Vec::new();
        for (r, c, v) in self.ancilla_l0.triplets() {
            let (a, a2) = (r / da, r % da);
            let (b, b2) = (c / da, c % da);
            for s in 0..ds {
                for s2 in 0..ds {
                    trip.push(((a * ds + s) * d + a2 * ds + s2, (b * ds + s) * d + b2 * ds + s2, v));
                }
            }
        }
        let l0 = SuperOp::from_triplets(d, trip);
        let mut h = OperatorMatrix::zeros(d);
        for (a, s) in &self.couplings {
            h = &h + &tensor(a, s);
        }
        let id = OperatorMatrix::identity(d);
        let v = sandwich_superop(&h, &id)?
            .scale(c64::new(0.0, -1.0))
            .try_add(&sandwich_superop(&id, &h)?.scale(c64::new(0.0, 1.0)))?;
        Ok((l0, v))
    }
}

fn ancilla_spectrum(l0: &SuperOp) -> Result<SpectralData> {
    let sd = decompose(l0, DEFAULT_ZERO_TOL)?;
    if sd.slow_dim() != 1 {
        return Err(Error::DegenerateSteadyState {
            multiplicity: sd.slow_dim(),
        });
    }
    Ok(sd)
}

fn state_from(sd: &SpectralData) -> Result<OperatorMatrix> {
    let col: Vec<c64> = sd.slow_right().col(0).iter().copied().collect();
    let rho = devectorize(&col);
    let tr = rho.trace();
    let sigma = rho.scale(tr.inv()).hermitized();
    let eigmin = sigma.min_eigenvalue();
    if eigmin < -1e-10 {
        return Err(Error::NotPositive { eigmin });
    }
    Ok(sigma)
}

/// Unique steady state of `ℒ₀`, unit trace and Hermitian.
pub fn steady_state(ancilla_l0: &SuperOp) -> Result<OperatorMatrix> {
    state_from(&ancilla_spectrum(ancilla_l0)?)
}

/// Heisenberg image `ℒ₀†(X)`, defined by `Tr(ℒ₀†(X) ρ) = Tr(X ℒ₀ρ)`.
pub fn adjoint_apply(l0: &SuperOp, x: &OperatorMatrix) -> OperatorMatrix {
    let d2 = l0.dim();
    let l = l0.dense();
    let v = vectorize(&x.transpose());
    let out: Vec<c64> = (0..d2).map(|j| (0..d2).map(|i| v[i] * l[(i, j)]).sum()).collect();
    devectorize(&out).transpose()
}

/// Closed set of traceless, Hilbert–Schmidt orthonormal ancilla operators
/// with its Bloch matrix:
/// `Heis(A_k) = Σ_l M_kl A_l + c_k·I`, hence `d⟨ΔA⟩/dt = M⟨ΔA⟩`.
#[derive(Clone, Debug)]
pub struct BlochSystem {
    pub basis_ops: Vec<OperatorMatrix>,
    pub m: Mat<c64>,
    pub steady_means: Vec<c64>,
    pub covariance: Mat<c64>,
    /// Seed operator `α` deviates as `ΔA_α = Σ_k seed_map[(α, k)] ΔB_k`.
    pub seed_map: Mat<c64>,
    pub steady_state: OperatorMatrix,
}

impl BlochSystem {
    pub fn dim(&self) -> usize {
        self.basis_ops.len()
    }
}

fn traceless(x: &OperatorMatrix) -> Vec<c64> {
    let d = x.dim();
    let t = x.trace() / d as f64;
    let mut v = vectorize(x);
    for i in 0..d {
        v[i * d + i] -= t;
    }
    v
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthonormal frame for the traceless parts of an operator list.
struct Frame {
    q: Vec<Vec<c64>>,
}

impl Frame {
    /// Residual of `v` after projecting out the frame, with coefficients.
    fn reduce(&self, v: &[c64]) -> (Vec<c64>, Vec<c64>) {
        let mut r = v.to_vec();
        let mut coef = Vec::with_capacity(self.q.len());
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for (k, q) in self.q.iter().enumerate() {
                let c = dot(q, &r);
                for (x, y) in r.iter_mut().zip(q) {
                    *x -= c * y;
                }
                if coef.len() <= k {
                    coef.push(c);
                } else {
                    coef[k] += c;
                }
            }
        }
        (r, coef)
    }

    fn try_push(&mut self, v: &[c64]) -> bool {
        let (r, _) = self.reduce(v);
        let n = norm(&r);
        if n <= CLOSURE_TOL * norm(v) || n == 0.0 {
            return false;
        }
        self.q.push(r.into_iter().map(|x| x / n).collect());
        true
    }
}

fn traceless_basis(d: usize) -> Vec<OperatorMatrix> {
    let mut out = Vec::with_capacity(d * d - 1);
    for i in 0..d {
        for j in (i + 1)..d {
            let e = &OperatorMatrix::unit(d, i, j) + &OperatorMatrix::unit(d, j, i);
            out.push(e);
            let f = OperatorMatrix::unit(d, i, j).scale(c64::new(0.0, -1.0));
            out.push(&f + &OperatorMatrix::unit(d, j, i).scale(c64::new(0.0, 1.0)));
        }
    }
    for k in 1..d {
        out.push(&OperatorMatrix::unit(d, k - 1, k - 1) - &OperatorMatrix::unit(d, k, k));
    }
    out
}

/// Extends the seed operators by repeated Heisenberg images until the span
/// (modulo the identity) is invariant, falling back to the full traceless
/// basis when the iteration stalls.
pub fn close_operator_set(ancilla_l0: &SuperOp, seed_ops: &[OperatorMatrix]) -> Result<BlochSystem> {
    let sd = ancilla_spectrum(ancilla_l0)?;
    let sigma = state_from(&sd)?;
    let d = ancilla_l0.hdim();
    for a in seed_ops {
        if a.dim() != d {
            return Err(Error::dim("seed operator", d, a.dim()));
        }
        if !a.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::InvalidArgument("seed operators must be Hermitian".into()));
        }
    }
    let mut frame = Frame { q: Vec::new() };
    for a in seed_ops {
        frame.try_push(&traceless(a));
    }
    let limit = d * d - 1;
    let mut k = 0;
    while k < frame.q.len() && frame.q.len() <= limit {
        let image = adjoint_apply(ancilla_l0, &devectorize(&frame.q[k]).hermitized());
        frame.try_push(&traceless(&image));
        k += 1;
    }
    if frame.q.len() > limit {
        frame = Frame { q: Vec::new() };
        for b in traceless_basis(d) {
            frame.try_push(&traceless(&b));
        }
    }

    let ops: Vec<OperatorMatrix> = frame.q.iter().map(|q| devectorize(q).hermitized()).collect();
    let n = ops.len();
    let mut m = Mat::<c64>::zeros(n, n);
    for (kk, op) in ops.iter().enumerate() {
        let image = adjoint_apply(ancilla_l0, op);
        let (resid, c) = frame.reduce(&traceless(&image));
        if norm(&resid) > 1e-8 * image.max_abs().max(1.0) {
            return Err(Error::NoConvergence);
        }
        for l in 0..n {
            m[(kk, l)] = c[l];
        }
    }
    let mut seed_map = Mat::<c64>::zeros(seed_ops.len(), n);
    for (alpha, a) in seed_ops.iter().enumerate() {
        let (_, c) = frame.reduce(&traceless(a));
        for l in 0..n {
            seed_map[(alpha, l)] = c[l];
        }
    }
    let means: Vec<c64> = ops.iter().map(|a| a.expectation(&sigma)).collect();
    let covariance = Mat::from_fn(n, n, |i, j| (&ops[i] * &ops[j]).expectation(&sigma) - means[i] * means[j]);
    if n > 0 {
        let eig = linalg::eigenvalues(m.as_ref())?;
        let max_real = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if max_real >= 0.0 {
            return Err(Error::UnstableBlochMatrix { max_real });
        }
    }
    Ok(BlochSystem {
        basis_ops: ops,
        m,
        steady_means: means,
        covariance,
        seed_map,
        steady_state: sigma,
    })
}

/// `𝒜_ij = ∫₀^∞ dτ ⟨ΔA_i(τ) ΔA_j⟩_ss` over the seed operators, with its
/// dissipative part `𝒜 + 𝒜†` and Hamiltonian part `(𝒜 − 𝒜†)/2i`.
#[derive(Clone, Debug)]
pub struct CoefficientMatrix {
    pub a: Mat<c64>,
    pub dissipation: Mat<c64>,
    pub hamiltonian_part: Mat<c64>,
}

impl CoefficientMatrix {
    fn from_a(a: Mat<c64>) -> Self {
        let ad = a.adjoint().to_owned();
        let dissipation = linalg::hermitian_part(linalg::scaled((&a + &ad).as_ref(), re(0.5)).as_ref());
        let dissipation = linalg::scaled(dissipation.as_ref(), re(2.0));
        let hamiltonian_part = linalg::scaled((&a - &ad).as_ref(), c64::new(0.0, -0.5));
        Self {
            a,
            dissipation,
            hamiltonian_part,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Smallest eigenvalue of `𝒜 + 𝒜†`.
    pub fn dissipation_eigmin(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        linalg::hermitian_eigmin(self.dissipation.as_ref())
    }
}

/// Quantum-regression route: `𝒜 = −ℳ⁻¹C` on the closed set, pulled back
/// to the seed operators.
pub fn coefficient_matrix(bs: &BlochSystem) -> Result<CoefficientMatrix> {
    let n = bs.dim();
    let k = bs.seed_map.nrows();
    if n == 0 {
        return Ok(CoefficientMatrix::from_a(Mat::zeros(k, k)));
    }
    let x = linalg::solve(bs.m.as_ref(), bs.covariance.as_ref());
    let resid = linalg::max_abs(((&bs.m * &x) - &bs.covariance).as_ref());
    if !x.as_ref().is_all_finite() || resid > 1e-8 * linalg::max_abs(bs.covariance.as_ref()).max(1e-300) * 1e4 {
        return Err(Error::SingularBlochMatrix);
    }
    let a_basis = linalg::scaled(x.as_ref(), re(-1.0));
    let a = &bs.seed_map * &a_basis * bs.seed_map.transpose();
    Ok(CoefficientMatrix::from_a(a))
}

/// Resolvent route: `𝒜_ij = −Tr(ΔA_i · (Qℒ₀Q)⁻¹(ΔA_j σ))`.
pub fn coefficient_matrix_resolvent_oracle(
    ancilla_l0: &SuperOp,
    sigma: &OperatorMatrix,
    ops: &[OperatorMatrix],
) -> Result<Mat<c64>> {
    let sd = ancilla_spectrum(ancilla_l0)?;
    let linv = sd.fast_inverse_dense()?;
    let d = sigma.dim();
    let id = OperatorMatrix::identity(d);
    let deltas: Vec<OperatorMatrix> = ops
        .iter()
        .map(|a| &(a.clone()) - &id.scale(a.expectation(sigma)))
        .collect();
    let k = ops.len();
    let mut out = Mat::<c64>::zeros(k, k);
    for j in 0..k {
        let v = vectorize(&(&deltas[j] * sigma));
        let mut w = vec![ZERO; v.len()];
        for (r, wr) in w.iter_mut().enumerate() {
            *wr = (0..v.len()).map(|c| linv[(r, c)] * v[c]).sum();
        }
        let x = devectorize(&w);
        for i in 0..k {
            out[(i, j)] = -deltas[i].trace_product(&x);
        }
    }
    Ok(out)
}

fn superop_sum(d: usize, terms: &[(c64, &OperatorMatrix, &OperatorMatrix)]) -> Result<SuperOp> {
    let mut acc = SuperOp::zeros(d);
    for (c, a, b) in terms {
        if *c == ZERO {
            continue;
        }
        acc = acc.try_add(&sandwich_superop(a, b)?.scale(*c))?;
    }
    Ok(acc)
}

/// First and second order of the effective system generator; the full
/// generator is `ε·first + ε²·second`.
#[derive(Clone, Debug)]
pub struct EffectiveSecondOrder {
    pub first: SuperOp,
    pub second: SuperOp,
    pub epsilon: f64,
    pub coefficients: CoefficientMatrix,
    pub means: Vec<c64>,
}

impl EffectiveSecondOrder {
    pub fn generator(&self, order: usize) -> Result<SuperOp> {
        match order {
            1 => Ok(self.first.scale(re(self.epsilon))),
            2 => self
                .first
                .scale(re(self.epsilon))
                .try_add(&self.second.scale(re(self.epsilon * self.epsilon))),
            _ => Err(Error::OrderUnavailable {
                requested: order,
                available: 2,
            }),
        }
    }
}

/// `L₁μ = −iΣ⟨A_α⟩[S_α, μ]` and
/// `L₂μ = Σ (𝒜+𝒜†)_ij (S_j μ S_i − ½{S_iS_j, μ}) − i[H, μ]` with
/// `H = Σ ((𝒜−𝒜†)/2i)_ij S_iS_j`.
pub fn effective_master_equation_2(am: &AncillaModel) -> Result<EffectiveSecondOrder> {
    let seeds = am.ancilla_ops();
    let bs = close_operator_set(&am.ancilla_l0, &seeds)?;
    let cm = coefficient_matrix(&bs)?;
    let sigma = &bs.steady_state;
    let means: Vec<c64> = seeds.iter().map(|a| a.expectation(sigma)).collect();
    let ds = am.system_dim();
    let id = OperatorMatrix::identity(ds);
    let s = am.system_ops();

    let mut first = Vec::new();
    for (alpha, sa) in s.iter().enumerate() {
        let c = c64::new(0.0, -1.0) * means[alpha];
        first.push((c, sa, &id));
        first.push((-c, &id, sa));
    }
    let first = superop_sum(ds, &first)?;

    let h = system_hamiltonian(&cm, &s);
    let mut second = SuperOp::zeros(ds);
    let k = s.len();
    for i in 0..k {
        for j in 0..k {
            let dij = cm.dissipation[(i, j)];
            if dij == ZERO {
                continue;
            }
            let sij = &s[i] * &s[j];
            second = second.try_add(&superop_sum(
                ds,
                &[(dij, &s[j], &s[i]), (dij * -0.5, &sij, &id), (dij * -0.5, &id, &sij)],
            )?)?;
        }
    }
    second = second.try_add(&superop_sum(
        ds,
        &[(c64::new(0.0, -1.0), &h, &id), (c64::new(0.0, 1.0), &id, &h)],
    )?)?;
    Ok(EffectiveSecondOrder {
        first,
        second,
        epsilon: am.epsilon,
        coefficients: cm,
        means,
    })
}

fn system_hamiltonian(cm: &CoefficientMatrix, s: &[OperatorMatrix]) -> OperatorMatrix {
    let ds = s[0].dim();
    let mut h = OperatorMatrix::zeros(ds);
    for i in 0..s.len() {
        for j in 0..s.len() {
            let c = cm.hamiltonian_part[(i, j)];
            if c != ZERO {
                h = &h + &(&s[i] * &s[j]).scale(c);
            }
        }
    }
    h.hermitized()
}

/// Jump operators with rates and the Hamiltonian of the second-order
/// generator.
#[derive(Clone, Debug)]
pub struct LindbladForm {
    pub jumps: Vec<(f64, OperatorMatrix)>,
    pub hamiltonian: OperatorMatrix,
}

impl LindbladForm {
    /// `Σ κ (LμL† − ½{L†L, μ}) − i[H, μ]`.
    pub fn generator(&self) -> Result<SuperOp> {
        let d = self.hamiltonian.dim();
        let id = OperatorMatrix::identity(d);
        let mut acc = superop_sum(
            d,
            &[(c64::new(0.0, -1.0), &self.hamiltonian, &id), (c64::new(0.0, 1.0), &id, &self.hamiltonian)],
        )?;
        for (k, l) in &self.jumps {
            let ld = l.dagger();
            let ll = &ld * l;
            acc = acc.try_add(&superop_sum(d, &[(re(*k), l, &ld), (re(-0.5 * k), &ll, &id), (re(-0.5 * k), &id, &ll)])?)?;
        }
        Ok(acc)
    }
}

/// Diagonalizes `𝒜 + 𝒜† = U diag(κ) U†`; jump α is `Σ_i U*_iα S_i` at rate
/// κ_α. Rates in `[−1e-9, 0)` are clamped to zero.
pub fn lindblad_decomposition(cm: &CoefficientMatrix, system_ops: &[OperatorMatrix]) -> Result<LindbladForm> {
    let k = cm.dim();
    if system_ops.len() != k {
        return Err(Error::dim("system operator count", k, system_ops.len()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("no system operators".into()));
    }
    let scale = linalg::max_abs(cm.dissipation.as_ref()).max(1.0);
    let herm = linalg::hermitian_part(cm.dissipation.as_ref());
    let evd = herm
        .as_ref()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NoConvergence)?;
    let u = evd.U();
    let kappa: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let ds = system_ops[0].dim();
    let mut jumps = Vec::with_capacity(k);
    for (alpha, &rate) in kappa.iter().enumerate() {
        if rate < -RATE_CLAMP * scale {
            return Err(Error::NotPositive { eigmin: rate });
        }
        let rate = rate.max(0.0);
        let mut l = OperatorMatrix::zeros(ds);
        for (i, s) in system_ops.iter().enumerate() {
            l = &l + &s.scale(u[(i, alpha)].conj());
        }
        jumps.push((rate, l));
    }
    Ok(LindbladForm {
        jumps,
        hamiltonian: system_hamiltonian(cm, system_ops),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{decaying_qubit, depolarizing_qubit, driven_damped_qubit, random_ancilla_model, superradiance_ancilla_model, superradiance_model, SuperradianceParams};
    use crate::operator::spin_half;
    use crate::superop::lindblad_superop;
    use crate::sw::{correction_terms, generator_terms, reduced_term};

    fn l0_of(spec: &crate::superop::LindbladSpec) -> SuperOp {
        lindblad_superop(spec).unwrap().0
    }

    #[test]
    fn steady_states_of_qubit_models() {
        let s = steady_state(&l0_of(&decaying_qubit(1.0, 0.2))).unwrap();
        assert!(s.max_abs_diff(&OperatorMatrix::unit(2, 1, 1)) < 1e-12);
        let s = steady_state(&l0_of(&depolarizing_qubit(0.4))).unwrap();
        assert!(s.max_abs_diff(&OperatorMatrix::identity(2).scale_re(0.5)) < 1e-12);
    }

    #[test]
    fn driven_steady_state_matches_long_time_limit() {
        let l0 = l0_of(&driven_damped_qubit(1.3, 1.0, 0.4));
        let sigma = steady_state(&l0).unwrap();
        let sd = decompose(&l0, DEFAULT_ZERO_TOL).unwrap();
        let t = 100.0 / sd.gap();
        let prop = linalg::expm(linalg::scaled(l0.dense().as_ref().as_ref(), re(t)).as_ref());
        let rho0 = vectorize(&OperatorMatrix::unit(2, 0, 0));
        let out: Vec<c64> = (0..4).map(|i| (0..4).map(|j| prop[(i, j)] * rho0[j]).sum()).collect();
        assert!(devectorize(&out).max_abs_diff(&sigma) < 1e-8);
    }

    #[test]
    fn hamiltonian_only_ancilla_is_rejected() {
        let [_, _, _, _, sz] = spin_half();
        let l0 = l0_of(&crate::superop::LindbladSpec::new(sz.clone()));
        assert!(matches!(steady_state(&l0), Err(Error::DegenerateSteadyState { multiplicity: 2 })));
        assert!(matches!(close_operator_set(&l0, &[sz]), Err(Error::DegenerateSteadyState { .. })));
    }

    #[test]
    fn optical_bloch_matrix() {
        let (rabi, gamma, delta) = (0.7, 1.0, 0.3);
        let l0 = l0_of(&driven_damped_qubit(rabi, gamma, delta));
        let [_, _, sx, sy, sz] = spin_half();
        let bs = close_operator_set(&l0, &[sx, sy, sz]).unwrap();
        assert_eq!(bs.dim(), 3);
        // d⟨s⟩/dt for H = Δσ⁺σ⁻ + Ω s_x, decay γ on spin-½ components
        let want = [
            [-gamma / 2.0, -delta, 0.0],
            [delta, -gamma / 2.0, -rabi],
            [0.0, rabi, -gamma],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((bs.m[(i, j)] - re(want[i][j])).norm() < 1e-10, "M[{i},{j}] = {:?}", bs.m[(i, j)]);
            }
        }
    }

    #[test]
    fn closure_reproduces_heisenberg_images() {
        for seed in 0..5 {
            let am = random_ancilla_model(3, 2, 1, seed);
            let bs = close_operator_set(&am.ancilla_l0, &am.ancilla_ops()).unwrap();
            let sigma = &bs.steady_state;
            for (k, op) in bs.basis_ops.iter().enumerate() {
                let image = adjoint_apply(&am.ancilla_l0, op);
                let mut rebuilt = OperatorMatrix::zeros(3);
                for (l, b) in bs.basis_ops.iter().enumerate() {
                    rebuilt = &rebuilt + &b.scale(bs.m[(k, l)]);
                }
                // agree up to a multiple of the identity
                let diff = &image - &rebuilt;
                let shift = diff.trace() / 3.0;
                let diff = &diff - &OperatorMatrix::identity(3).scale(shift);
                assert!(diff.max_abs() < 1e-10);
                // and the identity part is fixed by ⟨Heis(A)⟩_ss = 0
                assert!(image.expectation(sigma).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_is_dual_to_generator() {
        let am = random_ancilla_model(3, 2, 1, 9);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let x = crate::models::random_operator_with(&mut rng, 3);
        let rho = crate::models::random_operator_with(&mut rng, 3);
        let lhs = adjoint_apply(&am.ancilla_l0, &x).trace_product(&rho);
        let rhs = x.trace_product(&am.ancilla_l0.apply_operator(&rho).unwrap());
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn regression_and_resolvent_routes_agree() {
        for seed in 0..30 {
            let da = 2 + (seed as usize % 3);
            let am = random_ancilla_model(da, 2, 3, seed);
            let bs = close_operator_set(&am.ancilla_l0, &am.ancilla_ops()).unwrap();
            let cm = coefficient_matrix(&bs).unwrap();
            let oracle = coefficient_matrix_resolvent_oracle(&am.ancilla_l0, &bs.steady_state, &am.ancilla_ops()).unwrap();
            let diff = linalg::max_abs_diff(cm.a.as_ref(), oracle.as_ref());
            assert!(diff < 1e-8 * linalg::max_abs(oracle.as_ref()).max(1.0), "seed {seed}: {diff}");
        }
    }

    #[test]
    fn adjoint_convention_is_not_the_oracle() {
        let am = random_ancilla_model(3, 2, 2, 4);
        let bs = close_operator_set(&am.ancilla_l0, &am.ancilla_ops()).unwrap();
        let cm = coefficient_matrix(&bs).unwrap();
        let oracle = coefficient_matrix_resolvent_oracle(&am.ancilla_l0, &bs.steady_state, &am.ancilla_ops()).unwrap();
        let adj = cm.a.adjoint().to_owned();
        assert!(linalg::max_abs_diff(adj.as_ref(), oracle.as_ref()) > 1e-3);
    }

    #[test]
    fn quadrature_of_correlation_function() {
        // ∫₀^T Tr(ΔA e^{ℒ₀τ}(ΔA σ)) dτ by composite Simpson on a fine grid
        let l0 = l0_of(&driven_damped_qubit(0.8, 1.0, 0.5));
        let [_, _, _, _, sz] = spin_half();
        let sigma = steady_state(&l0).unwrap();
        let dz = &sz - &OperatorMatrix::identity(2).scale(sz.expectation(&sigma));
        let x0 = vectorize(&(&dz * &sigma));
        let (t_max, steps) = (60.0, 6000);
        let h = t_max / steps as f64;
        let step = linalg::expm(linalg::scaled(l0.dense().as_ref().as_ref(), re(h)).as_ref());
        let mut x = x0.clone();
        let mut acc = ZERO;
        for k in 0..=steps {
            let f = dz.trace_product(&devectorize(&x));
            let w = if k == 0 || k == steps {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += f * (w * h / 3.0);
            x = (0..4).map(|i| (0..4).map(|j| step[(i, j)] * x[j]).sum()).collect();
        }
        let bs = close_operator_set(&l0, &[sz]).unwrap();
        let cm = coefficient_matrix(&bs).unwrap();
        assert!((cm.a[(0, 0)] - acc).norm() < 1e-6, "{:?} vs {:?}", cm.a[(0, 0)], acc);

        // a decaying qubit has Δσ_z σ_ss = 0
        let l0 = l0_of(&decaying_qubit(1.0, 0.3));
        let bs = close_operator_set(&l0, &[spin_half()[4].clone()]).unwrap();
        assert!(coefficient_matrix(&bs).unwrap().a[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn identity_couplings_give_zero_coefficients() {
        let l0 = l0_of(&driven_damped_qubit(0.8, 1.0, 0.5));
        let ops = [OperatorMatrix::identity(2).scale_re(2.5)];
        let bs = close_operator_set(&l0, &ops).unwrap();
        assert_eq!(bs.dim(), 0);
        let cm = coefficient_matrix(&bs).unwrap();
        assert_eq!(linalg::max_abs(cm.a.as_ref()), 0.0);
        let oracle = coefficient_matrix_resolvent_oracle(&l0, &bs.steady_state, &ops).unwrap();
        assert!(linalg::max_abs(oracle.as_ref()) < 1e-14);
    }

    #[test]
    fn dissipation_is_positive_on_random_models() {
        for seed in 100..160 {
            let da = 2 + (seed as usize % 3);
            let am = random_ancilla_model(da, 2, 1 + (seed as usize % 4), seed);
            let eff = effective_master_equation_2(&am).unwrap();
            let cm = &eff.coefficients;
            assert!(linalg::max_abs_diff(cm.dissipation.as_ref(), cm.dissipation.adjoint().to_owned().as_ref()) < 1e-12);
            assert!(cm.dissipation_eigmin() >= -1e-9, "seed {seed}: {}", cm.dissipation_eigmin());
        }
    }

    #[test]
    fn second_order_matches_schrieffer_wolff() {
        for seed in 0..6 {
            let am = random_ancilla_model(2 + seed as usize % 2, 2, 2, seed);
            let eff = effective_master_equation_2(&am).unwrap();
            let (l0, v) = am.joint_generators().unwrap();
            let sd = decompose(&l0, DEFAULT_ZERO_TOL).unwrap();
            let series = correction_terms(&generator_terms(&sd, &v, 2).unwrap(), &sd, 1.0).unwrap();
            let l1 = reduced_term(&series, &sd, 1).unwrap().generator;
            let l2 = reduced_term(&series, &sd, 2).unwrap().generator;
            assert!(l1.max_abs_diff(&eff.first) < 1e-9 * l1.max_abs().max(1.0));
            assert!(l2.max_abs_diff(&eff.second) < 1e-9 * l2.max_abs().max(1.0), "seed {seed}");
        }
    }

    #[test]
    fn second_order_preserves_trace_and_hermiticity() {
        let am = random_ancilla_model(3, 3, 2, 77);
        let eff = effective_master_equation_2(&am).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let mu = crate::models::random_operator_with(&mut rng, 3).hermitized();
        for g in [&eff.first, &eff.second] {
            let out = g.apply_operator(&mu).unwrap();
            assert!(out.trace().norm() < 1e-10);
            assert!(out.hermiticity_error() < 1e-10);
        }
    }

    #[test]
    fn identity_system_operators_cancel() {
        let l0 = l0_of(&driven_damped_qubit(0.8, 1.0, 0.5));
        let [_, _, sx, ..] = spin_half();
        let am = AncillaModel::new(l0, vec![(sx, OperatorMatrix::identity(3))], 1.0).unwrap();
        let eff = effective_master_equation_2(&am).unwrap();
        assert!(eff.second.max_abs() < 1e-12);
        assert!(eff.first.max_abs() < 1e-12);
    }

    #[test]
    fn vanishing_means_remove_first_order() {
        let l0 = l0_of(&decaying_qubit(1.0, 0.3));
        let [_, _, sx, sy, _] = spin_half();
        let s = spin_half()[4].clone();
        let am = AncillaModel::new(l0, vec![(sx, s.clone()), (sy, s)], 1.0).unwrap();
        let eff = effective_master_equation_2(&am).unwrap();
        assert!(eff.means.iter().all(|m| m.norm() < 1e-12));
        assert!(eff.first.max_abs() < 1e-12);
    }

    #[test]
    fn lindblad_form_round_trip() {
        for seed in 0..10 {
            let am = random_ancilla_model(3, 2, 3, 200 + seed);
            let eff = effective_master_equation_2(&am).unwrap();
            let form = lindblad_decomposition(&eff.coefficients, &am.system_ops()).unwrap();
            let g = form.generator().unwrap();
            assert!(g.max_abs_diff(&eff.second) < 1e-9 * eff.second.max_abs().max(1.0));
            assert!(form.jumps.iter().all(|(k, _)| *k >= 0.0));
        }
    }

    #[test]
    fn single_coupling_decomposition() {
        let am = random_ancilla_model(2, 2, 1, 11);
        let eff = effective_master_equation_2(&am).unwrap();
        let form = lindblad_decomposition(&eff.coefficients, &am.system_ops()).unwrap();
        assert_eq!(form.jumps.len(), 1);
        let (rate, l) = &form.jumps[0];
        assert!((rate - eff.coefficients.dissipation[(0, 0)].re).abs() < 1e-12);
        let s = &am.couplings[0].1;
        let phase = l.get(0, 0) / s.get(0, 0);
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(l.max_abs_diff(&s.scale(phase)) < 1e-12);
    }

    #[test]
    fn negative_rates_are_rejected() {
        let cm = CoefficientMatrix::from_a(Mat::from_fn(1, 1, |_, _| re(-1.0)));
        let s = [spin_half()[4].clone()];
        assert!(matches!(lindblad_decomposition(&cm, &s), Err(Error::NotPositive { .. })));
        let cm = CoefficientMatrix::from_a(Mat::from_fn(1, 1, |_, _| re(-1e-10)));
        assert_eq!(lindblad_decomposition(&cm, &s).unwrap().jumps[0].0, 0.0);
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let l0 = l0_of(&driven_damped_qubit(0.9, 1.0, 0.2));
        let sigma = steady_state(&l0).unwrap();
        for t in [0.5, 3.0, 17.0] {
            let prop = linalg::expm(linalg::scaled(l0.dense().as_ref().as_ref(), re(t)).as_ref());
            let v = vectorize(&sigma);
            let out: Vec<c64> = (0..4).map(|i| (0..4).map(|j| prop[(i, j)] * v[j]).sum()).collect();
            assert!(devectorize(&out).max_abs_diff(&sigma) < 1e-10);
        }
    }

    #[test]
    fn superradiance_as_ancilla_problem() {
        let p = SuperradianceParams::new(3, 0.1, 1.0, 0.2);
        let am = superradiance_ancilla_model(p).unwrap();
        let m = superradiance_model(p).unwrap();
        let eff = effective_master_equation_2(&am).unwrap();
        assert!(eff.first.max_abs() < 1e-14);
        let sd = decompose(&m.l0, DEFAULT_ZERO_TOL).unwrap();
        let series = correction_terms(&generator_terms(&sd, &m.v, 2).unwrap(), &sd, 1.0).unwrap();
        let sw2 = reduced_term(&series, &sd, 2).unwrap().generator;
        assert!(sw2.max_abs_diff(&eff.second) < 1e-9 * sw2.max_abs());
        let quarter = m.collective_decay_generator(0.25 * p.gamma_eff(), 0.25 * p.omega_eff());
        assert!(quarter.max_abs_diff(&eff.second) < 1e-9 * quarter.max_abs());

        let form = lindblad_decomposition(&eff.coefficients, &am.system_ops()).unwrap();
        let active: Vec<_> = form.jumps.iter().filter(|(k, _)| *k > 1e-12).collect();
        assert_eq!(active.len(), 1);
        let (rate, l) = active[0];
        // L ∝ I⁻: rate·|c|² is the collective decay rate
        let im = &m.nuclear.iminus;
        let c = l.trace_product(&im.dagger()) / im.trace_product(&im.dagger());
        assert!(l.max_abs_diff(&im.scale(c)) < 1e-12);
        assert!((rate * c.norm_sqr() - 0.25 * p.gamma_eff()).abs() < 1e-12);
    }
}

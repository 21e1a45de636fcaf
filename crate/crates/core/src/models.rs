//! Builders for the electron/nuclear superradiance model, the small qubit
//! models and randomized test generators.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::ancilla::AncillaModel;
use crate::dynamics::{emission_intensity, evolve};
use crate::error::{Error, Result};
use crate::linalg::{self, re, ZERO};
use crate::operator::{spin_half, spin_operators, tensor, OperatorMatrix};
use crate::spectral::{decompose, DEFAULT_ZERO_TOL};
use crate::superop::{lindblad_superop, sandwich_superop, LindbladSpec, SuperOp};
use crate::sw::{correction_terms, generator_terms, reduced_term};

/// Electron spin decaying at rate γ, detuned by ω, hyperfine-coupled with
/// strength g to N homogeneously coupled nuclear spins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperradianceParams {
    pub n: usize,
    pub g: f64,
    pub gamma: f64,
    pub omega: f64,
    pub homogeneous: bool,
}

impl SuperradianceParams {
    pub fn new(n: usize, g: f64, gamma: f64, omega: f64) -> Self {
        Self {
            n,
            g,
            gamma,
            omega,
            homogeneous: true,
        }
    }

    pub fn lambda2(&self) -> c64 {
        c64::new(-self.gamma / 2.0, self.omega)
    }

    pub fn lambda3(&self) -> c64 {
        self.lambda2().conj()
    }

    pub fn lambda4(&self) -> c64 {
        re(-self.gamma)
    }

    /// `g²γ / ((γ/2)² + ω²)`
    pub fn gamma_eff(&self) -> f64 {
        self.g * self.g * self.gamma / (0.25 * self.gamma * self.gamma + self.omega * self.omega)
    }

    /// `−g²ω / ((γ/2)² + ω²)`
    pub fn omega_eff(&self) -> f64 {
        -self.g * self.g * self.omega / (0.25 * self.gamma * self.gamma + self.omega * self.omega)
    }

    /// False once `g√N > ½ min(γ, |λ₂|)`.
    pub fn perturbative(&self) -> bool {
        self.g.abs() * (self.n as f64).sqrt() <= 0.5 * self.gamma.min(self.lambda2().norm())
    }

    fn validate(&self) -> Result<()> {
        if !self.homogeneous {
            return Err(Error::InhomogeneousUnsupported);
        }
        if self.n == 0 {
            return Err(Error::InvalidArgument("nuclear spin count must be positive".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.g.is_finite() || !self.omega.is_finite() {
            return Err(Error::InvalidArgument("g and omega must be finite".into()));
        }
        Ok(())
    }
}

/// Collective nuclear operators in the symmetric sector.
#[derive(Clone, Debug)]
pub struct NuclearOperators {
    pub iplus: OperatorMatrix,
    pub iminus: OperatorMatrix,
    pub iz: OperatorMatrix,
}

impl NuclearOperators {
    /// `I^± = J^±/√N`, `I^z = J^z/√N` with `J` the collective spin N/2.
    pub fn new(n: usize) -> Self {
        let (jp, jm, jz) = spin_operators(n);
        let s = 1.0 / (n as f64).sqrt();
        Self {
            iplus: jp.scale_re(s),
            iminus: jm.scale_re(s),
            iz: jz.scale_re(s),
        }
    }

    pub fn dim(&self) -> usize {
        self.iz.dim()
    }
}

#[derive(Clone, Debug)]
pub struct SuperradianceModel {
    pub params: SuperradianceParams,
    pub spec: LindbladSpec,
    pub l0: SuperOp,
    pub v: SuperOp,
    pub nuclear: NuclearOperators,
}

/// Electron ⊗ nuclear model with
/// `𝒱 = −ig[½(σ⁺I⁻ + σ⁻I⁺) + σ⁺σ⁻I^z, ·]` and ε = 1.
pub fn superradiance_model(p: SuperradianceParams) -> Result<SuperradianceModel> {
    p.validate()?;
    let [sp, sm, ..] = spin_half();
    let nuc = NuclearOperators::new(p.n);
    let id_n = OperatorMatrix::identity(nuc.dim());
    let up = &sp * &sm;
    let h0 = tensor(&up.scale_re(p.omega), &id_n);
    let flip = (&tensor(&sp, &nuc.iminus) + &tensor(&sm, &nuc.iplus)).scale_re(0.5);
    let hv = (&flip + &tensor(&up, &nuc.iz)).scale_re(p.g);
    let spec = LindbladSpec::new(h0)
        .with_jump(p.gamma, tensor(&sm, &id_n))
        .with_perturbation(hv)
        .with_epsilon(1.0);
    let (l0, v) = lindblad_superop(&spec)?;
    Ok(SuperradianceModel {
        params: p,
        spec,
        l0,
        v,
        nuclear: nuc,
    })
}

fn sandwich_sum(d: usize, terms: &[(c64, &OperatorMatrix, &OperatorMatrix)]) -> SuperOp {
    let mut acc = SuperOp::zeros(d);
    for (c, a, b) in terms {
        let s = sandwich_superop(a, b).expect("equal dimensions").scale(*c);
        acc = acc.try_add(&s).expect("equal dimensions");
    }
    acc
}

impl SuperradianceModel {
    pub fn nuclear_dim(&self) -> usize {
        self.nuclear.dim()
    }

    pub fn hdim(&self) -> usize {
        2 * self.nuclear_dim()
    }

    /// `|↓⟩⟨↓| ⊗ |N/2⟩⟨N/2|`.
    pub fn initial_state(&self) -> OperatorMatrix {
        tensor(&OperatorMatrix::unit(2, 1, 1), &OperatorMatrix::unit(self.nuclear_dim(), 0, 0))
    }

    /// Nuclear `|N/2⟩⟨N/2|`.
    pub fn nuclear_initial_state(&self) -> OperatorMatrix {
        OperatorMatrix::unit(self.nuclear_dim(), 0, 0)
    }

    /// `1 ⊗ I^z` on the full space.
    pub fn full_iz(&self) -> OperatorMatrix {
        tensor(&OperatorMatrix::identity(2), &self.nuclear.iz)
    }

    /// `γ_eff [I⁻μI⁺ − ½{I⁺I⁻, μ}] − iω_eff [I⁺I⁻, μ]` with the rates of
    /// [`SuperradianceParams::gamma_eff`] and [`SuperradianceParams::omega_eff`].
    pub fn second_order_generator(&self) -> SuperOp {
        self.collective_decay_generator(self.params.gamma_eff(), self.params.omega_eff())
    }

    /// `rate [I⁻μI⁺ − ½{I⁺I⁻, μ}] − i shift [I⁺I⁻, μ]`.
    pub fn collective_decay_generator(&self, rate: f64, shift: f64) -> SuperOp {
        let n = &self.nuclear;
        let id = OperatorMatrix::identity(n.dim());
        let pm = &n.iplus * &n.iminus;
        sandwich_sum(
            n.dim(),
            &[
                (re(rate), &n.iminus, &n.iplus),
                (c64::new(-0.5 * rate, -shift), &pm, &id),
                (c64::new(-0.5 * rate, shift), &id, &pm),
            ],
        )
    }

    /// Four-term third-order generator assembled from λ₂, λ₃, λ₄.
    pub fn third_order_generator(&self) -> SuperOp {
        let p = &self.params;
        let n = &self.nuclear;
        let id = OperatorMatrix::identity(n.dim());
        let (l2, l3, l4) = (p.lambda2(), p.lambda3(), p.lambda4());
        let g3 = re(p.g.powi(3));
        let i = c64::new(0.0, 1.0);
        let a = i * g3 / (l2 * l2 * 4.0);
        let b = -i * g3 / (l2 * l4 * 4.0);
        let c = i * g3 / (l3 * l3 * 4.0);
        let d = -i * g3 / (l3 * l4 * 4.0);
        let pz = &n.iplus * &n.iz;
        let pzm = &pz * &n.iminus;
        let zm = &n.iz * &n.iminus;
        sandwich_sum(
            n.dim(),
            &[
                (a, &n.iminus, &pz),
                (-a, &id, &pzm),
                (b, &zm, &n.iplus),
                (-b, &n.iminus, &pz),
                (c, &pzm, &id),
                (-c, &zm, &n.iplus),
                (d, &zm, &n.iplus),
                (-d, &n.iminus, &pz),
            ],
        )
    }

    /// ω = 0 form: `i(g/2γ)γ_eff [I⁻μI⁺, I^z] + i(g/4γ)γ_eff [I⁺I^zI⁻, μ]`.
    pub fn third_order_generator_resonant(&self) -> SuperOp {
        let p = &self.params;
        let n = &self.nuclear;
        let id = OperatorMatrix::identity(n.dim());
        let ge = p.gamma_eff();
        let a = c64::new(0.0, p.g / (2.0 * p.gamma) * ge);
        let b = c64::new(0.0, p.g / (4.0 * p.gamma) * ge);
        let pz = &n.iplus * &n.iz;
        let zm = &n.iz * &n.iminus;
        let pzm = &pz * &n.iminus;
        sandwich_sum(
            n.dim(),
            &[(a, &n.iminus, &pz), (-a, &zm, &n.iplus), (b, &pzm, &id), (-b, &id, &pzm)],
        )
    }

    /// ω = 0 Lindblad form of `L₂ + L₃`:
    /// `γ_eff [U I⁻μI⁺ U† − ½{I⁺I⁻, μ}] + i(g/4γ)γ_eff [I⁺I^zI⁻, μ]`
    /// with `U = exp(−i g/(2γ) I^z)`.
    pub fn regrouped_lindblad_generator(&self) -> SuperOp {
        let p = &self.params;
        self.regrouped_lindblad_generator_with(p.gamma_eff(), p.g / (2.0 * p.gamma))
    }

    /// `rate [U I⁻μI⁺ U† − ½{I⁺I⁻, μ}] + i(g/4γ)γ_eff [I⁺I^zI⁻, μ]` with
    /// `U = exp(−iθ I^z)`.
    pub fn regrouped_lindblad_generator_with(&self, rate: f64, theta: f64) -> SuperOp {
        let p = &self.params;
        let n = &self.nuclear;
        let id = OperatorMatrix::identity(n.dim());
        let u = OperatorMatrix::from_mat(linalg::expm(n.iz.scale(c64::new(0.0, -theta)).mat()))
            .expect("square");
        let jump = &u * &n.iminus;
        let jump_d = jump.dagger();
        let pm = &n.iplus * &n.iminus;
        let pzm = &(&n.iplus * &n.iz) * &n.iminus;
        let b = c64::new(0.0, p.g / (4.0 * p.gamma) * p.gamma_eff());
        sandwich_sum(
            n.dim(),
            &[
                (re(rate), &jump, &jump_d),
                (re(-0.5 * rate), &pm, &id),
                (re(-0.5 * rate), &id, &pm),
                (b, &pzm, &id),
                (-b, &id, &pzm),
            ],
        )
    }
}

/// Largest Liouville dimension for which [`emission_generators`] runs the
/// engine; beyond it the closed forms are used.
pub const ENGINE_LIOUVILLE_LIMIT: usize = 1156;

/// Order-2 and order-3 nuclear generators for the emission comparison.
#[derive(Clone, Debug)]
pub struct EmissionGenerators {
    pub second: SuperOp,
    pub third: SuperOp,
    pub from_engine: bool,
}

/// Engine generators up to [`ENGINE_LIOUVILLE_LIMIT`], otherwise the
/// quarter-rate collective decay plus the four-term third-order form, which
/// the engine reproduces exactly at smaller N.
pub fn emission_generators(m: &SuperradianceModel) -> Result<EmissionGenerators> {
    let hd = m.hdim();
    if hd * hd <= ENGINE_LIOUVILLE_LIMIT {
        let sd = decompose(&m.l0, DEFAULT_ZERO_TOL)?;
        let series = correction_terms(&generator_terms(&sd, &m.v, 3)?, &sd, 1.0)?;
        Ok(EmissionGenerators {
            second: reduced_term(&series, &sd, 2)?.generator,
            third: reduced_term(&series, &sd, 3)?.generator,
            from_engine: true,
        })
    } else {
        let p = m.params;
        Ok(EmissionGenerators {
            second: m.collective_decay_generator(0.25 * p.gamma_eff(), 0.25 * p.omega_eff()),
            third: m.third_order_generator(),
            from_engine: false,
        })
    }
}

/// Collective emission rate `√N I(0)` of the polarized state under `l2`;
/// `6 / rate` spans the burst.
pub fn emission_rate(m: &SuperradianceModel, l2: &SuperOp) -> Result<f64> {
    let rho = m.nuclear_initial_state();
    let i0 = emission_intensity(&evolve(l2, &rho, &[0.0])?, &m.nuclear.iz, l2)?[0];
    Ok(i0 * (m.params.n as f64).sqrt())
}

#[derive(Clone, Debug)]
pub struct EmissionComparison {
    pub times: Vec<f64>,
    pub exact: Vec<f64>,
    pub second: Vec<f64>,
    pub third: Vec<f64>,
}

/// Emission `−d⟨I^z⟩/dt` under the full generator and under the order-2 and
/// order-2+3 nuclear generators, starting from the polarized state.
pub fn emission_comparison(m: &SuperradianceModel, gens: &EmissionGenerators, times: &[f64]) -> Result<EmissionComparison> {
    let l23 = gens.second.try_add(&gens.third)?;
    let rho = m.nuclear_initial_state();
    let full = m.l0.try_add(&m.v)?;
    let exact = emission_intensity(&evolve(&full, &m.initial_state(), times)?, &m.full_iz(), &full)?;
    let second = emission_intensity(&evolve(&gens.second, &rho, times)?, &m.nuclear.iz, &gens.second)?;
    let third = emission_intensity(&evolve(&l23, &rho, times)?, &m.nuclear.iz, &l23)?;
    Ok(EmissionComparison {
        times: times.to_vec(),
        exact,
        second,
        third,
    })
}

/// Blocks `𝒱_ij = ⟨l_i|𝒱|r_j⟩` over the four electronic eigenmodes of ℒ₀,
/// each a superoperator on the nuclear space. Index 0 is the slow mode.
#[derive(Clone, Debug)]
pub struct EigenbasisBlocks {
    pub blocks: Vec<Vec<SuperOp>>,
    pub eigenvalues: Vec<c64>,
}

impl EigenbasisBlocks {
    pub fn get(&self, i: usize, j: usize) -> &SuperOp {
        &self.blocks[i][j]
    }

    /// `𝒱^P`
    pub fn vp(&self) -> &SuperOp {
        &self.blocks[0][0]
    }
}

pub fn eigenbasis_blocks(model: &SuperradianceModel) -> Result<EigenbasisBlocks> {
    let p = &model.params;
    let electron = decaying_qubit(p.gamma, p.omega);
    let sd = decompose(&lindblad_superop(&electron)?.0, DEFAULT_ZERO_TOL)?;
    let (le, rv) = (sd.left_vectors(), sd.right_vectors());
    let dn = model.nuclear_dim();
    let d = 2 * dn;
    let vd = model.v.dense();
    let full = |e: usize, a: usize, f: usize, b: usize| (e * dn + a) * d + (f * dn + b);
    let mut blocks = Vec::with_capacity(4);
    for i in 0..4 {
        let mut row = Vec::with_capacity(4);
        for j in 0..4 {
            let m = Mat::from_fn(dn * dn, dn * dn, |x, y| {
                let (a, b) = (x / dn, x % dn);
                let (c, dd) = (y / dn, y % dn);
                let mut acc = ZERO;
                for e in 0..4 {
                    let l = le[(i, e)];
                    if l == ZERO {
                        continue;
                    }
                    for f in 0..4 {
                        let r = rv[(f, j)];
                        if r == ZERO {
                            continue;
                        }
                        acc += l * vd[(full(e / 2, a, e % 2, b), full(f / 2, c, f % 2, dd))] * r;
                    }
                }
                acc
            });
            row.push(SuperOp::from_dense(dn, m)?);
        }
        blocks.push(row);
    }
    Ok(EigenbasisBlocks {
        blocks,
        eigenvalues: sd.eigenvalues().to_vec(),
    })
}

/// `H = ω σ⁺σ⁻`, one jump `σ⁻` at rate γ.
pub fn decaying_qubit(gamma: f64, omega: f64) -> LindbladSpec {
    let [sp, sm, ..] = spin_half();
    LindbladSpec::new((&sp * &sm).scale_re(omega)).with_jump(gamma, sm)
}

/// `H = Δ σ⁺σ⁻ + (Ω/2)(σ⁺ + σ⁻)`, one jump `σ⁻` at rate γ.
pub fn driven_damped_qubit(rabi: f64, gamma: f64, detuning: f64) -> LindbladSpec {
    let [sp, sm, ..] = spin_half();
    let h = &(&sp * &sm).scale_re(detuning) + &(&sp + &sm).scale_re(0.5 * rabi);
    LindbladSpec::new(h).with_jump(gamma, sm)
}

/// Pauli channels at equal rate; the steady state is `I/2`.
pub fn depolarizing_qubit(rate: f64) -> LindbladSpec {
    let [_, _, sx, sy, sz] = spin_half();
    LindbladSpec::new(OperatorMatrix::zeros(2))
        .with_jump(rate, sx.scale_re(2.0))
        .with_jump(rate, sy.scale_re(2.0))
        .with_jump(rate, sz.scale_re(2.0))
}

fn gaussian_operator(rng: &mut ChaCha8Rng, d: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(d, |_, _| {
        c64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

fn gaussian_hermitian(rng: &mut ChaCha8Rng, d: usize) -> OperatorMatrix {
    gaussian_operator(rng, d).hermitized()
}

/// Random Hermitian `H₀`, `n_jumps` Gaussian jump operators with rates in
/// `[0.5, 1.5]` and one random perturbing Hamiltonian.
pub fn random_lindblad_model(d: usize, n_jumps: usize, seed: u64) -> LindbladSpec {
    assert!(d >= 2, "dimension must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = LindbladSpec::new(gaussian_hermitian(&mut rng, d));
    for _ in 0..n_jumps {
        let rate = rng.random_range(0.5..=1.5);
        spec = spec.with_jump(rate, gaussian_operator(&mut rng, d));
    }
    spec.with_perturbation(gaussian_hermitian(&mut rng, d))
}

/// Random `H₀` with dephasing in its eigenbasis (jump `H₀` itself), so the
/// slow space is the d-dimensional commutant of `H₀`. Carries one random
/// perturbing Hamiltonian.
pub fn random_dephasing_model(d: usize, seed: u64) -> LindbladSpec {
    assert!(d >= 2, "dimension must be at least 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = gaussian_hermitian(&mut rng, d);
    let rate = rng.random_range(0.5..=1.5);
    LindbladSpec::new(h.clone())
        .with_jump(rate, h)
        .with_perturbation(gaussian_hermitian(&mut rng, d))
}

#[cfg(test)]
pub(crate) fn random_operator_with(rng: &mut ChaCha8Rng, d: usize) -> OperatorMatrix {
    gaussian_operator(rng, d)
}

/// Random Lindblad ancilla (`random_lindblad_model` without perturbation)
/// with `k` random Hermitian couplings to a `d_s`-dimensional system.
pub fn random_ancilla_model(d_a: usize, d_s: usize, k: usize, seed: u64) -> AncillaModel {
    let spec = random_lindblad_model(d_a, 2, seed);
    let l0 = lindblad_superop(&spec).expect("valid random model").0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let couplings = (0..k)
        .map(|_| (gaussian_hermitian(&mut rng, d_a), gaussian_hermitian(&mut rng, d_s)))
        .collect();
    AncillaModel::new(l0, couplings, 1.0).expect("random ancilla has a unique steady state")
}

/// The superradiance model with the electron as ancilla:
/// `½(σ⁺I⁻ + σ⁻I⁺) = s_x I_x + s_y I_y`, so the couplings are
/// `(g s_x, I_x)`, `(g s_y, I_y)`, `(g σ⁺σ⁻, I^z)` with ε = 1.
pub fn superradiance_ancilla_model(p: SuperradianceParams) -> Result<AncillaModel> {
    p.validate()?;
    let [sp, sm, sx, sy, _] = spin_half();
    let nuc = NuclearOperators::new(p.n);
    let ix = (&nuc.iplus + &nuc.iminus).scale_re(0.5);
    let iy = (&nuc.iplus - &nuc.iminus).scale(c64::new(0.0, -0.5));
    let l0 = lindblad_superop(&decaying_qubit(p.gamma, p.omega))?.0;
    AncillaModel::new(
        l0,
        vec![
            (sx.scale_re(p.g), ix),
            (sy.scale_re(p.g), iy),
            ((&sp * &sm).scale_re(p.g), nuc.iz),
        ],
        1.0,
    )
}

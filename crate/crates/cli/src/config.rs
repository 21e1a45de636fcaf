//! TOML run configuration and model construction.

use std::collections::BTreeMap;
use std::path::Path;

use faer::c64;
use lsw_core::ancilla::AncillaModel;
use lsw_core::models::{
    decaying_qubit, driven_damped_qubit, random_ancilla_model, random_dephasing_model, random_lindblad_model,
    superradiance_ancilla_model, superradiance_model, SuperradianceParams,
};
use lsw_core::operator::spin_half;
use lsw_core::spectral::DEFAULT_ZERO_TOL;
use lsw_core::superop::{lindblad_superop, LindbladSpec, SuperOp};
use lsw_core::{parse_operator_expr, spin_operators, OperatorMatrix, SymbolTable};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Effective,
    Evolve,
    Compare,
    AncillaQrt,
    DecouplingScan,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Spectrum => "spectrum",
            Task::Effective => "effective",
            Task::Evolve => "evolve",
            Task::Compare => "compare",
            Task::AncillaQrt => "ancilla-qrt",
            Task::DecouplingScan => "decoupling-scan",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<Task>,
    pub order: Option<usize>,
    pub epsilon: Option<f64>,
    pub output: Option<String>,
    pub model: ModelConfig,
    pub times: Option<Times>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub initial_state: Option<String>,
    #[serde(default)]
    pub observables: BTreeMap<String, String>,
    pub scan: Option<Scan>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Times {
    pub t_max: f64,
    pub n_points: usize,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub rtol: f64,
    pub atol: f64,
    pub dense_threshold: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let ev = lsw_core::dynamics::EvolveOptions::default();
        Self {
            zero_tol: DEFAULT_ZERO_TOL,
            rtol: ev.rtol,
            atol: ev.atol,
            dense_threshold: ev.dense_threshold,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scan {
    pub epsilons: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    Superradiance {
        n: usize,
        g: f64,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        omega: f64,
    },
    DecayingQubit {
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        omega: f64,
    },
    DrivenQubit {
        rabi: f64,
        #[serde(default = "one")]
        gamma: f64,
        #[serde(default)]
        detuning: f64,
    },
    Random {
        dimension: usize,
        #[serde(default = "one_usize")]
        jumps: usize,
        seed: u64,
    },
    Dephasing {
        dimension: usize,
        seed: u64,
    },
    RandomAncilla {
        ancilla_dim: usize,
        system_dim: usize,
        couplings: usize,
        seed: u64,
    },
    Custom(CustomModel),
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModel {
    /// Explicit matrices: real rows in `re`, optional imaginary rows in `im`.
    #[serde(default)]
    pub symbols: BTreeMap<String, MatrixDef>,
    /// `name = 2j` adds `name_x`, `name_y`, `name_z`, `name_p`, `name_m`
    /// and `name_id` for spin j.
    #[serde(default)]
    pub spins: BTreeMap<String, usize>,
    pub hamiltonian: String,
    #[serde(default)]
    pub jumps: Vec<JumpDef>,
    #[serde(default)]
    pub perturbations: Vec<String>,
    /// Ancilla ⊗ system couplings; the model above is then the ancilla.
    #[serde(default)]
    pub couplings: Vec<CouplingDef>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDef {
    pub re: Vec<Vec<f64>>,
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpDef {
    pub rate: f64,
    pub op: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingDef {
    pub ancilla: String,
    pub system: String,
}

/// Command-line values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub order: Option<usize>,
    pub epsilon: Option<f64>,
    pub out: Option<String>,
}

/// Validated run parameters.
#[derive(Clone, Debug)]
pub struct Run {
    pub task: Task,
    pub order: usize,
    pub epsilon: f64,
    pub output: String,
    pub config: RunConfig,
}

pub const MAX_ORDER: usize = 8;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

impl Run {
    pub fn new(task: Task, config: RunConfig, over: Overrides) -> Result<Self, CliError> {
        if let Some(t) = config.task {
            if t != task {
                return Err(invalid(format!(
                    "config is for task `{}` but `{}` was requested",
                    t.name(),
                    task.name()
                )));
            }
        }
        let default_order = if task == Task::Effective || task == Task::AncillaQrt { 2 } else { 3 };
        let order = over.order.or(config.order).unwrap_or(default_order);
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(invalid(format!("order must lie in [1, {MAX_ORDER}], got {order}")));
        }
        let epsilon = over.epsilon.or(config.epsilon).unwrap_or(1.0);
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(invalid(format!("epsilon must be finite and non-negative, got {epsilon}")));
        }
        if let Some(t) = config.times {
            if !(t.t_max.is_finite() && t.t_max > 0.0) {
                return Err(invalid(format!("times.t_max must be positive, got {}", t.t_max)));
            }
            if t.n_points < 2 {
                return Err(invalid(format!("times.n_points must be at least 2, got {}", t.n_points)));
            }
        }
        let tol = config.tolerances;
        for (name, x) in [("zero_tol", tol.zero_tol), ("rtol", tol.rtol), ("atol", tol.atol)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(invalid(format!("tolerances.{name} must be positive, got {x}")));
            }
        }
        if let Some(s) = &config.scan {
            if s.epsilons.len() < 2 {
                return Err(invalid("scan.epsilons needs at least two values"));
            }
            if s.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(invalid("scan.epsilons must be positive"));
            }
        }
        check_model(&config.model)?;
        let output = over.out.or(config.output.clone()).unwrap_or_else(|| "lsw".into());
        if output.is_empty() {
            return Err(invalid("output prefix is empty"));
        }
        Ok(Self {
            task,
            order,
            epsilon,
            output,
            config,
        })
    }
}

fn check_model(m: &ModelConfig) -> Result<(), CliError> {
    let positive = |name: &str, x: f64| {
        if x.is_finite() && x > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("model.{name} must be positive, got {x}")))
        }
    };
    let finite = |name: &str, x: f64| {
        if x.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("model.{name} must be finite")))
        }
    };
    match *m {
        ModelConfig::Superradiance { n, g, gamma, omega } => {
            if n == 0 {
                return Err(invalid("model.n must be at least 1"));
            }
            finite("g", g)?;
            positive("gamma", gamma)?;
            finite("omega", omega)
        }
        ModelConfig::DecayingQubit { gamma, omega } => {
            positive("gamma", gamma)?;
            finite("omega", omega)
        }
        ModelConfig::DrivenQubit { rabi, gamma, detuning } => {
            finite("rabi", rabi)?;
            positive("gamma", gamma)?;
            finite("detuning", detuning)
        }
        ModelConfig::Random { dimension, jumps, .. } => {
            if dimension < 2 || jumps == 0 {
                return Err(invalid("random model needs dimension >= 2 and jumps >= 1"));
            }
            Ok(())
        }
        ModelConfig::Dephasing { dimension, .. } => {
            if dimension < 2 {
                return Err(invalid("dephasing model needs dimension >= 2"));
            }
            Ok(())
        }
        ModelConfig::RandomAncilla {
            ancilla_dim,
            system_dim,
            couplings,
            ..
        } => {
            if ancilla_dim < 2 || system_dim < 2 || couplings == 0 {
                return Err(invalid("random ancilla model needs dimensions >= 2 and couplings >= 1"));
            }
            Ok(())
        }
        ModelConfig::Custom(ref c) => {
            for j in &c.jumps {
                if !(j.rate.is_finite() && j.rate >= 0.0) {
                    return Err(invalid(format!("jump `{}` has invalid rate {}", j.op, j.rate)));
                }
            }
            Ok(())
        }
    }
}

/// A Lindblad model ready for the engine, with the symbols that
/// observables and initial states may refer to.
pub struct BuiltModel {
    pub l0: SuperOp,
    pub v: SuperOp,
    pub symbols: SymbolTable,
    pub default_state: Option<OperatorMatrix>,
    pub default_observables: Vec<(String, String)>,
}

impl BuiltModel {
    pub fn hdim(&self) -> usize {
        self.l0.hdim()
    }
}

fn qubit_symbols() -> SymbolTable {
    let [sp, sm, sx, sy, sz] = spin_half();
    let up = &sp * &sm;
    [("sp", sp), ("sm", sm), ("sx", sx), ("sy", sy), ("sz", sz), ("up", up), ("id", OperatorMatrix::identity(2))]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

fn population_symbols(d: usize) -> SymbolTable {
    let mut t: SymbolTable = (0..d).map(|k| (format!("p{k}"), OperatorMatrix::unit(d, k, k))).collect();
    t.insert("id".into(), OperatorMatrix::identity(d));
    t
}

fn populations(d: usize) -> Vec<(String, String)> {
    (0..d).map(|k| (format!("p{k}"), format!("p{k}"))).collect()
}

fn from_spec(spec: &LindbladSpec, epsilon: f64) -> Result<(SuperOp, SuperOp), CliError> {
    let spec = spec.clone().with_epsilon(epsilon);
    spec.validate()?;
    Ok(lindblad_superop(&spec)?)
}

fn matrix(name: &str, def: &MatrixDef) -> Result<OperatorMatrix, CliError> {
    let d = def.re.len();
    let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
    if d == 0 || !rows_ok(&def.re) || def.im.as_ref().is_some_and(|im| !rows_ok(im)) {
        return Err(invalid(format!("symbol `{name}` is not a square matrix")));
    }
    Ok(OperatorMatrix::from_fn(d, |i, j| {
        c64::new(def.re[i][j], def.im.as_ref().map_or(0.0, |im| im[i][j]))
    }))
}

pub fn custom_symbols(c: &CustomModel) -> Result<SymbolTable, CliError> {
    let mut t = SymbolTable::new();
    for (name, def) in &c.symbols {
        t.insert(name.clone(), matrix(name, def)?);
    }
    for (name, &two_j) in &c.spins {
        if two_j == 0 {
            return Err(invalid(format!("spin `{name}` needs 2j >= 1")));
        }
        let (jp, jm, jz) = spin_operators(two_j);
        let half_i = c64::new(0.0, -0.5);
        let jx = (&jp + &jm).scale_re(0.5);
        let jy = (&jp - &jm).scale(half_i);
        for (suffix, op) in [
            ("x", jx),
            ("y", jy),
            ("z", jz),
            ("p", jp),
            ("m", jm),
            ("id", OperatorMatrix::identity(two_j + 1)),
        ] {
            t.insert(format!("{name}_{suffix}"), op);
        }
    }
    Ok(t)
}

fn custom_spec(c: &CustomModel, symbols: &SymbolTable) -> Result<LindbladSpec, CliError> {
    let h = parse_operator_expr(&c.hamiltonian, symbols)?;
    let mut spec = LindbladSpec::new(h);
    for j in &c.jumps {
        spec = spec.with_jump(j.rate, parse_operator_expr(&j.op, symbols)?);
    }
    for p in &c.perturbations {
        spec = spec.with_perturbation(parse_operator_expr(p, symbols)?);
    }
    Ok(spec)
}

/// Builds `ℒ₀` and the unscaled `𝒱`; ε enters only where the task applies it.
pub fn build_model(m: &ModelConfig, epsilon: f64) -> Result<BuiltModel, CliError> {
    match m {
        ModelConfig::Superradiance { n, g, gamma, omega } => {
            let sr = superradiance_model(SuperradianceParams::new(*n, *g, *gamma, *omega))?;
            let [sp, sm, ..] = spin_half();
            let up = &sp * &sm;
            let symbols: SymbolTable = [
                ("sp", sp),
                ("sm", sm),
                ("up", up),
                ("ide", OperatorMatrix::identity(2)),
                ("ip", sr.nuclear.iplus.clone()),
                ("im", sr.nuclear.iminus.clone()),
                ("iz", sr.nuclear.iz.clone()),
                ("idn", OperatorMatrix::identity(sr.nuclear_dim())),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            Ok(BuiltModel {
                l0: sr.l0.clone(),
                v: sr.v.clone(),
                symbols,
                default_state: Some(sr.initial_state()),
                default_observables: vec![
                    ("iz".into(), "ide kron iz".into()),
                    ("excited".into(), "up kron idn".into()),
                ],
            })
        }
        ModelConfig::DecayingQubit { gamma, omega } => {
            qubit_model(decaying_qubit(*gamma, *omega), epsilon, OperatorMatrix::unit(2, 0, 0))
        }
        ModelConfig::DrivenQubit { rabi, gamma, detuning } => {
            qubit_model(driven_damped_qubit(*rabi, *gamma, *detuning), epsilon, OperatorMatrix::unit(2, 1, 1))
        }
        ModelConfig::Random { dimension, jumps, seed } => {
            lattice_model(&random_lindblad_model(*dimension, *jumps, *seed), *dimension, epsilon)
        }
        ModelConfig::Dephasing { dimension, seed } => {
            lattice_model(&random_dephasing_model(*dimension, *seed), *dimension, epsilon)
        }
        ModelConfig::RandomAncilla { .. } => {
            let am = build_ancilla(m, epsilon)?;
            let (l0, v) = am.joint_generators()?;
            let d = l0.hdim();
            Ok(BuiltModel {
                l0,
                v,
                symbols: population_symbols(d),
                default_state: Some(OperatorMatrix::unit(d, 0, 0)),
                default_observables: populations(d),
                    })
        }
        ModelConfig::Custom(c) => {
            let symbols = custom_symbols(c)?;
            let (l0, v) = from_spec(&custom_spec(c, &symbols)?, epsilon)?;
            Ok(BuiltModel {
                l0,
                v,
                symbols,
                default_state: None,
                default_observables: Vec::new(),
                    })
        }
    }
}

fn qubit_model(spec: LindbladSpec, epsilon: f64, rho0: OperatorMatrix) -> Result<BuiltModel, CliError> {
    let (l0, v) = from_spec(&spec, epsilon)?;
    Ok(BuiltModel {
        l0,
        v,
        symbols: qubit_symbols(),
        default_state: Some(rho0),
        default_observables: ["up", "sx", "sy", "sz"].iter().map(|s| (s.to_string(), s.to_string())).collect(),
    })
}

fn lattice_model(spec: &LindbladSpec, d: usize, epsilon: f64) -> Result<BuiltModel, CliError> {
    let (l0, v) = from_spec(spec, epsilon)?;
    Ok(BuiltModel {
        l0,
        v,
        symbols: population_symbols(d),
        default_state: Some(OperatorMatrix::unit(d, 0, 0)),
        default_observables: populations(d),
    })
}

/// Ancilla ⊗ system model for the quantum-regression route.
pub fn build_ancilla(m: &ModelConfig, epsilon: f64) -> Result<AncillaModel, CliError> {
    match m {
        ModelConfig::Superradiance { n, g, gamma, omega } => {
            let am = superradiance_ancilla_model(SuperradianceParams::new(*n, *g, *gamma, *omega))?;
            Ok(AncillaModel::new(am.ancilla_l0, am.couplings, am.epsilon * epsilon)?)
        }
        ModelConfig::RandomAncilla {
            ancilla_dim,
            system_dim,
            couplings,
            seed,
        } => {
            let am = random_ancilla_model(*ancilla_dim, *system_dim, *couplings, *seed);
            Ok(AncillaModel::new(am.ancilla_l0, am.couplings, epsilon)?)
        }
        ModelConfig::Custom(c) if !c.couplings.is_empty() => {
            let symbols = custom_symbols(c)?;
            let spec = custom_spec(c, &symbols)?;
            spec.validate()?;
            let (l0, _) = lindblad_superop(&spec)?;
            let mut pairs = Vec::with_capacity(c.couplings.len());
            for cp in &c.couplings {
                pairs.push((
                    parse_operator_expr(&cp.ancilla, &symbols)?,
                    parse_operator_expr(&cp.system, &symbols)?,
                ));
            }
            Ok(AncillaModel::new(l0, pairs, epsilon)?)
        }
        _ => Err(invalid(
            "ancilla-qrt needs a superradiance, random-ancilla or custom model with couplings",
        )),
    }
}

/// Evaluates an expression that must be Hermitian and of dimension `d`.
pub fn hermitian_operator(name: &str, expr: &str, symbols: &SymbolTable, d: usize) -> Result<OperatorMatrix, CliError> {
    let op = parse_operator_expr(expr, symbols)?;
    if op.dim() != d {
        return Err(invalid(format!("`{name}` has dimension {}, model has {d}", op.dim())));
    }
    if !op.is_hermitian(1e-12 * op.max_abs().max(1.0)) {
        return Err(invalid(format!("`{name}` is not Hermitian")));
    }
    Ok(op)
}

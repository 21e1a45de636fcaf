//! One function per task; each returns the tables to write.

use faer::{c64, Mat};
use lsw_core::ancilla::{close_operator_set, coefficient_matrix, lindblad_decomposition};
use lsw_core::dynamics::{evolve_with, uniform_times, EvolveOptions};
use lsw_core::linalg::loglog_slope;
use lsw_core::models::{emission_comparison, emission_generators, emission_rate, superradiance_model, SuperradianceParams};
use lsw_core::spectral::{check_perturbative_limit, decompose};
use lsw_core::superop::{generator_diagnostics, SuperOp};
use lsw_core::sw::{correction_terms, decoupling_residual, generator_terms, reduced_term};
use lsw_core::{Error, OperatorMatrix};

use crate::config::{build_ancilla, build_model, hermitian_operator, BuiltModel, ModelConfig, Run, Task};
use crate::error::CliError;
use crate::output::{num, Table};

pub const DEFAULT_SCAN: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const COMPARE_POINTS: usize = 401;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Worker count: available parallelism capped by `LSW_THREADS`.
pub fn workers() -> Result<usize, CliError> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("LSW_THREADS") {
        Err(_) => Ok(available),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n.min(available)),
            _ => Err(invalid(format!("LSW_THREADS must be a positive integer, got `{s}`"))),
        },
    }
}

/// Order-preserving map over `items` on up to `workers` scoped threads.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

pub fn run(run: &Run) -> Result<Vec<Table>, CliError> {
    let threads = workers()?;
    match run.task {
        Task::Spectrum => spectrum(run, &model(run)?),
        Task::Effective => effective(run, &model(run)?),
        Task::Evolve => evolve(run, &model(run)?),
        Task::Compare => compare(run),
        Task::AncillaQrt => ancilla_qrt(run),
        Task::DecouplingScan => decoupling_scan(run, &model(run)?, threads),
    }
}

fn model(run: &Run) -> Result<BuiltModel, CliError> {
    build_model(&run.config.model, run.epsilon)
}

fn spectrum(run: &Run, m: &BuiltModel) -> Result<Vec<Table>, CliError> {
    let sd = decompose(&m.l0, run.config.tolerances.zero_tol)?;
    let report = check_perturbative_limit(&sd, &m.v, run.epsilon);
    let mut t = Table::new(
        "spectrum",
        &["index", "re", "im", "class", "gap", "v_norm", "epsilon", "perturbative"],
    );
    let slow = sd.slow_indices();
    for (k, z) in sd.eigenvalues().iter().enumerate() {
        t.push(vec![
            k.to_string(),
            num(z.re),
            num(z.im),
            if slow.contains(&k) { "slow" } else { "fast" }.into(),
            num(report.gap),
            num(report.norm),
            num(run.epsilon),
            report.ok.to_string(),
        ]);
    }
    Ok(vec![t])
}

fn effective(run: &Run, m: &BuiltModel) -> Result<Vec<Table>, CliError> {
    let sd = decompose(&m.l0, run.config.tolerances.zero_tol)?;
    let gen = generator_terms(&sd, &m.v, run.order)?;
    let series = correction_terms(&gen, &sd, run.epsilon)?;
    // system-space form when the slow space factorizes, slow coordinates otherwise
    let reduced = match reduced_term(&series, &sd, 1) {
        Ok(_) => true,
        Err(Error::NonProductSlowSpace) => false,
        Err(e) => return Err(e.into()),
    };
    let mut tables = Vec::new();
    let mut diag = Table::new(
        "effective_diagnostics",
        &[
            "order",
            "representation",
            "dimension",
            "trace_error",
            "hermiticity_error",
            "conditional_eigmin",
        ],
    );
    let mut cumulative: Option<Mat<c64>> = None;
    for n in 1..=run.order {
        let term = if reduced {
            reduced_term(&series, &sd, n)?.generator.into_dense()
        } else {
            series.leff_term(n)?.to_owned()
        };
        let scaled = faer::Scale(c64::new(run.epsilon.powi(n as i32), 0.0)) * &term;
        let sum = match cumulative.take() {
            Some(acc) => acc + &scaled,
            None => scaled,
        };
        tables.push(Table::complex_matrix(format!("effective_order{n}"), term.as_ref()));
        let (repr, checks) = if reduced {
            let d = (sum.nrows() as f64).sqrt().round() as usize;
            let g = SuperOp::from_dense(d, sum.clone())?;
            ("system", Some(generator_diagnostics(&g)))
        } else {
            ("slow", None)
        };
        diag.push(vec![
            n.to_string(),
            repr.into(),
            sum.nrows().to_string(),
            num(checks.map_or(f64::NAN, |c| c.trace_error)),
            num(checks.map_or(f64::NAN, |c| c.hermiticity_error)),
            num(checks.map_or(f64::NAN, |c| c.conditional_eigmin)),
        ]);
        cumulative = Some(sum);
    }
    tables.push(diag);
    Ok(tables)
}

fn times(run: &Run) -> Result<Vec<f64>, CliError> {
    let t = run
        .config
        .times
        .ok_or_else(|| invalid(format!("task `{}` needs a [times] table", run.task.name())))?;
    Ok(uniform_times(t.t_max, t.n_points - 1))
}

fn initial_state(run: &Run, m: &BuiltModel) -> Result<OperatorMatrix, CliError> {
    let rho = match (&run.config.initial_state, &m.default_state) {
        (Some(expr), _) => hermitian_operator("initial_state", expr, &m.symbols, m.hdim())?,
        (None, Some(rho)) => rho.clone(),
        (None, None) => return Err(invalid("this model needs an `initial_state` expression")),
    };
    if (rho.trace().re - 1.0).abs() > 1e-10 {
        return Err(invalid(format!("initial state has trace {}", rho.trace().re)));
    }
    let eigmin = rho.min_eigenvalue();
    if eigmin < -1e-10 {
        return Err(invalid(format!("initial state has eigenvalue {eigmin:.3e}")));
    }
    Ok(rho)
}

fn evolve(run: &Run, m: &BuiltModel) -> Result<Vec<Table>, CliError> {
    let times = times(run)?;
    let rho = initial_state(run, m)?;
    let requested: Vec<(String, String)> = if run.config.observables.is_empty() {
        m.default_observables.clone()
    } else {
        run.config.observables.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    if requested.is_empty() {
        return Err(invalid("no [observables] requested"));
    }
    let mut ops = Vec::with_capacity(requested.len());
    for (name, expr) in &requested {
        ops.push(hermitian_operator(name, expr, &m.symbols, m.hdim())?);
    }
    let g = m.l0.try_add(&m.v.scale(c64::new(run.epsilon, 0.0)))?;
    let tol = run.config.tolerances;
    let opts = EvolveOptions {
        dense_threshold: tol.dense_threshold,
        rtol: tol.rtol,
        atol: tol.atol,
    };
    let traj = evolve_with(&g, &rho, &times, &opts)?;
    let mut header = vec!["time".to_string()];
    header.extend(requested.iter().map(|(k, _)| k.clone()));
    let mut t = Table::with_header("evolve", header);
    let columns: Vec<Vec<c64>> = ops.iter().map(|op| traj.expectation(op)).collect();
    for (k, time) in times.iter().enumerate() {
        let mut row = vec![num(*time)];
        row.extend(columns.iter().map(|c| num(c[k].re)));
        t.push(row);
    }
    Ok(vec![t])
}

fn compare(run: &Run) -> Result<Vec<Table>, CliError> {
    let ModelConfig::Superradiance { n, g, gamma, omega } = run.config.model else {
        return Err(invalid("compare needs the superradiance model"));
    };
    let m = superradiance_model(SuperradianceParams::new(n, g * run.epsilon, gamma, omega))?;
    let gens = emission_generators(&m)?;
    let times = match run.config.times {
        Some(_) => times(run)?,
        None => {
            let rate = emission_rate(&m, &gens.second)?;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(invalid("no emission at this coupling; give [times] explicitly"));
            }
            uniform_times(6.0 / rate, COMPARE_POINTS - 1)
        }
    };
    let c = emission_comparison(&m, &gens, &times)?;
    let mut t = Table::new(
        "compare",
        &["time", "intensity_exact", "intensity_order2", "intensity_order2plus3"],
    );
    for k in 0..c.times.len() {
        t.push(vec![num(c.times[k]), num(c.exact[k]), num(c.second[k]), num(c.third[k])]);
    }
    Ok(vec![t])
}

fn ancilla_qrt(run: &Run) -> Result<Vec<Table>, CliError> {
    if run.order > 2 {
        return Err(invalid(format!("ancilla-qrt supports orders 1 and 2, got {}", run.order)));
    }
    let am = build_ancilla(&run.config.model, run.epsilon)?;
    let eps = am.epsilon;
    let seeds = am.ancilla_ops();
    let system = am.system_ops();
    let bs = close_operator_set(&am.ancilla_l0, &seeds)?;
    let cm = coefficient_matrix(&bs)?;
    let form = lindblad_decomposition(&cm, &system)?;
    // ε Σ⟨A_α⟩ S_α, then ε² times the second-order part
    let mut h = OperatorMatrix::zeros(am.system_dim());
    for (a, s) in seeds.iter().zip(&system) {
        h = &h + &s.scale(a.expectation(&bs.steady_state) * eps);
    }
    let second = if run.order == 2 { eps * eps } else { 0.0 };
    let h = (&h + &form.hamiltonian.scale_re(second)).hermitized();

    let mut rates = Table::new("qrt_rates", &["jump", "rate"]);
    let mut jumps = Table::new("qrt_jumps", &["jump", "row", "col", "re", "im"]);
    for (k, (rate, op)) in form.jumps.iter().enumerate() {
        rates.push(vec![k.to_string(), num(second * rate)]);
        for i in 0..op.dim() {
            for j in 0..op.dim() {
                let z = op.get(i, j);
                jumps.push(vec![k.to_string(), i.to_string(), j.to_string(), num(z.re), num(z.im)]);
            }
        }
    }
    Ok(vec![
        Table::complex_matrix("qrt_coefficients", cm.a.as_ref()),
        Table::complex_matrix("qrt_bloch", bs.m.as_ref()),
        rates,
        jumps,
        Table::complex_matrix("qrt_hamiltonian", h.mat()),
    ])
}

fn decoupling_scan(run: &Run, m: &BuiltModel, threads: usize) -> Result<Vec<Table>, CliError> {
    let eps: Vec<f64> = run
        .config
        .scan
        .as_ref()
        .map_or(DEFAULT_SCAN.to_vec(), |s| s.epsilons.clone());
    let sd = decompose(&m.l0, run.config.tolerances.zero_tol)?;
    let gen = generator_terms(&sd, &m.v, run.order)?;
    let rows = parallel_map(&eps, threads, |&e| {
        (1..=run.order)
            .map(|n| decoupling_residual(&sd, &m.v, &gen, e, n))
            .collect::<Result<Vec<f64>, _>>()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["epsilon".to_string()];
    header.extend((1..=run.order).map(|n| format!("residual_order{n}")));
    let mut table = Table::with_header("decoupling", header);
    for (e, r) in eps.iter().zip(&rows) {
        let mut row = vec![num(*e)];
        row.extend(r.iter().map(|x| num(*x)));
        table.push(row);
    }
    let mut slopes = Table::new("decoupling_slopes", &["order", "slope", "expected"]);
    for n in 1..=run.order {
        let ys: Vec<f64> = rows.iter().map(|r| r[n - 1]).collect();
        slopes.push(vec![n.to_string(), num(loglog_slope(&eps, &ys)), num(n as f64 + 1.0)]);
    }
    Ok(vec![table, slopes])
}

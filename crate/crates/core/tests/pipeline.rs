use faer::c64;
use lsw_core::ancilla::{effective_master_equation_2, lindblad_decomposition};
use lsw_core::dynamics::{evolve, uniform_times};
use lsw_core::models::random_ancilla_model;
use lsw_core::spectral::{decompose, DEFAULT_ZERO_TOL};
use lsw_core::superop::generator_diagnostics;
use lsw_core::sw::{correction_terms, generator_terms, reduced_effective};
use lsw_core::{tensor, OperatorMatrix};

fn trace_out_ancilla(rho: &OperatorMatrix, da: usize, ds: usize) -> OperatorMatrix {
    OperatorMatrix::from_fn(ds, |s, t| (0..da).map(|a| rho.get(a * ds + s, a * ds + t)).sum::<c64>())
}

/// Worst system-state error of the order-`order` reduced dynamics against the
/// exact joint dynamics traced over the ancilla.
fn reduced_dynamics_error(epsilon: f64, order: usize) -> f64 {
    let am = random_ancilla_model(2, 2, 2, 3);
    let (l0, v) = am.joint_generators().unwrap();
    let sd = decompose(&l0, DEFAULT_ZERO_TOL).unwrap();
    let series = correction_terms(&generator_terms(&sd, &v, order).unwrap(), &sd, epsilon).unwrap();
    let red = reduced_effective(&series, &sd, order).unwrap();

    let mu0 = OperatorMatrix::unit(2, 0, 0);
    let joint0 = tensor(&red.ancilla_state, &mu0);
    let full = l0.try_add(&v.scale(c64::new(epsilon, 0.0))).unwrap();
    // long enough for second-order effects to build up
    let times = uniform_times(1.0 / (epsilon * epsilon), 20);
    let exact = evolve(&full, &joint0, &times).unwrap();
    let approx = evolve(&red.generator, &mu0, &times).unwrap();
    (0..times.len())
        .map(|k| trace_out_ancilla(&exact.state(k), 2, 2).max_abs_diff(&approx.state(k)))
        .fold(0.0, f64::max)
}

#[test]
fn reduced_dynamics_improves_with_order() {
    let e1 = reduced_dynamics_error(0.05, 1);
    let e2 = reduced_dynamics_error(0.05, 2);
    assert!(e2 < e1, "order 1 {e1:.3e}, order 2 {e2:.3e}");
    assert!(e2 < 0.05, "{e2:.3e}");
}

#[test]
fn reduced_dynamics_error_shrinks_with_epsilon() {
    let a = reduced_dynamics_error(0.04, 2);
    let b = reduced_dynamics_error(0.02, 2);
    assert!(b < 0.75 * a, "{a:.3e} -> {b:.3e}");
}

#[test]
fn second_order_is_a_lindblad_generator() {
    for seed in 0..5 {
        let am = random_ancilla_model(3, 2, 2, seed);
        let eff = effective_master_equation_2(&am).unwrap();
        let diag = generator_diagnostics(&eff.second);
        assert!(diag.trace_error < 1e-10);
        assert!(diag.hermiticity_error < 1e-10);
        assert!(diag.conditional_eigmin > -1e-10, "seed {seed}: {diag:?}");

        let form = lindblad_decomposition(&eff.coefficients, &am.system_ops()).unwrap();
        assert!(form.generator().unwrap().max_abs_diff(&eff.second) < 1e-9);
    }
}

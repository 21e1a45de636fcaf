//! Time evolution under a fixed generator and derived observables.

use std::collections::HashMap;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg::{self, re, ZERO};
use crate::operator::OperatorMatrix;
use crate::superop::{devectorize, vectorize, SuperOp};

pub const DENSE_THRESHOLD: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Largest superoperator dimension `d²` propagated with dense exponentials.
    pub dense_threshold: usize,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dense_threshold: DENSE_THRESHOLD,
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<c64>>,
    pub hdim: usize,
    pub generator_tag: String,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> OperatorMatrix {
        devectorize(&self.states[k])
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Vec<c64> {
        (0..self.len()).map(|k| op.expectation(&self.state(k))).collect()
    }

    pub fn max_trace_error(&self) -> f64 {
        (0..self.len()).map(|k| (self.state(k).trace() - 1.0).norm()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_error(&self) -> f64 {
        (0..self.len()).map(|k| self.state(k).hermiticity_error()).fold(0.0, f64::max)
    }

    /// Smallest eigenvalue of each stored state's Hermitian part.
    pub fn min_eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.state(k).min_eigenvalue()).collect()
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.generator_tag = tag.into();
        self
    }
}

fn check_inputs(g: &SuperOp, rho0: &OperatorMatrix, times: &[f64]) -> Result<()> {
    if rho0.dim() != g.hdim() {
        return Err(Error::dim("initial state", g.hdim(), rho0.dim()));
    }
    if times.is_empty() || times[0] != 0.0 {
        return Err(Error::InvalidArgument("times must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("times must be finite and strictly increasing".into()));
    }
    if (rho0.trace() - 1.0).norm() > 1e-8 {
        return Err(Error::InvalidArgument(format!("initial state has trace {}", rho0.trace())));
    }
    Ok(())
}

pub fn evolve(g: &SuperOp, rho0: &OperatorMatrix, times: &[f64]) -> Result<Trajectory> {
    evolve_with(g, rho0, times, &EvolveOptions::default())
}

/// Dense exponentials per step for `d² ≤ dense_threshold`, otherwise
/// adaptive Dormand–Prince 5(4) on matrix-vector products.
pub fn evolve_with(g: &SuperOp, rho0: &OperatorMatrix, times: &[f64], opts: &EvolveOptions) -> Result<Trajectory> {
    check_inputs(g, rho0, times)?;
    let x0 = vectorize(rho0);
    let (states, tag) = if g.dim() <= opts.dense_threshold {
        (dense_path(g, x0, times), "dense-expm")
    } else {
        (runge_kutta_path(g, x0, times, opts)?, "dopri5")
    };
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        hdim: g.hdim(),
        generator_tag: tag.into(),
    })
}

fn matvec(m: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

fn dense_path(g: &SuperOp, x0: Vec<c64>, times: &[f64]) -> Vec<Vec<c64>> {
    let gd = g.dense();
    let mut cache: HashMap<u64, Mat<c64>> = HashMap::new();
    let mut states = Vec::with_capacity(times.len());
    let mut x = x0;
    states.push(x.clone());
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        let prop = cache
            .entry(dt.to_bits())
            .or_insert_with(|| linalg::expm(linalg::scaled(gd.as_ref().as_ref(), re(dt)).as_ref()));
        x = matvec(prop, &x);
        states.push(x.clone());
    }
    states
}

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn row_sum_norm(g: &SuperOp) -> f64 {
    let mut rows = vec![0.0; g.dim()];
    for (r, _, v) in g.triplets() {
        rows[r] += v.norm();
    }
    rows.into_iter().fold(0.0, f64::max)
}

fn runge_kutta_path(g: &SuperOp, x0: Vec<c64>, times: &[f64], opts: &EvolveOptions) -> Result<Vec<Vec<c64>>> {
    let n = x0.len();
    let mut states = Vec::with_capacity(times.len());
    states.push(x0.clone());
    let mut x = x0;
    let mut t = 0.0;
    let norm = row_sum_norm(g).max(1e-300);
    let mut h = (0.5 / norm).min(times[times.len() - 1]);
    let mut k: Vec<Vec<c64>> = vec![vec![ZERO; n]; 7];
    g.apply_into(&x, &mut k[0]);
    let mut stage = vec![ZERO; n];
    for &target in &times[1..] {
        while t < target {
            let last = t + h >= target;
            let step = if last { target - t } else { h };
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = x[i];
                    for j in 0..s {
                        if A[s][j] != 0.0 {
                            acc += k[j][i] * (step * A[s][j]);
                        }
                    }
                    stage[i] = acc;
                }
                g.apply_into(&stage, &mut k[s]);
            }
            // stage holds the order-5 solution (FSAL row equals B5)
            let mut err = 0.0f64;
            for i in 0..n {
                let mut e = ZERO;
                for s in 0..7 {
                    e += k[s][i] * (B5[s] - B4[s]);
                }
                let sc = opts.atol + opts.rtol * x[i].norm().max(stage[i].norm());
                err = err.max((e * step).norm() / sc);
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                x.copy_from_slice(&stage);
                k.swap(0, 6);
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !(err <= 1.0) || !last {
                h = step * factor;
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::ToleranceNotMet { time: t });
            }
        }
        states.push(x.clone());
    }
    Ok(states)
}

/// `−Tr(I_z · G ρ(t))`, the rate at which `⟨I_z⟩` is lost.
pub fn emission_intensity(traj: &Trajectory, iz: &OperatorMatrix, g: &SuperOp) -> Result<Vec<f64>> {
    if iz.dim() != traj.hdim {
        return Err(Error::dim("polarization operator", traj.hdim, iz.dim()));
    }
    if g.hdim() != traj.hdim {
        return Err(Error::dim("generator", traj.hdim, g.hdim()));
    }
    Ok(traj
        .states
        .iter()
        .map(|x| -iz.trace_product(&devectorize(&g.apply(x))).re)
        .collect())
}

/// Trapezoidal `∫|a − b| dt` on a shared grid.
pub fn integrated_abs_difference(times: &[f64], a: &[f64], b: &[f64]) -> f64 {
    times
        .windows(2)
        .enumerate()
        .map(|(k, w)| 0.5 * (w[1] - w[0]) * ((a[k] - b[k]).abs() + (a[k + 1] - b[k + 1]).abs()))
        .sum()
}

pub fn uniform_times(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect()
}

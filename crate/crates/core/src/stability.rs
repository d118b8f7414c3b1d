//! Ulam-Hyers verification.
//!
//! A candidate `y` is `ε`-approximate when `‖D^α y - F(t, y, D^α y, I[y])‖ <= ε`.
//! The difference to the exact solution `x` with `x(0) = y(0)` and the same
//! history then satisfies a delayed Gronwall hypothesis with forcing
//! `ε T^α / Γ(α+1)`, which gives `‖y - x‖ <= C ε`.

use alloc::{format, vec, vec::Vec};
#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::fraccore::{caputo_derivative_strided, MemoryEvaluator, MemoryOperatorSpec};
use crate::gronwall::{compute_bound_constant, GronwallCertificate, GronwallInput};
use crate::mlf::gamma_positive;
use crate::solver::{solve_on_grid, ProblemSpec, SolverConfig, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UhVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub epsilon: f64,
    pub c: f64,
    pub max_deviation: f64,
    pub bound: f64,
    pub verdict: UhVerdict,
    pub margin: f64,
}

/// Constant `C` with the certificate it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhConstant {
    pub c: f64,
    pub certificate: GronwallCertificate,
    pub input: GronwallInput,
    /// `1/(1-L)` when `F` reads the derivative, else 1.
    pub implicit_factor: f64,
}

/// Discretization allowance of the L1 residual of a solver trajectory,
/// `10 h^{min(1, 2-α) - 1/2}`.
pub fn residual_slack(alpha: f64, h: f64) -> f64 {
    10.0 * h.powf(1.0f64.min(2.0 - alpha) - 0.5)
}

/// `max_{k>=1} ‖L1(y)_k - F(t_k, y_k, L1(y)_k, I[y]_k)‖∞`.
pub fn measure_residual(y: &Trajectory, problem: &ProblemSpec) -> Result<f64> {
    let n = y.dim;
    if n != problem.dim {
        return Err(Error::Shape(format!("trajectory has dimension {n}, problem {}", problem.dim)));
    }
    let mem = MemoryEvaluator::new(&problem.memory, &y.grid, n)?;
    if mem.delay_steps() != y.grid.delay_steps || y.history_states.len() != (y.grid.delay_steps + 1) * n {
        return Err(Error::Shape("trajectory history does not match the problem delay".into()));
    }
    let d = caputo_derivative_strided(&y.states, n, y.grid.h, problem.alpha)?;
    let mut m = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut eps = 0.0f64;
    for k in 1..y.n_nodes() {
        mem.past(y, k, &mut m)?;
        mem.add_current(y, k, y.state(k), &mut m)?;
        let dk = &d[k * n..(k + 1) * n];
        problem.rhs.eval(y.time(k), y.state(k), dk, &m, &mut f);
        for (a, b) in dk.iter().zip(&f) {
            eps = eps.max((a - b).abs());
        }
    }
    Ok(eps)
}

/// Builds `C = M T^α / Γ(α+1) / (1 - L)` (the last factor only for implicit
/// `F`). `lipschitz` overrides the problem's declared constant.
///
/// The delayed channel enters the Gronwall input as `‖B‖ = L/Γ(α)` with
/// `β = α`. Integral memories are folded into `‖A‖` through their kernel mass
/// on `[0, T]`; a custom inner map of a distributed kernel is assumed
/// 1-Lipschitz in each of its two state arguments.
pub fn uh_constant(problem: &ProblemSpec, lipschitz: Option<f64>) -> Result<UhConstant> {
    let l = lipschitz
        .or(problem.lipschitz)
        .ok_or_else(|| Error::Config("a Lipschitz constant L is required for the Ulam-Hyers constant".into()))?;
    if !(l >= 0.0) || !l.is_finite() {
        return Err(Error::Config(format!("lipschitz constant must be finite and non-negative, got {l}")));
    }
    let alpha = problem.alpha;
    let t = problem.horizon;
    let (l_eff, implicit_factor) = if problem.depends_on_derivative {
        if l >= 1.0 {
            return Err(Error::Config(format!(
                "an implicit right-hand side needs L < 1 for the derivative contraction, got {l}"
            )));
        }
        (l / (1.0 - l), 1.0 / (1.0 - l))
    } else {
        (l, 1.0)
    };
    let g = gamma_positive(alpha);
    let mut norm_a = l_eff / g;
    let mut norm_b = 0.0;
    match &problem.memory {
        MemoryOperatorSpec::None => {}
        MemoryOperatorSpec::DiscreteDelay { .. } => norm_b = l_eff / g,
        MemoryOperatorSpec::FractionalIntegral { beta } => {
            norm_a += l_eff * t.powf(*beta) / gamma_positive(beta + 1.0) / g;
        }
        MemoryOperatorSpec::DistributedKernel { beta, g_sup, phi, tau, .. } => {
            let channels = if phi.is_some() && *tau > 0.0 { 2.0 } else { 1.0 };
            norm_a += l_eff * channels * g_sup * t.powf(*beta) / beta / g;
        }
    }
    let input = GronwallInput { alpha, beta: alpha, norm_a, norm_b, horizon: t, phi_norm: 0.0, f_sup: 1.0 };
    let certificate = compute_bound_constant(&input)?;
    let c = certificate.m * t.powf(alpha) / gamma_positive(alpha + 1.0) * implicit_factor;
    Ok(UhConstant { c, certificate, input, implicit_factor })
}

/// Solves the exact problem from `y(0)` and `y`'s history on `y`'s grid and
/// compares. Returns the report and the exact trajectory.
pub fn verify_uh(y: &Trajectory, problem: &ProblemSpec, cfg: &SolverConfig) -> Result<(StabilityReport, Trajectory)> {
    let exact = exact_from(y, problem, cfg)?;
    let report = verify_uh_against(y, &exact, problem, None)?;
    Ok((report, exact))
}

/// The problem re-anchored at `y(0)` with `y`'s history samples.
pub fn exact_from(y: &Trajectory, problem: &ProblemSpec, cfg: &SolverConfig) -> Result<Trajectory> {
    let mut p = problem.clone();
    p.x0 = y.state(0).to_vec();
    p.history = y.history.clone();
    p.horizon = y.grid.horizon();
    solve_on_grid(&p, &SolverConfig { h: y.grid.h, ..*cfg }, y.grid)
}

/// Compares `y` with a given exact trajectory. `epsilon` overrides the
/// measured residual.
pub fn verify_uh_against(
    y: &Trajectory,
    exact: &Trajectory,
    problem: &ProblemSpec,
    epsilon: Option<f64>,
) -> Result<StabilityReport> {
    if y.n_nodes() != exact.n_nodes() || y.dim != exact.dim {
        return Err(Error::Shape("candidate and exact trajectories differ in shape".into()));
    }
    let epsilon = match epsilon {
        Some(e) => e,
        None => measure_residual(y, problem)?,
    };
    let mut p = problem.clone();
    p.horizon = y.grid.horizon();
    let c = uh_constant(&p, None)?.c;
    let max_deviation = y.states.iter().zip(&exact.states).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let bound = c * epsilon;
    let verdict = if max_deviation <= bound { UhVerdict::Pass } else { UhVerdict::Fail };
    Ok(StabilityReport { epsilon, c, max_deviation, bound, verdict, margin: bound - max_deviation })
}

/// Node-major copy of `traj.states` with `shift(t_k, out)` added.
pub fn shifted_states(traj: &Trajectory, shift: impl Fn(f64, &mut [f64])) -> Vec<f64> {
    let n = traj.dim;
    let mut out = traj.states.clone();
    let mut s = vec![0.0; n];
    for k in 0..traj.n_nodes() {
        shift(traj.time(k), &mut s);
        for i in 0..n {
            out[k * n + i] += s[i];
        }
    }
    out
}

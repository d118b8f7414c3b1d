//! Implicit fractional Adams predictor-corrector.
//!
//! The unknown at node `k` is `d_k = D^α x(t_k)`. The product-trapezoid
//! corrector makes `x_k` affine in `d_k`,
//! `x_k = x0 + Σ_{j<k} a_{j,k} d_j + a_{k,k} d_k`, so a single damped Picard
//! loop on `d_k ← F(t_k, x_k(d_k), d_k, I[x]_k)` resolves both.

use core::fmt;

use alloc::{format, sync::Arc, vec, vec::Vec};
#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::fraccore::{
    check_order, rl_integral_weights, HistoryFunction, MemoryEvaluator, MemoryOperatorSpec, StateSource,
    UniformGrid,
};
use crate::{Error, Result};

/// Right-hand side `F(t, x, d, m)` written into `out`.
pub trait Rhs: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], d: &[f64], m: &[f64], out: &mut [f64]);
}

impl<F> Rhs for F
where
    F: Fn(f64, &[f64], &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], d: &[f64], m: &[f64], out: &mut [f64]) {
        self(t, x, d, m, out)
    }
}

/// An implicit fractional delay system `D^α x = F(t, x, D^α x, I[x])`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub dim: usize,
    pub alpha: f64,
    pub rhs: Arc<dyn Rhs>,
    pub memory: MemoryOperatorSpec,
    pub history: HistoryFunction,
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Declared Lipschitz constant of `F` (shared by all arguments).
    pub lipschitz: Option<f64>,
    /// Whether `F` reads its `d` argument.
    pub depends_on_derivative: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .field("memory", &self.memory)
            .field("history", &self.history)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("lipschitz", &self.lipschitz)
            .field("depends_on_derivative", &self.depends_on_derivative)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Problem with constant history equal to `x0` and no memory.
    pub fn new(alpha: f64, x0: Vec<f64>, horizon: f64, rhs: Arc<dyn Rhs>) -> Self {
        ProblemSpec {
            dim: x0.len(),
            alpha,
            rhs,
            memory: MemoryOperatorSpec::None,
            history: HistoryFunction::Constant(x0.clone()),
            x0,
            horizon,
            lipschitz: None,
            depends_on_derivative: false,
        }
    }

    pub fn with_memory(mut self, memory: MemoryOperatorSpec) -> Self {
        self.memory = memory;
        self
    }

    pub fn with_history(mut self, history: HistoryFunction) -> Self {
        self.history = history;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> Self {
        self.lipschitz = Some(l);
        self
    }

    pub fn implicit(mut self) -> Self {
        self.depends_on_derivative = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.x0.len() != self.dim || self.history.dim() != self.dim {
            return Err(Error::Shape(format!(
                "dimension {} does not match x0 ({}) or history ({})",
                self.dim,
                self.x0.len(),
                self.history.dim()
            )));
        }
        check_order("alpha", self.alpha)?;
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidProblem(format!("lipschitz constant must be positive, got {l}")));
            }
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("x0 is not finite".into()));
        }
        self.memory.validate()?;
        self.history.validate()?;
        let mut h0 = vec![0.0; self.dim];
        self.history.eval(0.0, &mut h0);
        for (a, b) in h0.iter().zip(&self.x0) {
            if (a - b).abs() > 1e-12 {
                return Err(Error::InvalidProblem(format!("history at 0 ({a}) differs from x0 ({b})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub h: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
    pub damping: f64,
}

impl SolverConfig {
    pub fn new(h: f64) -> Self {
        SolverConfig { h, implicit_tol: 1e-10, implicit_max_iter: 100, damping: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidProblem(format!("h must be positive, got {}", self.h)));
        }
        if !(self.implicit_tol > 0.0) {
            return Err(Error::InvalidProblem(format!("implicit_tol must be positive, got {}", self.implicit_tol)));
        }
        if self.implicit_max_iter < 1 {
            return Err(Error::InvalidProblem("implicit_max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidProblem(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Sampled solution with its stored derivative values and history segment.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: UniformGrid,
    pub dim: usize,
    /// Node-major states, `(n_steps + 1) * dim`.
    pub states: Vec<f64>,
    /// Node-major derivative values `d_k`.
    pub derivs: Vec<f64>,
    pub inner_iters: Vec<u32>,
    pub history: HistoryFunction,
    /// History sampled on the `delay_steps + 1` nodes of `[-τ, 0]`.
    pub history_states: Vec<f64>,
}

impl PartialEq for Trajectory {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.dim == other.dim
            && self.states == other.states
            && self.derivs == other.derivs
            && self.inner_iters == other.inner_iters
            && self.history_states == other.history_states
    }
}

impl Trajectory {
    pub fn n_nodes(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(k)
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn deriv(&self, k: usize) -> &[f64] {
        &self.derivs[k * self.dim..(k + 1) * self.dim]
    }

    /// Component `i` over all non-negative nodes.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().skip(i).step_by(self.dim).copied().collect()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.n_nodes() - 1)
    }
}

impl StateSource for Trajectory {
    fn dim(&self) -> usize {
        self.dim
    }

    fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    fn populated(&self) -> usize {
        self.states.len() / self.dim
    }

    fn state_at(&self, idx: isize) -> Result<&[f64]> {
        let n = self.dim;
        if idx >= 0 {
            let i = idx as usize;
            if i >= self.populated() {
                return Err(Error::Shape(format!("node {i} is not populated")));
            }
            Ok(&self.states[i * n..(i + 1) * n])
        } else {
            let m = (self.history_states.len() / n) as isize - 1;
            if idx < -m {
                return Err(Error::HistoryUnderflow { index: idx });
            }
            let i = (m + idx) as usize;
            Ok(&self.history_states[i * n..(i + 1) * n])
        }
    }
}

/// Integrates `problem` on the grid obtained by aligning `cfg.h` to its delay.
pub fn solve(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<Trajectory> {
    problem.validate()?;
    cfg.validate()?;
    let grid = UniformGrid::aligned(cfg.h, problem.horizon, problem.memory.delay())?.grid;
    solve_on_grid(problem, cfg, grid)
}

/// Integrates `problem` on a given grid; the grid's `delay_steps` must match
/// the memory operator's delay.
pub fn solve_on_grid(problem: &ProblemSpec, cfg: &SolverConfig, grid: UniformGrid) -> Result<Trajectory> {
    problem.validate()?;
    cfg.validate()?;
    let n = problem.dim;
    let alpha = problem.alpha;
    let mem = MemoryEvaluator::new(&problem.memory, &grid, n)?;
    if mem.delay_steps() != grid.delay_steps {
        return Err(Error::Shape(format!(
            "grid has {} delay steps, memory operator needs {}",
            grid.delay_steps,
            mem.delay_steps()
        )));
    }
    let weights = rl_integral_weights(alpha, grid.n_steps, grid.h)?;
    let classical = alpha == 1.0;
    let nodes = grid.n_steps + 1;

    let mut traj = Trajectory {
        grid,
        dim: n,
        states: Vec::with_capacity(nodes * n),
        derivs: Vec::with_capacity(nodes * n),
        inner_iters: Vec::with_capacity(nodes),
        history: problem.history.clone(),
        history_states: problem.history.sample(&grid),
    };
    let hn = traj.history_states.len();
    traj.history_states[hn - n..].copy_from_slice(&problem.x0);
    traj.states.extend_from_slice(&problem.x0);

    let mut ctx = StepContext {
        rhs: problem.rhs.as_ref(),
        mem: &mem,
        cfg,
        base: problem.x0.clone(),
        w: 0.0,
        m_past: vec![0.0; n],
        m: vec![0.0; n],
        x: vec![0.0; n],
        f: vec![0.0; n],
        d: vec![0.0; n],
    };

    // node 0: x is fixed at x0, only d_0 is unknown
    mem.past(&traj, 0, &mut ctx.m_past)?;
    let x0 = problem.x0.clone();
    let zero = vec![0.0; n];
    let iters = ctx.inner_solve(&traj, 0, 0.0, &x0, &zero)?;
    traj.derivs.extend_from_slice(&ctx.d);
    traj.inner_iters.push(iters as u32);

    let mut pred = vec![0.0; n];
    for k in 1..nodes {
        let t = grid.time(k);
        if classical {
            let xp = traj.state(k - 1);
            let dp = traj.deriv(k - 1);
            for i in 0..n {
                ctx.base[i] = xp[i] + 0.5 * grid.h * dp[i];
                pred[i] = xp[i] + grid.h * dp[i];
            }
        } else {
            ctx.base.copy_from_slice(&problem.x0);
            pred.copy_from_slice(&problem.x0);
            for j in 0..k {
                let a = weights.trapezoid(j, k);
                let b = weights.rectangle(j, k);
                let dj = &traj.derivs[j * n..(j + 1) * n];
                for i in 0..n {
                    ctx.base[i] += a * dj[i];
                    pred[i] += b * dj[i];
                }
            }
        }
        ctx.w = weights.diagonal();
        mem.past(&traj, k, &mut ctx.m_past)?;
        let d_prev = traj.deriv(k - 1).to_vec();
        let iters = ctx.inner_solve(&traj, k, t, &pred, &d_prev)?;
        traj.states.extend_from_slice(&ctx.x);
        traj.derivs.extend_from_slice(&ctx.d);
        traj.inner_iters.push(iters as u32);
    }
    Ok(traj)
}

struct StepContext<'a> {
    rhs: &'a dyn Rhs,
    mem: &'a MemoryEvaluator,
    cfg: &'a SolverConfig,
    base: Vec<f64>,
    w: f64,
    m_past: Vec<f64>,
    m: Vec<f64>,
    x: Vec<f64>,
    f: Vec<f64>,
    d: Vec<f64>,
}

impl StepContext<'_> {
    fn memory_at(&mut self, traj: &Trajectory, k: usize, x: &[f64]) -> Result<()> {
        self.m.copy_from_slice(&self.m_past);
        self.mem.add_current(traj, k, x, &mut self.m)
    }

    /// Damped Picard loop for `d_k`; leaves the accepted pair in `self.x`,
    /// `self.d` and returns the number of right-hand-side evaluations.
    fn inner_solve(&mut self, traj: &Trajectory, k: usize, t: f64, pred: &[f64], d_prev: &[f64]) -> Result<usize> {
        let omega = self.cfg.damping;
        // seed from the predictor
        self.memory_at(traj, k, pred)?;
        self.rhs.eval(t, pred, d_prev, &self.m, &mut self.d);
        if self.d.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: k });
        }
        let mut prev_res = f64::INFINITY;
        let mut growth = 0;
        let mut res = f64::INFINITY;
        for it in 1..=self.cfg.implicit_max_iter {
            for i in 0..self.x.len() {
                self.x[i] = self.base[i] + self.w * self.d[i];
            }
            let x = self.x.clone();
            self.memory_at(traj, k, &x)?;
            self.rhs.eval(t, &self.x, &self.d, &self.m, &mut self.f);
            if self.f.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { step: k });
            }
            res = self.f.iter().zip(&self.d).fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()));
            if res <= self.cfg.implicit_tol {
                return Ok(it);
            }
            if res > prev_res {
                growth += 1;
                if growth >= 5 {
                    return Err(Error::NonConvergence { step: k, residual: res, iterations: it });
                }
            } else {
                growth = 0;
            }
            prev_res = res;
            for (d, f) in self.d.iter_mut().zip(&self.f) {
                *d = (1.0 - omega) * *d + omega * f;
            }
        }
        Err(Error::NonConvergence { step: k, residual: res, iterations: self.cfg.implicit_max_iter })
    }
}

/// `sup_k e^{-ρ t_k} ‖a_k - b_k‖∞` over the shared grid.
pub fn weighted_norm_distance(a: &Trajectory, b: &Trajectory, rho: f64) -> Result<f64> {
    if a.dim != b.dim || a.n_nodes() != b.n_nodes() || (a.grid.h - b.grid.h).abs() > 1e-15 * a.grid.h {
        return Err(Error::Shape("trajectories live on different grids".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::Domain(format!("rho must be non-negative, got {rho}")));
    }
    let mut sup = 0.0f64;
    for k in 0..a.n_nodes() {
        let diff = a.state(k).iter().zip(b.state(k)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        sup = sup.max((-rho * a.time(k)).exp() * diff);
    }
    Ok(sup)
}

/// Largest `‖d_k - F(t_k, x_k, d_k, m_k)‖∞` over the trajectory.
pub fn self_consistency(traj: &Trajectory, problem: &ProblemSpec) -> Result<f64> {
    let n = traj.dim;
    let mem = MemoryEvaluator::new(&problem.memory, &traj.grid, n)?;
    let mut m = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut worst = 0.0f64;
    for k in 0..traj.n_nodes() {
        mem.past(traj, k, &mut m)?;
        mem.add_current(traj, k, traj.state(k), &mut m)?;
        problem.rhs.eval(traj.time(k), traj.state(k), traj.deriv(k), &m, &mut f);
        for (a, b) in f.iter().zip(traj.deriv(k)) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlf::ml_alpha;

    fn relaxation(alpha: f64, horizon: f64) -> ProblemSpec {
        ProblemSpec::new(alpha, vec![1.0], horizon, Arc::new(|_t: f64, x: &[f64], _d: &[f64], _m: &[f64], out: &mut [f64]| {
            out[0] = -x[0]
        }))
    }

    #[test]
    fn zero_dynamics_stay_constant() {
        let p = ProblemSpec::new(0.6, vec![2.5, -1.0], 1.0, Arc::new(|_t: f64, _x: &[f64], _d: &[f64], _m: &[f64], out: &mut [f64]| {
            out.iter_mut().for_each(|o| *o = 0.0)
        }));
        let tr = solve(&p, &SolverConfig::new(0.01)).unwrap();
        assert!(tr.states.chunks(2).all(|s| s == [2.5, -1.0]));
        assert!(tr.derivs.iter().all(|d| *d == 0.0));
        assert!(tr.inner_iters.iter().all(|&i| i == 1));
    }

    #[test]
    fn classical_exponential_decay() {
        let tr = solve(&relaxation(1.0, 1.0), &SolverConfig::new(1e-3)).unwrap();
        let x1 = tr.last_state()[0];
        assert!((x1 - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn fractional_relaxation_matches_mittag_leffler() {
        let tr = solve(&relaxation(0.5, 1.0), &SolverConfig::new(1e-3)).unwrap();
        for &t in &[0.5, 1.0] {
            let k = tr.grid.index_of(t);
            let want = ml_alpha(0.5, -t.sqrt()).unwrap();
            assert!((tr.state(k)[0] - want).abs() < 1e-2);
        }
    }

    #[test]
    fn implicit_linear_fixed_point() {
        // F = 0.5 d + x has the fixed point d = 2x
        let p = ProblemSpec::new(0.7, vec![1.0], 0.5, Arc::new(|_t: f64, x: &[f64], d: &[f64], _m: &[f64], out: &mut [f64]| {
            out[0] = 0.5 * d[0] + x[0]
        }))
        .implicit();
        let cfg = SolverConfig::new(0.01);
        let tr = solve(&p, &cfg).unwrap();
        for k in 0..tr.n_nodes() {
            assert!((tr.deriv(k)[0] - 2.0 * tr.state(k)[0]).abs() < 4.0 * cfg.implicit_tol);
        }
        assert!(self_consistency(&tr, &p).unwrap() <= cfg.implicit_tol);
    }

    #[test]
    fn expanding_derivative_coupling_is_reported() {
        let p = ProblemSpec::new(0.7, vec![1.0], 0.5, Arc::new(|_t: f64, x: &[f64], d: &[f64], _m: &[f64], out: &mut [f64]| {
            out[0] = 1.5 * d[0] + x[0]
        }))
        .implicit();
        let cfg = SolverConfig { damping: 0.5, ..SolverConfig::new(0.01) };
        assert!(matches!(solve(&p, &cfg), Err(Error::NonConvergence { step: 0, .. })));
    }

    #[test]
    fn derivative_free_rhs_takes_one_iteration() {
        let p = ProblemSpec::new(0.4, vec![0.0], 1.0, Arc::new(|t: f64, _x: &[f64], _d: &[f64], _m: &[f64], out: &mut [f64]| {
            out[0] = t.cos()
        }));
        let tr = solve(&p, &SolverConfig::new(0.01)).unwrap();
        assert!(tr.inner_iters.iter().all(|&i| i == 1));
    }

    #[test]
    fn blow_up_reports_step() {
        let p = ProblemSpec::new(1.0, vec![1.0], 10.0, Arc::new(|_t: f64, x: &[f64], _d: &[f64], _m: &[f64], out: &mut [f64]| {
            out[0] = x[0].powi(3) * 1e6
        }));
        match solve(&p, &SolverConfig::new(0.1)) {
            Err(Error::BlowUp { step }) | Err(Error::NonConvergence { step, .. }) => assert!(step > 0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn history_is_reproduced() {
        let hist = HistoryFunction::Polynomial(vec![vec![1.0, 0.5, 0.25]]);
        let p = ProblemSpec::new(0.8, vec![1.0], 2.0, Arc::new(|_t: f64, _x: &[f64], _d: &[f64], m: &[f64], out: &mut [f64]| {
            out[0] = -m[0]
        }))
        .with_memory(MemoryOperatorSpec::DiscreteDelay { tau: 1.0 })
        .with_history(hist.clone());
        let tr = solve(&p, &SolverConfig::new(0.05)).unwrap();
        let m = tr.grid.delay_steps;
        assert_eq!(m, 20);
        let mut v = [0.0];
        for i in 0..=m {
            hist.eval(tr.grid.time_signed(i as isize - m as isize), &mut v);
            assert_eq!(tr.history_states[i], v[0]);
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let base = solve(&relaxation(0.5, 1.0), &SolverConfig::new(0.01)).unwrap();
        assert_eq!(weighted_norm_distance(&base, &base, 1.0).unwrap(), 0.0);
        let mut shifted = base.clone();
        shifted.states.iter_mut().for_each(|x| *x += 0.25);
        assert!((weighted_norm_distance(&base, &shifted, 0.0).unwrap() - 0.25).abs() < 1e-14);
        let rho = 1.3;
        let mut grown = base.clone();
        for k in 0..grown.n_nodes() {
            grown.states[k] += (rho * base.time(k)).exp();
        }
        assert!((weighted_norm_distance(&base, &grown, rho).unwrap() - 1.0).abs() < 1e-12);
        let other = solve(&relaxation(0.5, 1.0), &SolverConfig::new(0.02)).unwrap();
        assert!(matches!(weighted_norm_distance(&base, &other, 0.0), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_inconsistent_history() {
        let p = relaxation(0.5, 1.0).with_history(HistoryFunction::Constant(vec![2.0]));
        assert!(matches!(solve(&p, &SolverConfig::new(0.1)), Err(Error::InvalidProblem(_))));
    }
}

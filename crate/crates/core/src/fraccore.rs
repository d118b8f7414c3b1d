//! Discretized fractional operators on uniform grids.
//!
//! All quadrature here is product integration: the sampled integrand is
//! interpolated (piecewise constant for the rectangle rule, piecewise linear
//! for the trapezoid rule) and integrated exactly against the weakly singular
//! kernel `(t - s)^{α-1}`.

use core::fmt;

use alloc::{format, sync::Arc, vec, vec::Vec};
#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::mlf::gamma_positive;
use crate::{Error, Result};

/// Uniform grid `t_k = k h`, `k = 0..=n_steps`, starting at zero.
///
/// When a delay `τ` is present it is grid aligned: `τ = delay_steps * h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub h: f64,
    pub n_steps: usize,
    pub delay_steps: usize,
}

/// Result of aligning a requested step to a delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAlignment {
    pub grid: UniformGrid,
    pub requested_h: f64,
    pub adjusted: bool,
}

impl UniformGrid {
    pub fn new(h: f64, n_steps: usize, delay_steps: usize) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidProblem(format!("step h must be positive, got {h}")));
        }
        Ok(UniformGrid { h, n_steps, delay_steps })
    }

    /// Builds a grid covering `[0, horizon]`, shrinking `h_requested` so that
    /// `delay / h` is an integer when a delay is given.
    pub fn aligned(h_requested: f64, horizon: f64, delay: Option<f64>) -> Result<GridAlignment> {
        if !(h_requested > 0.0) || !h_requested.is_finite() {
            return Err(Error::InvalidProblem(format!("step h must be positive, got {h_requested}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon must be positive, got {horizon}")));
        }
        let (h, delay_steps) = match delay {
            Some(tau) if tau > 0.0 => {
                let m = ((tau / h_requested) - 1e-9).ceil().max(1.0) as usize;
                (tau / m as f64, m)
            }
            Some(tau) if tau < 0.0 || tau.is_nan() => {
                return Err(Error::InvalidProblem(format!("delay must be non-negative, got {tau}")));
            }
            _ => (h_requested, 0),
        };
        let n_steps = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
        Ok(GridAlignment {
            grid: UniformGrid { h, n_steps, delay_steps },
            requested_h: h_requested,
            adjusted: h != h_requested,
        })
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    /// Time of a possibly negative node index (history nodes are negative).
    #[inline]
    pub fn time_signed(&self, k: isize) -> f64 {
        k as f64 * self.h
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn delay(&self) -> f64 {
        self.delay_steps as f64 * self.h
    }

    /// Index of the node nearest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let k = (t / self.h).round();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.n_steps)
        }
    }
}

/// Initial function on `[-τ, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum HistoryFunction {
    Constant(Vec<f64>),
    /// `coeffs[i][p]` is the coefficient of `θ^p` in component `i`.
    Polynomial(Vec<Vec<f64>>),
    /// Node-major samples on `m + 1` uniform nodes covering `[-tau, 0]`,
    /// linearly interpolated between nodes.
    Sampled { tau: f64, dim: usize, values: Vec<f64> },
}

impl HistoryFunction {
    pub fn dim(&self) -> usize {
        match self {
            HistoryFunction::Constant(c) => c.len(),
            HistoryFunction::Polynomial(c) => c.len(),
            HistoryFunction::Sampled { dim, .. } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HistoryFunction::Constant(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem("history constant is not finite".into()));
                }
            }
            HistoryFunction::Polynomial(c) => {
                if c.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem("history coefficients are not finite".into()));
                }
            }
            HistoryFunction::Sampled { tau, dim, values } => {
                if *dim == 0 || values.is_empty() || values.len() % dim != 0 {
                    return Err(Error::Shape("sampled history length is not a multiple of its dimension".into()));
                }
                if values.len() / dim > 1 && !(*tau > 0.0) {
                    return Err(Error::InvalidProblem("sampled history needs tau > 0".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem("history samples are not finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the history at `theta ∈ [-τ, 0]` into `out`.
    pub fn eval(&self, theta: f64, out: &mut [f64]) {
        match self {
            HistoryFunction::Constant(c) => out.copy_from_slice(c),
            HistoryFunction::Polynomial(coeffs) => {
                for (o, c) in out.iter_mut().zip(coeffs) {
                    *o = c.iter().rev().fold(0.0, |acc, &p| acc * theta + p);
                }
            }
            HistoryFunction::Sampled { tau, dim, values } => {
                let nodes = values.len() / dim;
                if nodes == 1 {
                    out.copy_from_slice(&values[..*dim]);
                    return;
                }
                let m = (nodes - 1) as f64;
                let pos = ((theta + tau) / tau * m).clamp(0.0, m);
                let i = (pos.floor() as usize).min(nodes - 2);
                let frac = pos - i as f64;
                let a = &values[i * dim..(i + 1) * dim];
                let b = &values[(i + 1) * dim..(i + 2) * dim];
                for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                    *o = if frac == 0.0 { x } else { x + frac * (y - x) };
                }
            }
        }
    }

    /// Samples the history on the `delay_steps + 1` grid nodes of `[-τ, 0]`.
    pub fn sample(&self, grid: &UniformGrid) -> Vec<f64> {
        let n = self.dim();
        let m = grid.delay_steps;
        let mut out = vec![0.0; (m + 1) * n];
        for i in 0..=m {
            let theta = grid.time_signed(i as isize - m as isize);
            self.eval(theta, &mut out[i * n..(i + 1) * n]);
        }
        out
    }
}

/// Coefficient function `g(t, s)` of a distributed kernel.
pub type KernelCoefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Pointwise nonlinearity `φ(s, u(s), u(s - τ))` inside a distributed kernel.
pub trait InnerMap: Send + Sync {
    fn eval(&self, s: f64, u: &[f64], u_delayed: &[f64], out: &mut [f64]);
}

impl<F> InnerMap for F
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, s: f64, u: &[f64], u_delayed: &[f64], out: &mut [f64]) {
        self(s, u, u_delayed, out)
    }
}

/// The memory operator `I[x]` appearing in the right-hand side.
#[derive(Clone, Default)]
pub enum MemoryOperatorSpec {
    #[default]
    None,
    /// `x(t - τ)`.
    DiscreteDelay { tau: f64 },
    /// `∫_0^t (t - s)^{β-1} g(t, s) φ(s, x(s), x(s - τ)) ds` without a Gamma
    /// normalization. `g_sup` is a user-supplied bound on `|g|`; `tau = 0`
    /// means the inner map sees the undelayed state twice. `phi = None` is
    /// the identity in `u`.
    DistributedKernel {
        tau: f64,
        beta: f64,
        g: KernelCoefficient,
        g_sup: f64,
        phi: Option<Arc<dyn InnerMap>>,
    },
    /// Riemann-Liouville integral `I^β x(t)`.
    FractionalIntegral { beta: f64 },
}

impl fmt::Debug for MemoryOperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryOperatorSpec::None => f.write_str("None"),
            MemoryOperatorSpec::DiscreteDelay { tau } => f.debug_struct("DiscreteDelay").field("tau", tau).finish(),
            MemoryOperatorSpec::DistributedKernel { tau, beta, g_sup, phi, .. } => f
                .debug_struct("DistributedKernel")
                .field("tau", tau)
                .field("beta", beta)
                .field("g_sup", g_sup)
                .field("identity_phi", &phi.is_none())
                .finish(),
            MemoryOperatorSpec::FractionalIntegral { beta } => {
                f.debug_struct("FractionalIntegral").field("beta", beta).finish()
            }
        }
    }
}

impl MemoryOperatorSpec {
    /// Delay carried by the operator, if any.
    pub fn delay(&self) -> Option<f64> {
        match self {
            MemoryOperatorSpec::DiscreteDelay { tau } => Some(*tau),
            MemoryOperatorSpec::DistributedKernel { tau, .. } if *tau > 0.0 => Some(*tau),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MemoryOperatorSpec::None => Ok(()),
            MemoryOperatorSpec::DiscreteDelay { tau } => {
                if *tau > 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidProblem(format!("discrete delay needs tau > 0, got {tau}")))
                }
            }
            MemoryOperatorSpec::DistributedKernel { tau, beta, g_sup, .. } => {
                check_order("kernel beta", *beta)?;
                if !(*tau >= 0.0) || !tau.is_finite() {
                    return Err(Error::InvalidProblem(format!("kernel delay must be >= 0, got {tau}")));
                }
                if !(*g_sup >= 0.0) || !g_sup.is_finite() {
                    return Err(Error::InvalidProblem(format!("kernel bound g_sup must be finite, got {g_sup}")));
                }
                Ok(())
            }
            MemoryOperatorSpec::FractionalIntegral { beta } => check_order("fractional integral beta", *beta),
        }
    }
}

pub(crate) fn check_order(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("{name} must lie in (0,1], got {v}")))
    }
}

/// Normalization of product-quadrature weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelNormalization {
    /// `1/Γ(α) ∫ (t-s)^{α-1} f(s) ds`.
    RiemannLiouville,
    /// `∫ (t-s)^{α-1} f(s) ds`.
    Raw,
}

/// Product rectangle and product trapezoid weights for the kernel
/// `(t - s)^{α-1}` on a uniform grid.
///
/// The trapezoid weights are those of the fractional Adams-Moulton corrector:
/// `a_{0,k} = (k-1)^{α+1} - (k-1-α) k^α`,
/// `a_{j,k} = (m+1)^{α+1} - 2 m^{α+1} + (m-1)^{α+1}` with `m = k - j`,
/// `a_{k,k} = 1`, all scaled by `h^α / (α(α+1))`. The rectangle weights are
/// `(m^α - (m-1)^α) h^α / α`.
#[derive(Debug, Clone)]
pub struct RlWeights {
    alpha: f64,
    h: f64,
    scale_trap: f64,
    scale_rect: f64,
    first: Vec<f64>,
    interior: Vec<f64>,
    rect: Vec<f64>,
}

/// Riemann-Liouville weight table for orders in `(0, 1]`.
pub fn rl_integral_weights(alpha: f64, n_steps: usize, h: f64) -> Result<RlWeights> {
    RlWeights::new(alpha, n_steps, h, KernelNormalization::RiemannLiouville)
}

impl RlWeights {
    pub fn new(alpha: f64, n_steps: usize, h: f64, norm: KernelNormalization) -> Result<Self> {
        check_order("order", alpha)?;
        if !(h > 0.0) {
            return Err(Error::InvalidProblem(format!("step h must be positive, got {h}")));
        }
        let ha = h.powf(alpha);
        let (scale_trap, scale_rect) = match norm {
            KernelNormalization::RiemannLiouville => {
                (ha / gamma_positive(alpha + 2.0), ha / gamma_positive(alpha + 1.0))
            }
            KernelNormalization::Raw => (ha / (alpha * (alpha + 1.0)), ha / alpha),
        };
        let len = n_steps + 1;
        let mut first = vec![0.0; len];
        let mut interior = vec![0.0; len];
        let mut rect = vec![0.0; len];
        for m in 1..len {
            first[m] = first_weight(alpha, m as f64);
            interior[m] = second_difference(alpha + 1.0, m as f64);
            rect[m] = first_difference(alpha, m as f64);
        }
        Ok(RlWeights { alpha, h, scale_trap, scale_rect, first, interior, rect })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Largest target index `k` the table supports.
    pub fn max_index(&self) -> usize {
        self.first.len() - 1
    }

    /// Weight of node `j` in the trapezoid rule for the integral up to `t_k`.
    #[inline]
    pub fn trapezoid(&self, j: usize, k: usize) -> f64 {
        if k == 0 || j > k {
            0.0
        } else if j == k {
            self.scale_trap
        } else if j == 0 {
            self.scale_trap * self.first[k]
        } else {
            self.scale_trap * self.interior[k - j]
        }
    }

    /// Weight of node `j < k` in the rectangle rule for the integral up to `t_k`.
    #[inline]
    pub fn rectangle(&self, j: usize, k: usize) -> f64 {
        if j >= k {
            0.0
        } else {
            self.scale_rect * self.rect[k - j]
        }
    }

    /// Weight on the newest node, `a_{k,k}` scaled.
    #[inline]
    pub fn diagonal(&self) -> f64 {
        self.scale_trap
    }

    /// Trapezoid quadrature of scalar samples `f_0..=f_k`.
    pub fn integrate(&self, f: &[f64], k: usize) -> f64 {
        (0..=k).map(|j| self.trapezoid(j, k) * f[j]).sum()
    }

    /// Rectangle quadrature of scalar samples `f_0..f_{k-1}`.
    pub fn integrate_rect(&self, f: &[f64], k: usize) -> f64 {
        (0..k).map(|j| self.rectangle(j, k) * f[j]).sum()
    }
}

/// Generalized binomial coefficient `C(a, j)`.
fn binomial(a: f64, j: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..j {
        c *= (a - i as f64) / (i as f64 + 1.0);
    }
    c
}

const SERIES_FROM: f64 = 16.0;

/// `(m+1)^p - 2 m^p + (m-1)^p`, cancellation free for large `m`.
fn second_difference(p: f64, m: f64) -> f64 {
    if m < SERIES_FROM {
        return (m + 1.0).powf(p) - 2.0 * m.powf(p) + (m - 1.0).powf(p);
    }
    let x2 = 1.0 / (m * m);
    let mut sum = 0.0;
    let mut xp = x2;
    for j in 1..=8 {
        sum += binomial(p, 2 * j) * xp;
        xp *= x2;
    }
    2.0 * m.powf(p) * sum
}

/// `m^a - (m-1)^a`.
fn first_difference(a: f64, m: f64) -> f64 {
    -m.powf(a) * (a * (-1.0 / m).ln_1p()).exp_m1()
}

/// `(k-1)^{α+1} - (k-1-α) k^α`.
fn first_weight(alpha: f64, k: f64) -> f64 {
    if k < SERIES_FROM {
        return (k - 1.0).powf(alpha + 1.0) - (k - 1.0 - alpha) * k.powf(alpha);
    }
    // k^{α+1} Σ_{j≥2} C(α+1, j) (-1/k)^j
    let x = -1.0 / k;
    let mut sum = 0.0;
    let mut xp = x * x;
    for j in 2..=12 {
        sum += binomial(alpha + 1.0, j) * xp;
        xp *= x;
    }
    k.powf(alpha + 1.0) * sum
}

/// L1 weights `b_j = (j+1)^{1-α} - j^{1-α}`, `j = 0..len`.
pub fn l1_weights(alpha: f64, len: usize) -> Vec<f64> {
    (0..len)
        .map(|j| if j == 0 { 1.0 } else { first_difference(1.0 - alpha, j as f64 + 1.0) })
        .collect()
}

/// L1 approximation of the Caputo derivative of scalar samples `x_k = x(k h)`.
///
/// The value at node 0 is the empty sum, zero.
pub fn caputo_derivative_grid(x: &[f64], h: f64, alpha: f64) -> Result<Vec<f64>> {
    caputo_derivative_strided(x, 1, h, alpha)
}

/// L1 Caputo derivative of node-major vector samples with `dim` components.
pub fn caputo_derivative_strided(x: &[f64], dim: usize, h: f64, alpha: f64) -> Result<Vec<f64>> {
    check_order("order", alpha)?;
    if dim == 0 || x.len() % dim != 0 || x.len() / dim < 2 {
        return Err(Error::Shape(format!("caputo derivative needs at least 2 samples, got {}", x.len() / dim.max(1))));
    }
    let nodes = x.len() / dim;
    let b = l1_weights(alpha, nodes);
    let scale = h.powf(-alpha) / gamma_positive(2.0 - alpha);
    let mut out = vec![0.0; x.len()];
    for k in 1..nodes {
        let row = &mut out[k * dim..(k + 1) * dim];
        for j in 0..k {
            let w = b[j];
            let hi = (k - j) * dim;
            let lo = (k - j - 1) * dim;
            for i in 0..dim {
                row[i] += w * (x[hi + i] - x[lo + i]);
            }
        }
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    Ok(out)
}

/// Read access to a state sampled on a grid, including its history nodes.
pub trait StateSource {
    fn dim(&self) -> usize;
    fn grid(&self) -> &UniformGrid;
    /// Number of populated non-negative nodes.
    fn populated(&self) -> usize;
    /// State at node `idx`; negative indices address the history segment.
    fn state_at(&self, idx: isize) -> Result<&[f64]>;
}

/// Evaluates a memory operator against a [`StateSource`], with the newest
/// node optionally replaced by a trial state.
#[derive(Clone)]
pub struct MemoryEvaluator {
    spec: MemoryOperatorSpec,
    weights: Option<RlWeights>,
    delay_steps: usize,
    dim: usize,
}

impl MemoryEvaluator {
    pub fn new(spec: &MemoryOperatorSpec, grid: &UniformGrid, dim: usize) -> Result<Self> {
        spec.validate()?;
        let weights = match spec {
            MemoryOperatorSpec::DistributedKernel { beta, .. } => {
                Some(RlWeights::new(*beta, grid.n_steps, grid.h, KernelNormalization::Raw)?)
            }
            MemoryOperatorSpec::FractionalIntegral { beta } => {
                Some(RlWeights::new(*beta, grid.n_steps, grid.h, KernelNormalization::RiemannLiouville)?)
            }
            _ => None,
        };
        let delay_steps = match spec.delay() {
            Some(tau) => {
                let m = (tau / grid.h).round();
                if (m * grid.h - tau).abs() > 1e-9 * tau.max(1.0) || m < 1.0 {
                    return Err(Error::Shape(format!("delay {tau} is not aligned with step {}", grid.h)));
                }
                m as usize
            }
            None => 0,
        };
        Ok(MemoryEvaluator { spec: spec.clone(), weights, delay_steps, dim })
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    /// Whether the output at node `k` depends on the state at node `k`.
    pub fn depends_on_current(&self) -> bool {
        matches!(self.spec, MemoryOperatorSpec::DistributedKernel { .. } | MemoryOperatorSpec::FractionalIntegral { .. })
    }

    /// Contribution of nodes strictly before `k` (the whole value for a
    /// discrete delay).
    pub fn past<S: StateSource + ?Sized>(&self, src: &S, k: usize, out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|v| *v = 0.0);
        match &self.spec {
            MemoryOperatorSpec::None => Ok(()),
            MemoryOperatorSpec::DiscreteDelay { .. } => {
                let idx = k as isize - self.delay_steps as isize;
                out.copy_from_slice(src.state_at(idx)?);
                Ok(())
            }
            MemoryOperatorSpec::FractionalIntegral { .. } => {
                let w = self.weights.as_ref().expect("weights for fractional integral");
                for j in 0..k {
                    let c = w.trapezoid(j, k);
                    for (o, x) in out.iter_mut().zip(src.state_at(j as isize)?) {
                        *o += c * x;
                    }
                }
                Ok(())
            }
            MemoryOperatorSpec::DistributedKernel { g, phi, .. } => {
                let w = self.weights.as_ref().expect("weights for kernel");
                let t = src.grid().time(k);
                let mut inner = vec![0.0; self.dim];
                for j in 0..k {
                    let s = src.grid().time(j);
                    let u = src.state_at(j as isize)?;
                    let ud = src.state_at(j as isize - self.delay_steps as isize)?;
                    apply_inner(phi.as_deref(), s, u, ud, &mut inner);
                    let c = w.trapezoid(j, k) * g(t, s);
                    for (o, v) in out.iter_mut().zip(&inner) {
                        *o += c * v;
                    }
                }
                Ok(())
            }
        }
    }

    /// Adds the node-`k` contribution for trial state `current`.
    pub fn add_current<S: StateSource + ?Sized>(
        &self,
        src: &S,
        k: usize,
        current: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if k == 0 {
            return Ok(());
        }
        match &self.spec {
            MemoryOperatorSpec::FractionalIntegral { .. } => {
                let c = self.weights.as_ref().expect("weights").diagonal();
                for (o, x) in out.iter_mut().zip(current) {
                    *o += c * x;
                }
                Ok(())
            }
            MemoryOperatorSpec::DistributedKernel { g, phi, .. } => {
                let w = self.weights.as_ref().expect("weights");
                let t = src.grid().time(k);
                let ud = if self.delay_steps == 0 {
                    current
                } else {
                    src.state_at(k as isize - self.delay_steps as isize)?
                };
                let mut inner = vec![0.0; self.dim];
                apply_inner(phi.as_deref(), t, current, ud, &mut inner);
                let c = w.diagonal() * g(t, t);
                for (o, v) in out.iter_mut().zip(&inner) {
                    *o += c * v;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn apply_inner(phi: Option<&dyn InnerMap>, s: f64, u: &[f64], ud: &[f64], out: &mut [f64]) {
    match phi {
        Some(p) => p.eval(s, u, ud, out),
        None => out.copy_from_slice(u),
    }
}

/// Value of the memory operator at node `t_index` of a populated source.
pub fn apply_memory_operator<S: StateSource + ?Sized>(
    spec: &MemoryOperatorSpec,
    src: &S,
    t_index: usize,
) -> Result<Vec<f64>> {
    if t_index >= src.populated() {
        return Err(Error::Shape(format!(
            "memory operator requested at node {t_index}, only {} nodes populated",
            src.populated()
        )));
    }
    let eval = MemoryEvaluator::new(spec, src.grid(), src.dim())?;
    let mut out = vec![0.0; src.dim()];
    eval.past(src, t_index, &mut out)?;
    let current = src.state_at(t_index as isize)?;
    eval.add_current(src, t_index, current, &mut out)?;
    Ok(out)
}

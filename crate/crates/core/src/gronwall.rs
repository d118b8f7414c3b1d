//! Explicit constants for the delayed fractional Gronwall-Wendroff inequality
//!
//! ```text
//! u(t) <= f(t) + ∫_0^t (t-s)^{α-1} A(s) u(s) ds + ∫_0^t (t-s)^{β-1} B(s) u(s-τ) ds,
//! u = φ on [-τ, 0]   ==>   u(t) <= M (‖φ‖ + sup_{s<=t} f(s)).
//! ```
//!
//! `[0, T]` is cut into windows `[t_j, t_{j+1}]` of length `h`. With
//! `S = ‖φ‖ + sup f`, suppose `u <= M_{j+1} S` on window `j` for all `j < i`
//! (and `u <= S` on `[-τ, 0]`). For `t` in window `i` the kernel mass of an
//! earlier window is largest at `t = t_i`:
//!
//! ```text
//! w_ij = ‖A‖ ((t_i - t_j)^α - (t_i - t_{j+1})^α)/α + (same with ‖B‖, β),
//! ```
//!
//! and the mass inside the window is `q_i = ‖A‖ ℓ^α/α + ‖B‖ ℓ^β/β`. With
//! `q_i <= 1/2`,
//!
//! ```text
//! M_{i+1} = max(M_i, (1 + Σ_{j<i} w_ij M_{j+1}) / (1 - q_i)),   M_0 = 1.
//! ```
//!
//! Window lengths are powers of two (not fractions of `T`) so that the
//! windows for a shorter horizon are a prefix of those for a longer one; `M`
//! is the smallest value over the admissible lengths. The constant does not
//! depend on `τ`: delayed values before `t_i` are covered by `M_i S` and those
//! inside the window by the window supremum.

use alloc::{format, sync::Arc, vec, vec::Vec};
#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::fraccore::{check_order, HistoryFunction, KernelNormalization, RlWeights, UniformGrid};
use crate::{Error, Result};

/// Largest number of windows tried before falling back to finer partitions.
pub const MAX_WINDOWS: usize = 4096;

/// Required bound on the per-window kernel mass.
pub const Q_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallInput {
    pub alpha: f64,
    pub beta: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub horizon: f64,
    pub phi_norm: f64,
    pub f_sup: f64,
}

impl GronwallInput {
    pub fn validate(&self) -> Result<()> {
        check_order("alpha", self.alpha)?;
        check_order("beta", self.beta)?;
        for (name, v) in [
            ("norm_a", self.norm_a),
            ("norm_b", self.norm_b),
            ("phi_norm", self.phi_norm),
            ("f_sup", self.f_sup),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidProblem(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon T must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// Kernel mass `‖A‖ ℓ^α/α + ‖B‖ ℓ^β/β` of a window of length `ell`.
    pub fn window_mass(&self, ell: f64) -> f64 {
        kernel_mass(self.norm_a, self.alpha, ell) + kernel_mass(self.norm_b, self.beta, ell)
    }
}

/// `norm * t^order / order`, the integral of `norm (t-s)^{order-1}` over `[0, t]`.
pub fn kernel_mass(norm: f64, order: f64, t: f64) -> f64 {
    if norm == 0.0 {
        0.0
    } else {
        norm * t.powf(order) / order
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallCertificate {
    pub m: f64,
    pub h_star: f64,
    pub n_intervals: usize,
    /// Largest per-window kernel mass.
    pub q: f64,
}

impl GronwallCertificate {
    /// `M (‖φ‖ + f_sup)`.
    pub fn bound(&self, inp: &GronwallInput) -> f64 {
        self.m * (inp.phi_norm + inp.f_sup)
    }
}

/// Window recursion for a fixed window length; `None` if some window has
/// mass above [`Q_MAX`].
fn partition_constant(inp: &GronwallInput, h: f64) -> Option<(f64, usize, f64)> {
    let t_end = inp.horizon;
    let n = ((t_end / h) - 1e-12).ceil().max(1.0) as usize;
    // cum[d] = mass of [0, d h] seen from its right end; w_ij = cum[i-j] - cum[i-j-1].
    let cum: Vec<f64> = (0..=n).map(|d| inp.window_mass(d as f64 * h)).collect();
    let mut bounds: Vec<f64> = Vec::with_capacity(n);
    let mut m = 1.0f64;
    let mut q_max = 0.0f64;
    for i in 0..n {
        let t_i = i as f64 * h;
        let ell = (t_end - t_i).min(h);
        let q = inp.window_mass(ell);
        if q > Q_MAX {
            return None;
        }
        q_max = q_max.max(q);
        let past: f64 = bounds.iter().enumerate().map(|(j, mj)| (cum[i - j] - cum[i - j - 1]) * mj).sum();
        m = m.max((1.0 + past) / (1.0 - q));
        bounds.push(m);
    }
    Some((m, n, q_max))
}

pub fn compute_bound_constant(inp: &GronwallInput) -> Result<GronwallCertificate> {
    inp.validate()?;
    let top = inp.horizon.log2().ceil() as i32;
    let mut best: Option<GronwallCertificate> = None;
    let mut k = top;
    loop {
        let h = 2f64.powi(k);
        let windows = (inp.horizon / h).ceil();
        if windows > MAX_WINDOWS as f64 && best.is_some() {
            break;
        }
        if windows > (1u64 << 40) as f64 {
            return Err(Error::InvalidProblem("no admissible partition: kernel norms too large".into()));
        }
        if let Some((m, n, q)) = partition_constant(inp, h) {
            if best.is_none_or(|b| m < b.m) {
                best = Some(GronwallCertificate { m, h_star: h, n_intervals: n, q });
            }
        }
        k -= 1;
    }
    Ok(best.expect("loop exits with a certificate"))
}

/// Outcome of checking sampled functions against a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    HypothesisNotSatisfied,
}

/// Non-negative samples for [`certify_bound`]; vectors are node-major with
/// `dim` components and are reduced to their largest component.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSamples {
    pub h: f64,
    pub delay_steps: usize,
    pub dim: usize,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    /// History on the `delay_steps + 1` nodes of `[-τ, 0]`.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub verdict: Verdict,
    pub certificate: GronwallCertificate,
    /// `min_k bound_k - u_k`.
    pub worst_margin: f64,
    pub worst_index: usize,
    /// Node and excess of the first hypothesis violation.
    pub hypothesis_violation: Option<(usize, f64)>,
    pub bound: Vec<f64>,
}

/// Absolute slack (relative above 1) used when checking the hypothesis.
pub const HYPOTHESIS_SLACK: f64 = 1e-6;

fn reduce_max(v: &[f64], dim: usize) -> Vec<f64> {
    v.chunks(dim).map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
}

/// Checks `u <= M (‖φ‖ + sup_{s<=t} f)` node by node. Unless
/// `assume_hypothesis` is set, the integral hypothesis is first verified with
/// product-trapezoid quadrature of the raw kernels.
pub fn certify_bound(inp: &GronwallInput, samples: &BoundSamples, assume_hypothesis: bool) -> Result<BoundCheck> {
    let cert = compute_bound_constant(inp)?;
    let d = samples.dim;
    if d == 0 || samples.u.len() % d != 0 || samples.u.len() != samples.f.len() || samples.u.is_empty() {
        return Err(Error::Shape("u and f must be sampled on the same nodes".into()));
    }
    if samples.phi.len() != (samples.delay_steps + 1) * d {
        return Err(Error::Shape("history samples do not cover [-tau, 0]".into()));
    }
    let u = reduce_max(&samples.u, d);
    let f = reduce_max(&samples.f, d);
    let phi = reduce_max(&samples.phi, d);
    let nodes = u.len();

    let mut violation = None;
    if u.iter().chain(&f).chain(&phi).any(|v| *v < 0.0 || !v.is_finite()) {
        violation = Some((0, f64::NAN));
    } else if !assume_hypothesis {
        violation = hypothesis_violation(inp, samples.h, samples.delay_steps, &u, &f, &phi)?;
    }

    let mut bound = Vec::with_capacity(nodes);
    let mut running_f = 0.0f64;
    let mut worst = (f64::INFINITY, 0);
    for k in 0..nodes {
        running_f = running_f.max(f[k]);
        let b = cert.m * (inp.phi_norm + running_f);
        let margin = b - u[k];
        if margin < worst.0 {
            worst = (margin, k);
        }
        bound.push(b);
    }
    let verdict = if violation.is_some() {
        Verdict::HypothesisNotSatisfied
    } else if worst.0 >= 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(BoundCheck {
        verdict,
        certificate: cert,
        worst_margin: worst.0,
        worst_index: worst.1,
        hypothesis_violation: violation,
        bound,
    })
}

fn hypothesis_violation(
    inp: &GronwallInput,
    h: f64,
    m: usize,
    u: &[f64],
    f: &[f64],
    phi: &[f64],
) -> Result<Option<(usize, f64)>> {
    let n = u.len() - 1;
    let wa = RlWeights::new(inp.alpha, n, h, KernelNormalization::Raw)?;
    let wb = RlWeights::new(inp.beta, n, h, KernelNormalization::Raw)?;
    let delayed = |j: usize| -> f64 {
        if j >= m {
            u[j - m]
        } else {
            phi[j]
        }
    };
    for k in 0..=n {
        let mut ia = 0.0;
        let mut ib = 0.0;
        for j in 0..=k {
            ia += wa.trapezoid(j, k) * u[j];
            ib += wb.trapezoid(j, k) * delayed(j);
        }
        let rhs = f[k] + inp.norm_a * ia + inp.norm_b * ib;
        let excess = u[k] - rhs;
        if excess > HYPOTHESIS_SLACK * rhs.abs().max(1.0) {
            return Ok(Some((k, excess)));
        }
    }
    Ok(None)
}

/// Forcing `f(t)` written into `out`.
pub type Forcing = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// The equality version of the hypothesis with constant matrices,
/// `u = f + ∫ (t-s)^{α-1} A u ds + ∫ (t-s)^{β-1} B u(s-τ) ds`.
#[derive(Clone)]
pub struct VolterraEquality {
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
    /// Row-major `dim x dim`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub tau: f64,
    pub f: Forcing,
    pub history: HistoryFunction,
    pub horizon: f64,
}

/// Sampled solution of a [`VolterraEquality`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraSolution {
    pub grid: UniformGrid,
    pub dim: usize,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    pub phi: Vec<f64>,
}

impl VolterraSolution {
    /// Componentwise absolute values packaged for [`certify_bound`].
    pub fn abs_samples(&self) -> BoundSamples {
        BoundSamples {
            h: self.grid.h,
            delay_steps: self.grid.delay_steps,
            dim: self.dim,
            u: self.u.iter().map(|v| v.abs()).collect(),
            f: self.f.iter().map(|v| v.abs()).collect(),
            phi: self.phi.iter().map(|v| v.abs()).collect(),
        }
    }
}

/// Product-trapezoid solution on a grid aligned to `τ`; the implicit node
/// value is found by fixed-point iteration, which contracts because the
/// diagonal weight is `O(h^α)`.
pub fn solve_volterra_equality(p: &VolterraEquality, h: f64) -> Result<VolterraSolution> {
    check_order("alpha", p.alpha)?;
    check_order("beta", p.beta)?;
    let n = p.dim;
    if p.a.len() != n * n || p.b.len() != n * n || p.history.dim() != n {
        return Err(Error::Shape("matrix or history size does not match dim".into()));
    }
    if !(p.tau > 0.0) {
        return Err(Error::InvalidProblem(format!("delay must be positive, got {}", p.tau)));
    }
    let grid = UniformGrid::aligned(h, p.horizon, Some(p.tau))?.grid;
    let steps = grid.n_steps;
    let m = grid.delay_steps;
    let wa = RlWeights::new(p.alpha, steps, grid.h, KernelNormalization::Raw)?;
    let wb = RlWeights::new(p.beta, steps, grid.h, KernelNormalization::Raw)?;
    let phi = p.history.sample(&grid);
    let mut f = vec![0.0; (steps + 1) * n];
    for k in 0..=steps {
        (p.f)(grid.time(k), &mut f[k * n..(k + 1) * n]);
    }
    let mut u = vec![0.0; (steps + 1) * n];
    let mut au = vec![0.0; (steps + 1) * n];
    let mut rhs = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for k in 0..=steps {
        rhs.copy_from_slice(&f[k * n..(k + 1) * n]);
        for j in 0..k {
            let c = wa.trapezoid(j, k);
            for i in 0..n {
                rhs[i] += c * au[j * n + i];
            }
        }
        for j in 0..=k {
            let c = wb.trapezoid(j, k);
            if c == 0.0 {
                continue;
            }
            let ud = if j >= m { &u[(j - m) * n..(j - m + 1) * n] } else { &phi[j * n..(j + 1) * n] };
            mat_vec(&p.b, ud, &mut tmp);
            for i in 0..n {
                rhs[i] += c * tmp[i];
            }
        }
        let w = wa.trapezoid(k, k);
        let uk: &mut [f64] = &mut next;
        uk.copy_from_slice(&rhs);
        for _ in 0..200 {
            mat_vec(&p.a, uk, &mut tmp);
            let mut change = 0.0f64;
            for i in 0..n {
                let v = rhs[i] + w * tmp[i];
                change = change.max((v - uk[i]).abs());
                uk[i] = v;
            }
            if change <= 1e-15 * (1.0 + uk.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
                break;
            }
        }
        if uk.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: k });
        }
        u[k * n..(k + 1) * n].copy_from_slice(uk);
        mat_vec(&p.a, uk, &mut tmp);
        au[k * n..(k + 1) * n].copy_from_slice(&tmp);
    }
    Ok(VolterraSolution { grid, dim: n, u, f, phi })
}

fn mat_vec(mat: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = mat[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

//! Delayed fractional FitzHugh-Nagumo model
//!
//! ```text
//! D^α v = v - v³/3 - w + I_ext + λ v(t - τ)
//! D^α w = ε (v + a - b w)
//! ```

use alloc::{format, sync::Arc, vec, vec::Vec};
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::fraccore::{HistoryFunction, MemoryOperatorSpec};
use crate::gronwall::{compute_bound_constant, GronwallCertificate, GronwallInput};
use crate::mlf::{gamma_positive, ml_alpha};
use crate::solver::{ProblemSpec, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FhnParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub tau: f64,
    pub i_ext: f64,
}

impl FhnParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.epsilon, self.a, self.b, self.lambda, self.tau, self.i_ext];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("FHN parameters must be finite".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidProblem(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidProblem(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.b > 0.0) {
            return Err(Error::InvalidProblem(format!("b must be positive, got {}", self.b)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidProblem(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// `(F_v, F_w)` at state `(v, w)` with delayed voltage `v_delayed`.
    #[inline]
    pub fn field(&self, v: f64, w: f64, v_delayed: f64) -> (f64, f64) {
        (
            v - v * v * v / 3.0 - w + self.i_ext + self.lambda * v_delayed,
            self.epsilon * (v + self.a - self.b * w),
        )
    }

    /// `V = v²/2 + w²/(2ε)`.
    pub fn lyapunov(&self, v: f64, w: f64) -> f64 {
        0.5 * v * v + 0.5 * w * w / self.epsilon
    }

    /// `√(v² + w²/ε)`, the norm of the annulus.
    pub fn weighted_radius(&self, v: f64, w: f64) -> f64 {
        (v * v + w * w / self.epsilon).sqrt()
    }
}

/// The model as a solver problem on `[0, horizon]`.
pub fn fhn_problem(params: &FhnParams, history: HistoryFunction, horizon: f64) -> Result<ProblemSpec> {
    params.validate()?;
    if history.dim() != 2 {
        return Err(Error::Shape(format!("FHN history must have 2 components, got {}", history.dim())));
    }
    let mut x0 = vec![0.0; 2];
    history.eval(0.0, &mut x0);
    let p = *params;
    let rhs = move |_t: f64, x: &[f64], _d: &[f64], m: &[f64], out: &mut [f64]| {
        let (fv, fw) = p.field(x[0], x[1], m[0]);
        out[0] = fv;
        out[1] = fw;
    };
    Ok(ProblemSpec::new(params.alpha, x0, horizon, Arc::new(rhs))
        .with_memory(MemoryOperatorSpec::DiscreteDelay { tau: params.tau })
        .with_history(history))
}

/// Real equilibria, sorted by `v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibria {
    pub points: Vec<(f64, f64)>,
    /// A single real root (the regime the existence result assumes).
    pub unique: bool,
}

impl Equilibria {
    /// The equilibrium used for linearization: the only one when unique,
    /// otherwise the one with the largest `v0`.
    pub fn primary(&self) -> (f64, f64) {
        *self.points.last().expect("a real cubic has a real root")
    }
}

/// `v - v³/3 - (v+a)/b + I_ext + λ v`.
pub fn equilibrium_residual(params: &FhnParams, v: f64) -> f64 {
    v - v * v * v / 3.0 - (v + params.a) / params.b + params.i_ext + params.lambda * v
}

/// Solves `v³ + p v + q = 0` with `p = -3(1 + λ - 1/b)`, `q = -3(I - a/b)` in
/// closed form and polishes each root with Newton.
pub fn equilibrium(params: &FhnParams) -> Result<Equilibria> {
    params.validate()?;
    let p = -3.0 * (1.0 + params.lambda - 1.0 / params.b);
    let q = -3.0 * (params.i_ext - params.a / params.b);
    let mut roots = depressed_cubic_roots(p, q);
    for r in roots.iter_mut() {
        *r = polish_cubic(p, q, *r);
    }
    roots.sort_by(|a, b| a.total_cmp(b));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    let points = roots.iter().map(|&v| (v, (v + params.a) / params.b)).collect::<Vec<_>>();
    Ok(Equilibria { unique: points.len() == 1, points })
}

fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = q * q / 4.0 + p * p * p / 27.0;
    if p == 0.0 {
        return vec![(-q).cbrt()];
    }
    if disc > 0.0 {
        let s = disc.sqrt();
        // pick the non-cancelling branch, then recover the other cube root
        let u = (-q / 2.0 - q.signum() * s).cbrt();
        let u = if u == 0.0 { (-q / 2.0 + s).cbrt() } else { u };
        vec![u - p / (3.0 * u)]
    } else {
        let r = (-p / 3.0).sqrt();
        let cos_arg = ((-q / 2.0) / (r * r * r)).clamp(-1.0, 1.0);
        let phi = cos_arg.acos();
        (0..3).map(|k| 2.0 * r * ((phi + 2.0 * PI * k as f64) / 3.0).cos()).collect()
    }
}

fn polish_cubic(p: f64, q: f64, mut v: f64) -> f64 {
    for _ in 0..50 {
        let f = v * v * v + p * v + q;
        let df = 3.0 * v * v + p;
        if df == 0.0 {
            break;
        }
        let step = f / df;
        let next = v - step;
        if (next - v).abs() <= 1e-16 * (1.0 + v.abs()) {
            return next;
        }
        if (next * next * next + p * next + q).abs() > f.abs() {
            break;
        }
        v = next;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremConditions {
    pub lambda0: f64,
    pub epsilon0: f64,
    pub lambda_ok: bool,
    pub epsilon_ok: bool,
    pub subthreshold_ok: bool,
    pub all_satisfied: bool,
    /// `α = 1`: `λ0 = 0`, so no nonzero gain is admissible.
    pub degenerate_threshold: bool,
}

/// `λ0 = Γ(α+1)/τ^α · min(1/2, (1-α)/α)`.
pub fn lambda0(alpha: f64, tau: f64) -> f64 {
    gamma_positive(alpha + 1.0) / tau.powf(alpha) * 0.5f64.min((1.0 - alpha) / alpha)
}

/// `ε0 = b Γ(α+1)/2 · (1 - |λ| τ^α / Γ(α+1))`.
pub fn epsilon0(alpha: f64, b: f64, lambda: f64, tau: f64) -> f64 {
    let g = gamma_positive(alpha + 1.0);
    b * g / 2.0 * (1.0 - lambda.abs() * tau.powf(alpha) / g)
}

pub fn theorem_conditions(params: &FhnParams) -> Result<TheoremConditions> {
    params.validate()?;
    let l0 = lambda0(params.alpha, params.tau);
    let e0 = epsilon0(params.alpha, params.b, params.lambda, params.tau);
    let lambda_ok = params.lambda.abs() < l0;
    let epsilon_ok = params.epsilon > 0.0 && params.epsilon < e0;
    let subthreshold_ok = params.a < 1.0 + params.b * params.b / (4.0 * params.epsilon);
    Ok(TheoremConditions {
        lambda0: l0,
        epsilon0: e0,
        lambda_ok,
        epsilon_ok,
        subthreshold_ok,
        all_satisfied: lambda_ok && epsilon_ok && subthreshold_ok,
        degenerate_threshold: params.alpha == 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusSpec {
    pub r1: f64,
    pub r2: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    /// Amplification constant of the Lyapunov bound.
    pub m: f64,
    pub certificate: GronwallCertificate,
    /// `C2 = 0`, so `R1 = 0`.
    pub degenerate: bool,
}

impl AnnulusSpec {
    /// Ultimate bound `2 C2 / δ` of `V`.
    pub fn ultimate_v(&self) -> f64 {
        2.0 * self.c2 / self.delta
    }
}

/// Lyapunov constants and radii. `M` is the Gronwall constant of the
/// integrated inequality `V(t) <= V(0) + C2 t^α/Γ(α+1) + C1/Γ(α) ∫ (t-s)^{α-1} V(s-τ) ds`
/// over one delay interval.
pub fn annulus(params: &FhnParams) -> Result<AnnulusSpec> {
    params.validate()?;
    let delta = (2.0f64 / 3.0).min(params.b / 2.0);
    let c1 = params.lambda.abs() / 2.0;
    let c2 = params.i_ext * params.i_ext / 2.0 + params.epsilon * params.a * params.a / 2.0;
    let input = GronwallInput {
        alpha: params.alpha,
        beta: params.alpha,
        norm_a: 0.0,
        norm_b: c1 / gamma_positive(params.alpha),
        horizon: params.tau,
        phi_norm: 1.0,
        f_sup: 1.0,
    };
    let certificate = compute_bound_constant(&input)?;
    let m = certificate.m;
    let r1 = (c2 / delta).sqrt();
    let r2 = (2.0 * c2 / delta + m * c2 / delta).sqrt();
    Ok(AnnulusSpec { r1, r2, delta, c1, c2, m, certificate, degenerate: c2 == 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub v: Vec<f64>,
    pub envelope: Vec<f64>,
    pub first_violation: Option<usize>,
    pub ultimate_bound: f64,
}

impl LyapunovSeries {
    /// First node from which `V` stays at or below `factor * 2C2/δ`.
    pub fn settles_below(&self, factor: f64) -> Option<usize> {
        let cap = factor * self.ultimate_bound;
        let last_above = self.v.iter().rposition(|&x| x > cap);
        match last_above {
            None => Some(0),
            Some(k) if k + 1 < self.v.len() => Some(k + 1),
            _ => None,
        }
    }
}

/// `V(t_k)` and the envelope `M (V(0) + C2/δ) E_α(-(δ/2) t^α) + 2C2/δ`.
pub fn lyapunov_series(traj: &Trajectory, params: &FhnParams) -> Result<LyapunovSeries> {
    if traj.dim != 2 {
        return Err(Error::Shape("lyapunov series needs a two-component trajectory".into()));
    }
    let ann = annulus(params)?;
    let v: Vec<f64> = (0..traj.n_nodes()).map(|k| {
        let s = traj.state(k);
        params.lyapunov(s[0], s[1])
    }).collect();
    let v0 = v[0];
    let mut envelope = Vec::with_capacity(v.len());
    let mut first_violation = None;
    for (k, &vk) in v.iter().enumerate() {
        let t = traj.time(k);
        let e = ml_alpha(params.alpha, -(ann.delta / 2.0) * t.powf(params.alpha))?;
        let env = ann.m * (v0 + ann.c2 / ann.delta) * e + ann.ultimate_v();
        if first_violation.is_none() && vk > env * (1.0 + 1e-12) {
            first_violation = Some(k);
        }
        envelope.push(env);
    }
    Ok(LyapunovSeries { v, envelope, first_violation, ultimate_bound: ann.ultimate_v() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoot {
    pub s: Complex64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub re_seeds: usize,
    pub im_seeds: usize,
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox { re_min: -5.0, re_max: 5.0, im_min: -50.0, im_max: 50.0, re_seeds: 11, im_seeds: 101 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicReport {
    /// `c = 1 - v0² - 1/b`.
    pub c: f64,
    pub roots: Vec<CharacteristicRoot>,
    pub rightmost: Option<CharacteristicRoot>,
    pub unstable: bool,
    pub seeds: usize,
    pub converged_seeds: usize,
}

/// Reported roots re-verify to this residual.
pub const ROOT_RESIDUAL: f64 = 1e-8;

/// `s^α - c - λ e^{-sτ}` on the principal branch.
pub fn characteristic_residual(alpha: f64, c: f64, lambda: f64, tau: f64, s: Complex64) -> Complex64 {
    principal_pow(s, alpha) - c - lambda * (-s * tau).exp()
}

fn principal_pow(s: Complex64, alpha: f64) -> Complex64 {
    if alpha == 1.0 {
        s
    } else {
        s.powf(alpha)
    }
}

/// Newton from a grid of seeds over `search`; roots are deduplicated at
/// distance `1e-6` and the branch point `s = 0` is excluded.
pub fn characteristic_roots(params: &FhnParams, v0: f64, search: &SearchBox) -> Result<CharacteristicReport> {
    params.validate()?;
    if search.re_seeds * search.im_seeds < 400 {
        return Err(Error::InvalidProblem(format!(
            "at least 400 seeds required, got {}",
            search.re_seeds * search.im_seeds
        )));
    }
    let (alpha, lambda, tau) = (params.alpha, params.lambda, params.tau);
    let c = 1.0 - v0 * v0 - 1.0 / params.b;
    let mut roots: Vec<CharacteristicRoot> = Vec::new();
    let mut converged = 0;
    let span = |lo: f64, hi: f64, n: usize, i: usize| if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
    // rectangular grid plus rings around the branch point, where small roots
    // of s^α are hard to reach from distant seeds
    let mut seeds = Vec::with_capacity(search.re_seeds * search.im_seeds + 96);
    for i in 0..search.re_seeds {
        for j in 0..search.im_seeds {
            seeds.push(Complex64::new(
                span(search.re_min, search.re_max, search.re_seeds, i),
                span(search.im_min, search.im_max, search.im_seeds, j),
            ));
        }
    }
    for r in [1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0] {
        for j in 0..16 {
            let theta = -PI + PI * (2 * j + 1) as f64 / 16.0;
            seeds.push(Complex64::from_polar(r, theta));
        }
    }
    for &seed in &seeds {
        let Some(s) = newton(alpha, c, lambda, tau, seed) else { continue };
        let residual = characteristic_residual(alpha, c, lambda, tau, s).norm();
        if residual > ROOT_RESIDUAL || s.norm() < 1e-10 {
            continue;
        }
        let margin = 1e-6;
        if s.re < search.re_min - margin
            || s.re > search.re_max + margin
            || s.im < search.im_min - margin
            || s.im > search.im_max + margin
        {
            continue;
        }
        converged += 1;
        if roots.iter().all(|r| (r.s - s).norm() >= 1e-6) {
            roots.push(CharacteristicRoot { s, residual });
        }
    }
    roots.sort_by(|a, b| b.s.re.total_cmp(&a.s.re).then(a.s.im.total_cmp(&b.s.im)));
    let rightmost = roots.first().copied();
    Ok(CharacteristicReport {
        c,
        unstable: rightmost.is_some_and(|r| r.s.re > 0.0),
        rightmost,
        roots,
        seeds: seeds.len(),
        converged_seeds: converged,
    })
}

/// Newton in `u = s^α`, where `u - c - λ e^{-u^{1/α} τ} = 0` stays well
/// conditioned near the branch point. Iterates are kept on the principal
/// sheet `|arg u| <= απ`.
fn newton(alpha: f64, c: f64, lambda: f64, tau: f64, seed: Complex64) -> Option<Complex64> {
    if seed.norm() < 1e-12 {
        return None;
    }
    let inv = 1.0 / alpha;
    let sector = alpha * PI;
    let mut u = principal_pow(seed, alpha);
    for _ in 0..100 {
        if u.norm() < 1e-300 || !u.re.is_finite() || !u.im.is_finite() || u.arg().abs() > sector + 1e-12 {
            return None;
        }
        let s = if alpha == 1.0 { u } else { u.powf(inv) };
        let e = (-s * tau).exp();
        let h = u - c - lambda * e;
        // ds/du = s / (α u)
        let dh = Complex64::new(1.0, 0.0) + lambda * tau * e * s / (alpha * u);
        if dh.norm() == 0.0 {
            return None;
        }
        let step = h / dh;
        u -= step;
        if step.norm() <= 1e-15 * (1.0 + u.norm()) {
            if u.arg().abs() > sector + 1e-12 {
                return None;
            }
            return Some(if alpha == 1.0 { u } else { u.powf(inv) });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, SolverConfig};

    fn params() -> FhnParams {
        FhnParams { alpha: 0.8, epsilon: 0.08, a: 0.7, b: 0.8, lambda: 0.0, tau: 1.0, i_ext: 0.0 }
    }

    #[test]
    fn field_examples() {
        let p = FhnParams { a: 0.0, ..params() };
        assert_eq!(p.field(0.0, 0.0, 0.0), (0.0, 0.0));
        let (fv, _) = params().field(1.0, 0.0, 0.0);
        assert!((fv - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn delayed_term_reads_history() {
        let p = FhnParams { lambda: 0.2, ..params() };
        let prob = fhn_problem(&p, HistoryFunction::Constant(alloc::vec![1.0, 0.0]), 0.5).unwrap();
        let mut out = [0.0; 2];
        prob.rhs.eval(0.1, &[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &mut out);
        assert!((out[0] - 0.2).abs() < 1e-15);
        let tr = solve(&prob, &SolverConfig::new(0.1)).unwrap();
        assert!(tr.deriv(0)[0] > 0.0);
    }

    #[test]
    fn odd_cubic_has_zero_equilibrium() {
        let p = FhnParams { a: 0.0, b: 0.5, ..params() };
        let eq = equilibrium(&p).unwrap();
        assert!(eq.unique);
        assert_eq!(eq.points[0], (0.0, 0.0));
    }

    #[test]
    fn classical_equilibrium() {
        let eq = equilibrium(&params()).unwrap();
        assert!(eq.unique);
        let (v0, w0) = eq.points[0];
        assert!((v0 + 1.199_408).abs() < 1e-5, "{v0}");
        assert!((w0 + 0.624_260).abs() < 1e-5, "{w0}");
        assert!(equilibrium_residual(&params(), v0).abs() <= 1e-12);
        let shifted = FhnParams { lambda: 0.1, ..params() };
        let v1 = equilibrium(&shifted).unwrap().points[0].0;
        assert!(equilibrium_residual(&shifted, v1).abs() <= 1e-12);
        assert!((v1 - v0).abs() > 1e-3);
    }

    #[test]
    fn three_equilibria_are_all_reported() {
        // 1 - 1/b > 0 with a = I = 0: roots 0 and ±sqrt(3(1 - 1/b))
        let p = FhnParams { a: 0.0, b: 2.0, ..params() };
        let eq = equilibrium(&p).unwrap();
        assert!(!eq.unique);
        assert_eq!(eq.points.len(), 3);
        let r = (1.5f64).sqrt();
        assert!((eq.points[0].0 + r).abs() < 1e-12 && eq.points[1].0.abs() < 1e-12 && (eq.points[2].0 - r).abs() < 1e-12);
    }

    #[test]
    fn condition_thresholds() {
        let g = gamma_positive(1.5);
        assert!((lambda0(0.5, 1.0) - g / 2.0).abs() < 1e-12);
        assert!((epsilon0(0.5, 0.8, 0.0, 1.0) - 0.8 * g / 2.0).abs() < 1e-12);
        let c = theorem_conditions(&FhnParams { alpha: 0.5, ..params() }).unwrap();
        assert!(c.lambda_ok);
        let c1 = theorem_conditions(&FhnParams { alpha: 1.0, lambda: 0.1, ..params() }).unwrap();
        assert!(c1.degenerate_threshold && c1.lambda0 == 0.0 && !c1.lambda_ok);
    }

    #[test]
    fn annulus_constants() {
        let a = annulus(&params()).unwrap();
        assert_eq!(a.delta, 0.4);
        assert_eq!(annulus(&FhnParams { b: 2.0, ..params() }).unwrap().delta, 2.0 / 3.0);
        let z = annulus(&FhnParams { a: 0.0, i_ext: 0.0, ..params() }).unwrap();
        assert!(z.degenerate && z.r1 == 0.0 && z.c2 == 0.0);
        let p = FhnParams { i_ext: 0.5, lambda: 0.1, ..params() };
        let a = annulus(&p).unwrap();
        assert!(a.r1 > 0.0 && a.r1 < a.r2 && a.m >= 1.0);
    }

    #[test]
    fn lyapunov_values() {
        let p = FhnParams { epsilon: 1.0, ..params() };
        assert_eq!(p.lyapunov(1.0, 1.0), 1.0);
    }

    #[test]
    fn lyapunov_series_zero_and_violation() {
        let p = FhnParams { a: 0.0, ..params() };
        let prob = fhn_problem(&p, HistoryFunction::Constant(alloc::vec![0.0, 0.0]), 2.0).unwrap();
        let tr = solve(&prob, &SolverConfig::new(0.05)).unwrap();
        let s = lyapunov_series(&tr, &p).unwrap();
        assert!(s.v.iter().all(|&v| v == 0.0));
        assert_eq!(s.first_violation, None);
        let mut bad = tr.clone();
        let k = bad.n_nodes() - 5;
        bad.states[2 * k] = 10.0;
        assert_eq!(lyapunov_series(&bad, &p).unwrap().first_violation, Some(k));
    }

    #[test]
    fn characteristic_closed_forms_without_delay_gain() {
        for &(alpha, b, v0) in &[(1.0, 0.8, 0.0), (0.5, 4.0, 0.0), (0.7, 2.0, 0.3)] {
            let p = FhnParams { alpha, b, ..params() };
            let r = characteristic_roots(&p, v0, &SearchBox::default()).unwrap();
            let c = 1.0 - v0 * v0 - 1.0 / b;
            if c > 0.0 {
                let want = c.powf(1.0 / alpha);
                let root = r.rightmost.unwrap();
                assert!((root.s - Complex64::new(want, 0.0)).norm() < 1e-8, "{r:?}");
                assert!(r.unstable);
            } else if alpha == 1.0 {
                assert_eq!(r.roots.len(), 1);
                assert!((r.roots[0].s.re - c).abs() < 1e-8);
                assert!(!r.unstable);
            }
        }
        let p = FhnParams { alpha: 0.6, ..params() };
        let r = characteristic_roots(&p, -1.2, &SearchBox::default()).unwrap();
        assert!(r.c < 0.0);
        assert!(!r.unstable);
        assert!(r.roots.iter().all(|x| x.s.re <= 0.0));
    }

    #[test]
    fn characteristic_roots_with_delay_reverify() {
        let p = FhnParams { alpha: 0.8, lambda: 0.3, ..params() };
        let r = characteristic_roots(&p, 0.2, &SearchBox::default()).unwrap();
        assert!(!r.roots.is_empty());
        for root in &r.roots {
            let res = characteristic_residual(p.alpha, r.c, p.lambda, p.tau, root.s).norm();
            assert!(res <= ROOT_RESIDUAL);
        }
    }
}

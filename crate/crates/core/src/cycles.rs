//! Limit cycles and excitability thresholds of the delayed FHN model.
//!
//! Periodicity is tested on the sampled history segment (`m + 1` nodes on
//! `[-τ, 0]`). Caputo orbits are only asymptotically periodic, so a transient
//! is discarded before the time-`T` map is iterated.

use alloc::{format, string::String, vec, vec::Vec};

#[allow(unused_imports)] // inherent f64 methods shadow it when std is linked
use num_traits::Float;

use crate::fhn::{annulus, equilibrium, fhn_problem, FhnParams};
use crate::fraccore::{HistoryFunction, StateSource, UniformGrid};
use crate::mlf::gamma_positive;
use crate::solver::{solve_on_grid, ProblemSpec, SolverConfig, Trajectory};
use crate::{Error, Result};

/// Samples of the state on the `m + 1` grid nodes of `[-τ, 0]`, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySegment {
    pub tau: f64,
    pub h: f64,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl HistorySegment {
    pub fn new(tau: f64, h: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(Error::Shape("segment length is not a multiple of its dimension".into()));
        }
        let nodes = values.len() / dim;
        let m = (tau / h).round();
        if !(h > 0.0) || !(tau > 0.0) || (m * h - tau).abs() > 1e-9 * tau || m as usize + 1 != nodes {
            return Err(Error::Shape(format!("{nodes} nodes do not cover [-{tau}, 0] at step {h}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("segment samples are not finite".into()));
        }
        Ok(HistorySegment { tau, h, dim, values })
    }

    pub fn constant(state: &[f64], tau: f64, h: f64) -> Result<Self> {
        let m = (tau / h).round() as usize;
        let values = (0..=m).flat_map(|_| state.iter().copied()).collect();
        Self::new(tau, h, state.len(), values)
    }

    /// The segment ending at node `end` of `traj` (history nodes included).
    pub fn from_trajectory(traj: &Trajectory, end: usize) -> Result<Self> {
        let m = traj.grid.delay_steps;
        if m == 0 {
            return Err(Error::Shape("a history segment needs a positive delay".into()));
        }
        let mut values = Vec::with_capacity((m + 1) * traj.dim);
        for i in 0..=m {
            values.extend_from_slice(traj.state_at(end as isize - (m - i) as isize)?);
        }
        Self::new(traj.grid.delay(), traj.grid.h, traj.dim, values)
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.nodes() - 1)
    }

    pub fn to_history(&self) -> HistoryFunction {
        HistoryFunction::Sampled { tau: self.tau, dim: self.dim, values: self.values.clone() }
    }

    pub fn sup_distance(&self, other: &HistorySegment) -> Result<f64> {
        if self.values.len() != other.values.len() || self.dim != other.dim {
            return Err(Error::Shape("segments differ in shape".into()));
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
    }
}

fn map_steps(phi: &HistorySegment, t_map: f64) -> Result<usize> {
    if !(t_map > phi.tau) {
        return Err(Error::InvalidProblem(format!("map horizon {t_map} must exceed the delay {}", phi.tau)));
    }
    let n = (t_map / phi.h).round();
    if (n * phi.h - t_map).abs() > 1e-9 * t_map {
        return Err(Error::InvalidProblem(format!("map horizon {t_map} is not a multiple of h = {}", phi.h)));
    }
    Ok(n as usize)
}

/// Solves `template` from the history `phi` over `[0, t_map]` on `phi`'s grid.
pub fn solve_from_segment(phi: &HistorySegment, template: &ProblemSpec, t_map: f64, cfg: &SolverConfig) -> Result<Trajectory> {
    let n = map_steps(phi, t_map)?;
    let grid = UniformGrid::new(phi.h, n, phi.nodes() - 1)?;
    let mut p = template.clone();
    p.history = phi.to_history();
    p.x0 = phi.last().to_vec();
    p.horizon = grid.horizon();
    solve_on_grid(&p, &SolverConfig { h: phi.h, ..*cfg }, grid)
}

/// Time-`T` map for an arbitrary problem whose memory delay equals `phi.tau`.
pub fn poincare_map_problem(phi: &HistorySegment, template: &ProblemSpec, t_map: f64, cfg: &SolverConfig) -> Result<HistorySegment> {
    let traj = solve_from_segment(phi, template, t_map, cfg)?;
    HistorySegment::from_trajectory(&traj, traj.grid.n_steps)
}

/// `P_T φ`: the FHN solution segment on `[T - τ, T]` started from `φ`.
pub fn poincare_map(phi: &HistorySegment, params: &FhnParams, t_map: f64, cfg: &SolverConfig) -> Result<HistorySegment> {
    if (phi.tau - params.tau).abs() > 1e-12 * params.tau {
        return Err(Error::Shape(format!("segment covers tau = {}, model delay is {}", phi.tau, params.tau)));
    }
    let template = fhn_problem(params, phi.to_history(), t_map)?;
    poincare_map_problem(phi, &template, t_map, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    /// Requested step; shrunk to divide `τ`.
    pub h: f64,
    pub t_skip: f64,
    /// Horizon of one map application; enlarged to hold two periods.
    pub t_map: f64,
    pub cycle_tol: f64,
    pub amplitude_floor: f64,
    pub max_iter: usize,
    /// Initial segment; when absent, the constant primary equilibrium with
    /// `v` offset by `perturbation` (the exact equilibrium is a fixed point
    /// of the discrete map too).
    pub initial: Option<HistoryFunction>,
    pub perturbation: f64,
    pub solver: SolverConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            h: 1e-2,
            t_skip: 200.0,
            t_map: 100.0,
            cycle_tol: 1e-4,
            amplitude_floor: 0.1,
            max_iter: 50,
            initial: None,
            perturbation: 1e-3,
            solver: SolverConfig::new(1e-2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitCycleReport {
    pub found: bool,
    pub period: Option<f64>,
    /// `sup |x(t_e + θ) - x(t_e + θ - T*)|` over the last segment.
    pub poincare_residual: f64,
    pub amplitude: f64,
    pub in_annulus: bool,
    /// Weighted radius range `√(v² + w²/ε)` over the last period.
    pub radius_range: (f64, f64),
    pub transient_discarded: f64,
    pub iterations: usize,
    /// Segment at the end of the last window.
    pub segment: HistorySegment,
    pub diagnostic: Option<String>,
}

/// Upward crossings of `v - mean(v)`, linearly interpolated.
pub fn upward_crossings(times: &[f64], v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let mut out = Vec::new();
    for k in 1..v.len() {
        let (a, b) = (v[k - 1] - mean, v[k] - mean);
        if a < 0.0 && b >= 0.0 {
            out.push(times[k - 1] + (times[k] - times[k - 1]) * (-a) / (b - a));
        }
    }
    out
}

/// State at (possibly non-grid) time `t ∈ [-τ, T]`, cubic Lagrange through
/// the four surrounding nodes (linear at the ends of the stored range).
fn state_at_time(traj: &Trajectory, t: f64, out: &mut [f64]) -> Result<()> {
    let h = traj.grid.h;
    let pos = t / h;
    let lo = pos.floor();
    let frac = pos - lo;
    let i = lo as isize;
    let a = traj.state_at(i)?;
    if frac <= 1e-12 {
        out.copy_from_slice(a);
        return Ok(());
    }
    let b = traj.state_at(i + 1)?;
    match (traj.state_at(i - 1), traj.state_at(i + 2)) {
        (Ok(p), Ok(q)) => {
            let f = frac;
            let wp = -f * (f - 1.0) * (f - 2.0) / 6.0;
            let wa = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
            let wb = -(f + 1.0) * f * (f - 2.0) / 2.0;
            let wq = (f + 1.0) * f * (f - 1.0) / 6.0;
            for (j, o) in out.iter_mut().enumerate() {
                *o = wp * p[j] + wa * a[j] + wb * b[j] + wq * q[j];
            }
        }
        _ => {
            for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                *o = x + frac * (y - x);
            }
        }
    }
    Ok(())
}

/// `sup_{t ∈ [t0, t1]} |x(t) - x(t - period)|` sampled on the grid nodes.
pub fn period_defect(traj: &Trajectory, period: f64, t0: f64, t1: f64) -> Result<f64> {
    let n = traj.dim;
    let h = traj.grid.h;
    let k0 = (t0 / h).ceil() as usize;
    let k1 = ((t1 / h).floor() as usize).min(traj.grid.n_steps);
    let mut back = vec![0.0; n];
    let mut sup = 0.0f64;
    for k in k0..=k1 {
        state_at_time(traj, traj.time(k) - period, &mut back)?;
        for (a, b) in traj.state(k).iter().zip(&back) {
            sup = sup.max((a - b).abs());
        }
    }
    Ok(sup)
}

/// Iterates the time-`T` map from the post-transient segment until the last
/// window repeats itself after one period.
pub fn find_cycle(params: &FhnParams, cfg: &CycleConfig) -> Result<LimitCycleReport> {
    params.validate()?;
    if !(cfg.cycle_tol > 0.0) || !(cfg.amplitude_floor >= 0.0) || cfg.max_iter == 0 || !(cfg.t_skip >= 0.0) {
        return Err(Error::Config("cycle_tol > 0, amplitude_floor >= 0, max_iter >= 1 and t_skip >= 0 are required".into()));
    }
    let grid = UniformGrid::aligned(cfg.h, params.tau, Some(params.tau))?.grid;
    let h = grid.h;
    let initial = match &cfg.initial {
        Some(hf) => hf.clone(),
        None => {
            let (v0, w0) = equilibrium(params)?.primary();
            HistoryFunction::Constant(vec![v0 + cfg.perturbation, w0])
        }
    };
    let template = fhn_problem(params, initial.clone(), params.tau)?;
    let mut phi = HistorySegment::new(params.tau, h, 2, initial.sample(&grid))?;
    let steps = |t: f64| ((t / h) - 1e-9).ceil().max(1.0) * h;

    let mut discarded = 0.0;
    if cfg.t_skip > 0.0 {
        let t = steps(cfg.t_skip.max(params.tau * 1.5));
        phi = poincare_map_problem(&phi, &template, t, &cfg.solver)?;
        discarded += t;
    }

    let ann = annulus(params)?;
    let mut window = steps(cfg.t_map.max(2.0 * params.tau));
    let mut report = LimitCycleReport {
        found: false,
        period: None,
        poincare_residual: f64::INFINITY,
        amplitude: 0.0,
        in_annulus: false,
        radius_range: (0.0, 0.0),
        transient_discarded: discarded,
        iterations: 0,
        segment: phi.clone(),
        diagnostic: None,
    };
    for it in 0..cfg.max_iter {
        let traj = solve_from_segment(&phi, &template, window, &cfg.solver)?;
        let te = traj.grid.horizon();
        let times: Vec<f64> = (0..traj.n_nodes()).map(|k| traj.time(k)).collect();
        let v = traj.component(0);
        let crossings = upward_crossings(&times, &v);
        report.iterations = it + 1;
        report.transient_discarded = discarded;
        report.segment = HistorySegment::from_trajectory(&traj, traj.grid.n_steps)?;

        let period = if crossings.len() >= 2 {
            Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
        } else {
            None
        };
        // amplitude and radii over the last period, or the whole window
        let span = period.unwrap_or(te).min(te);
        let k_from = ((te - span) / h).floor().max(0.0) as usize;
        let tail = &v[k_from..];
        report.amplitude = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let radii = (k_from..traj.n_nodes()).map(|k| {
            let s = traj.state(k);
            params.weighted_radius(s[0], s[1])
        });
        report.radius_range = radii.fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        report.in_annulus = report.radius_range.0 >= ann.r1 * 0.9 && report.radius_range.1 <= ann.r2 * 1.1;
        report.period = period;

        let head = &v[..(span / h).ceil().min(v.len() as f64) as usize];
        let head_amp = head.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - head.iter().cloned().fold(f64::INFINITY, f64::min);
        if report.amplitude <= cfg.amplitude_floor && (report.amplitude <= head_amp || it + 1 == cfg.max_iter) {
            report.poincare_residual = period.map_or(f64::INFINITY, |p| {
                period_defect(&traj, p, (te - params.tau).max(p), te).unwrap_or(f64::INFINITY)
            });
            report.diagnostic = Some(format!("amplitude {:.3e} at or below the floor", report.amplitude));
            return Ok(report);
        }
        match period {
            Some(p) if p + params.tau <= te => {
                report.poincare_residual = period_defect(&traj, p, te - params.tau, te)?;
                if report.poincare_residual <= cfg.cycle_tol {
                    report.found = true;
                    report.diagnostic = None;
                    return Ok(report);
                }
                window = steps(window.max(2.0 * p + params.tau));
            }
            Some(p) => window = steps(2.0 * p + params.tau),
            None => window = steps(2.0 * window),
        }
        discarded += te;
        phi = report.segment.clone();
    }
    report.diagnostic = Some(format!(
        "map iteration did not settle: residual {:.3e} after {} windows",
        report.poincare_residual, report.iterations
    ));
    Ok(report)
}

/// Re-simulates one map window from `segment` and returns
/// `sup_{t ∈ [T*, 2T*]} |x(t) - x(t - T*)|`.
pub fn cycle_defect(params: &FhnParams, segment: &HistorySegment, period: f64, cfg: &SolverConfig) -> Result<f64> {
    let template = fhn_problem(params, segment.to_history(), params.tau)?;
    let t = ((2.0 * period + params.tau) / segment.h).ceil() * segment.h;
    let traj = solve_from_segment(segment, &template, t, cfg)?;
    period_defect(&traj, period, period, 2.0 * period)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderEstimate {
    /// `max ‖x(t1) - x(t2)‖∞ / |t1 - t2|^α` over pairs within the window.
    pub observed: f64,
    /// `sup ‖F‖∞ / Γ(α+1)` along the trajectory.
    pub theoretical: f64,
}

/// Pairwise Hölder quotient over node pairs at most `window` steps apart.
pub fn holder_constant(traj: &Trajectory, alpha: f64, window: usize) -> Result<HolderEstimate> {
    if traj.n_nodes() < 10 {
        return Err(Error::Shape(format!("need at least 10 nodes, got {}", traj.n_nodes())));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || window == 0 {
        return Err(Error::InvalidProblem("alpha in (0,1] and a positive window are required".into()));
    }
    let n = traj.n_nodes();
    let mut observed = 0.0f64;
    for i in 0..n {
        let xi = traj.state(i);
        for j in i + 1..n.min(i + window + 1) {
            let dist = xi.iter().zip(traj.state(j)).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let dt = (traj.time(j) - traj.time(i)).powf(alpha);
            observed = observed.max(dist / dt);
        }
    }
    let f_sup = traj.derivs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Ok(HolderEstimate { observed, theoretical: f_sup / gamma_positive(alpha + 1.0) })
}

/// Answers whether a current step of size `i_ext` elicits a spike at delay `tau`.
pub trait SpikeProbe: Sync {
    fn spikes(&self, tau: f64, i_ext: f64) -> Result<bool>;
}

/// Starts at the rest state of `base` and applies the current `i_ext`.
#[derive(Debug, Clone, PartialEq)]
pub struct FhnSpikeProbe {
    pub base: FhnParams,
    pub h: f64,
    pub t_obs: f64,
    pub spike_margin: f64,
    pub solver: SolverConfig,
}

impl FhnSpikeProbe {
    pub fn new(base: FhnParams, h: f64, t_obs: f64) -> Self {
        FhnSpikeProbe { base, h, t_obs, spike_margin: 1.0, solver: SolverConfig::new(h) }
    }
}

impl SpikeProbe for FhnSpikeProbe {
    fn spikes(&self, tau: f64, i_ext: f64) -> Result<bool> {
        let rest = FhnParams { tau, ..self.base };
        let (v0, w0) = equilibrium(&rest)?.primary();
        let driven = FhnParams { i_ext, ..rest };
        let problem = fhn_problem(&driven, HistoryFunction::Constant(vec![v0, w0]), self.t_obs)?;
        let grid = UniformGrid::aligned(self.h, self.t_obs, Some(tau))?.grid;
        let traj = solve_on_grid(&problem, &SolverConfig { h: grid.h, ..self.solver }, grid)?;
        let cap = v0 + self.spike_margin;
        Ok((0..traj.n_nodes()).any(|k| traj.state(k)[0] > cap))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    pub i_max: f64,
    /// First upper bracket, doubled until a spike occurs.
    pub i_start: f64,
    pub bisections: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { i_max: 10.0, i_start: 1e-3, bisections: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPoint {
    pub tau: f64,
    /// Upper end of the final bracket; `None` when no spike up to `i_max`.
    pub i_th: Option<f64>,
    pub bracket_width: f64,
}

/// Bisection on `I_ext` for the smallest spiking current.
pub fn find_threshold<P: SpikeProbe + ?Sized>(probe: &P, tau: f64, cfg: &ThresholdConfig) -> Result<ThresholdPoint> {
    if !(cfg.i_max > 0.0) || !(cfg.i_start > 0.0) {
        return Err(Error::Config("i_max and i_start must be positive".into()));
    }
    if probe.spikes(tau, 0.0)? {
        return Ok(ThresholdPoint { tau, i_th: Some(0.0), bracket_width: 0.0 });
    }
    let mut lo = 0.0;
    let mut hi = cfg.i_start.min(cfg.i_max);
    loop {
        if probe.spikes(tau, hi)? {
            break;
        }
        if hi >= cfg.i_max {
            return Ok(ThresholdPoint { tau, i_th: None, bracket_width: f64::INFINITY });
        }
        lo = hi;
        hi = (2.0 * hi).min(cfg.i_max);
    }
    for _ in 0..cfg.bisections {
        let mid = 0.5 * (lo + hi);
        if probe.spikes(tau, mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdPoint { tau, i_th: Some(hi), bracket_width: hi - lo })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub p: f64,
    pub prefactor: f64,
    pub stderr: f64,
    pub r2: f64,
}

/// Least squares of `ln y = ln c + p ln x`.
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerLawFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Shape("power-law fit needs at least 3 paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = ly.iter().map(|b| (b - my) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("power-law fit needs distinct abscissae".into()));
    }
    let p = sxy / sxx;
    let c = my - p * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - c - p * a).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(PowerLawFit { p, prefactor: c.exp(), stderr, r2 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub points: Vec<ThresholdPoint>,
    pub fit: Option<PowerLawFit>,
    /// Defined thresholds are monotone in `τ` (either direction).
    pub monotone: bool,
    pub non_increasing: bool,
    /// `1 - α`.
    pub expected_exponent: f64,
    /// `p - (1 - α)`.
    pub deviation: Option<f64>,
}

/// Fit and monotonicity of already computed thresholds.
pub fn summarize_scan(alpha: f64, points: Vec<ThresholdPoint>) -> ScanResult {
    let mut defined: Vec<(f64, f64)> = points.iter().filter_map(|p| p.i_th.map(|i| (p.tau, i))).collect();
    defined.sort_by(|a, b| a.0.total_cmp(&b.0));
    let non_increasing = defined.windows(2).all(|w| w[1].1 <= w[0].1);
    let non_decreasing = defined.windows(2).all(|w| w[1].1 >= w[0].1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = defined.iter().copied().unzip();
    let fit = fit_power_law(&xs, &ys).ok();
    let expected = 1.0 - alpha;
    ScanResult {
        points,
        deviation: fit.map(|f| f.p - expected),
        fit,
        monotone: non_increasing || non_decreasing,
        non_increasing,
        expected_exponent: expected,
    }
}

/// Sequential scan; `taus` must hold at least five delays.
pub fn threshold_scan<P: SpikeProbe + ?Sized>(probe: &P, alpha: f64, taus: &[f64], cfg: &ThresholdConfig) -> Result<ScanResult> {
    if taus.len() < 5 {
        return Err(Error::Config(format!("a threshold scan needs at least 5 delays, got {}", taus.len())));
    }
    let points = taus.iter().map(|&tau| find_threshold(probe, tau, cfg)).collect::<Result<Vec<_>>>()?;
    Ok(summarize_scan(alpha, points))
}

/// `count` log-spaced delays from `tau_max` down to `tau_min`.
pub fn log_spaced_taus(tau_min: f64, tau_max: f64, count: usize) -> Result<Vec<f64>> {
    if !(tau_min > 0.0 && tau_max > tau_min) || count < 2 {
        return Err(Error::Config("need 0 < tau_min < tau_max and at least two delays".into()));
    }
    let (a, b) = (tau_max.ln(), tau_min.ln());
    Ok((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::sync::Arc;

    fn classical() -> FhnParams {
        FhnParams { alpha: 1.0, epsilon: 0.08, a: 0.7, b: 0.8, lambda: 0.0, tau: 1.0, i_ext: 0.5 }
    }

    #[test]
    fn segment_shape_checks() {
        assert!(HistorySegment::new(1.0, 0.1, 2, vec![0.0; 22]).is_ok());
        assert!(HistorySegment::new(1.0, 0.1, 2, vec![0.0; 20]).is_err());
        assert!(HistorySegment::new(1.0, 0.1, 2, vec![0.0; 21]).is_err());
    }

    #[test]
    fn frozen_dynamics_map_to_constant() {
        let zero = ProblemSpec::new(0.6, vec![0.0, 0.0], 1.0, Arc::new(|_t: f64, _x: &[f64], _d: &[f64], _m: &[f64], o: &mut [f64]| o.fill(0.0)))
            .with_memory(crate::fraccore::MemoryOperatorSpec::DiscreteDelay { tau: 1.0 });
        let values: Vec<f64> = (0..=10).flat_map(|i| [i as f64, -0.5 * i as f64]).collect();
        let phi = HistorySegment::new(1.0, 0.1, 2, values).unwrap();
        let out = poincare_map_problem(&phi, &zero, 3.0, &SolverConfig::new(0.1)).unwrap();
        for i in 0..out.nodes() {
            assert_eq!(out.node(i), &[10.0, -5.0]);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = FhnParams { i_ext: 0.0, ..classical() };
        let (v0, w0) = equilibrium(&p).unwrap().primary();
        let h = 0.01;
        let phi = HistorySegment::constant(&[v0, w0], 1.0, h).unwrap();
        for alpha in [1.0, 0.7] {
            let q = FhnParams { alpha, ..p };
            let out = poincare_map(&phi, &q, 5.0, &SolverConfig::new(h)).unwrap();
            assert!(out.sup_distance(&phi).unwrap() <= 10.0 * h);
        }
    }

    #[test]
    fn classical_map_is_a_semigroup() {
        let h = 0.01;
        let p = classical();
        let phi = HistorySegment::constant(&[0.5, 0.2], 1.0, h).unwrap();
        let cfg = SolverConfig::new(h);
        let twice = poincare_map(&poincare_map(&phi, &p, 3.0, &cfg).unwrap(), &p, 3.0, &cfg).unwrap();
        let once = poincare_map(&phi, &p, 6.0, &cfg).unwrap();
        assert!(twice.sup_distance(&once).unwrap() <= 1e-8);
    }

    #[test]
    fn map_horizon_must_be_a_grid_multiple() {
        let phi = HistorySegment::constant(&[0.0, 0.0], 1.0, 0.1).unwrap();
        assert!(poincare_map(&phi, &classical(), 2.05, &SolverConfig::new(0.1)).is_err());
        assert!(poincare_map(&phi, &classical(), 0.5, &SolverConfig::new(0.1)).is_err());
    }

    #[test]
    fn excitable_regime_has_no_cycle() {
        let p = FhnParams { i_ext: 0.0, ..classical() };
        let cfg = CycleConfig { initial: Some(HistoryFunction::Constant(vec![0.5, 0.0])), t_skip: 50.0, ..CycleConfig::default() };
        let r = find_cycle(&p, &cfg).unwrap();
        assert!(!r.found);
        assert!(r.amplitude <= 0.1);
    }

    #[test]
    fn crossings_of_sine() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.01).collect();
        let v: Vec<f64> = times.iter().map(|t| (t * 2.0 * core::f64::consts::PI / 4.0).sin()).collect();
        let c = upward_crossings(&times, &v);
        let period = (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64;
        assert!((period - 4.0).abs() < 1e-3);
    }

    fn traj_of(alpha_vals: impl Fn(f64) -> f64, n: usize, h: f64) -> Trajectory {
        let grid = UniformGrid::new(h, n, 0).unwrap();
        let states: Vec<f64> = (0..=n).map(|k| alpha_vals(k as f64 * h)).collect();
        Trajectory {
            grid,
            dim: 1,
            derivs: vec![0.0; n + 1],
            inner_iters: vec![0; n + 1],
            history: HistoryFunction::Constant(vec![states[0]]),
            history_states: vec![states[0]],
            states,
        }
    }

    #[test]
    fn holder_examples() {
        let c = traj_of(|_| 3.0, 100, 0.01);
        assert_eq!(holder_constant(&c, 0.5, 20).unwrap().observed, 0.0);
        let lin = traj_of(|t| t, 100, 0.01);
        assert!((holder_constant(&lin, 1.0, 20).unwrap().observed - 1.0).abs() < 1e-12);
        let n = 1000;
        let sq = traj_of(|t| t.sqrt(), n, 1.0 / n as f64);
        let est = holder_constant(&sq, 0.5, n).unwrap().observed;
        let mut brute = 0.0f64;
        for i in 0..=n {
            for j in i + 1..=n {
                let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                brute = brute.max((b.sqrt() - a.sqrt()) / (b - a).sqrt());
            }
        }
        assert!((est - brute).abs() < 1e-12);
        assert!(est <= 2f64.sqrt());
        assert!(holder_constant(&traj_of(|t| t, 5, 0.1), 0.5, 3).is_err());
    }

    struct PowerStub {
        c: f64,
        p: f64,
    }

    impl SpikeProbe for PowerStub {
        fn spikes(&self, tau: f64, i_ext: f64) -> Result<bool> {
            Ok(i_ext >= self.c * tau.powf(self.p))
        }
    }

    #[test]
    fn synthetic_power_law_is_recovered() {
        let taus = log_spaced_taus(0.01, 1.0, 8).unwrap();
        let r = threshold_scan(&PowerStub { c: 2.0, p: 0.3 }, 0.7, &taus, &ThresholdConfig::default()).unwrap();
        let fit = r.fit.unwrap();
        assert!((fit.p - 0.3).abs() < 1e-3 && fit.r2 > 0.9999);
        assert!((fit.p - 0.3).abs() < 1e-6);
        assert!(r.monotone && !r.non_increasing);
        for pt in &r.points {
            assert!(pt.bracket_width <= 10.0 * 2f64.powi(-40));
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let x = [0.1, 0.2, 0.4, 0.8, 1.6];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.45)).collect();
        let f = fit_power_law(&x, &y).unwrap();
        assert!((f.p + 0.45).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-12 && f.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn missing_bracket_is_marked() {
        let pt = find_threshold(&PowerStub { c: 100.0, p: 0.0 }, 0.5, &ThresholdConfig::default()).unwrap();
        assert_eq!(pt.i_th, None);
    }
}

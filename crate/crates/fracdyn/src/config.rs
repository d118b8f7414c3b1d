//! Run configuration: a TOML document with one section per concern.
//!
//! Every key has a default, so an empty document is valid. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use fracdyn_core::cycles::CycleConfig;
use fracdyn_core::fhn::FhnParams;
use fracdyn_core::fraccore::HistoryFunction;
use fracdyn_core::solver::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    #[default]
    Simulate,
    FhnAnalyze,
    Gronwall,
    VerifyUh,
    FindCycle,
    ScanThreshold,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::FhnAnalyze => "fhn-analyze",
            Subcommand::Gronwall => "gronwall",
            Subcommand::VerifyUh => "verify-uh",
            Subcommand::FindCycle => "find-cycle",
            Subcommand::ScanThreshold => "scan-threshold",
        }
    }
}

/// History on `[-τ, 0]`: a constant vector or per-component polynomial
/// coefficients in `θ` (lowest degree first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HistorySpec {
    Constant(Vec<f64>),
    Polynomial(Vec<Vec<f64>>),
}

impl HistorySpec {
    pub fn dim(&self) -> usize {
        match self {
            HistorySpec::Constant(v) => v.len(),
            HistorySpec::Polynomial(c) => c.len(),
        }
    }

    pub fn to_function(&self) -> HistoryFunction {
        match self {
            HistorySpec::Constant(v) => HistoryFunction::Constant(v.clone()),
            HistorySpec::Polynomial(c) => HistoryFunction::Polynomial(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub h: f64,
    pub implicit_tol: f64,
    pub implicit_max_iter: usize,
    pub damping: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let c = SolverConfig::new(0.01);
        SolverSection { h: c.h, implicit_tol: c.implicit_tol, implicit_max_iter: c.implicit_max_iter, damping: c.damping }
    }
}

impl SolverSection {
    pub fn to_config(&self) -> SolverConfig {
        SolverConfig { h: self.h, implicit_tol: self.implicit_tol, implicit_max_iter: self.implicit_max_iter, damping: self.damping }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    /// `D^α x = -λ x`.
    #[default]
    Relaxation,
    /// `D^α x = A x + c`.
    Linear,
    /// `D^α x = A x + B x(t - τ) + c`.
    LinearDelay,
    /// The delayed FHN model of the `[fhn]` section.
    Fhn,
}

/// Problem for `simulate` and `verify-uh`. Matrices are row-major; empty
/// `a`, `b`, `c` mean zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub model: Model,
    pub alpha: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lambda: f64,
    pub x0: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<HistorySpec>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            model: Model::Relaxation,
            alpha: 0.5,
            horizon: 1.0,
            lambda: 1.0,
            x0: vec![1.0],
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
            tau: 1.0,
            lipschitz: None,
            history: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FhnSection {
    pub alpha: f64,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub tau: f64,
    pub i_ext: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub history: HistorySpec,
}

impl Default for FhnSection {
    fn default() -> Self {
        FhnSection {
            alpha: 0.8,
            epsilon: 0.08,
            a: 0.7,
            b: 0.8,
            lambda: 0.0,
            tau: 1.0,
            i_ext: 0.0,
            horizon: 100.0,
            history: HistorySpec::Constant(vec![0.0, 0.0]),
        }
    }
}

impl FhnSection {
    pub fn params(&self) -> FhnParams {
        FhnParams {
            alpha: self.alpha,
            epsilon: self.epsilon,
            a: self.a,
            b: self.b,
            lambda: self.lambda,
            tau: self.tau,
            i_ext: self.i_ext,
        }
    }
}

/// Scalar Gronwall certificate; with `sample_h` the equality
/// `u = f_sup + ‖A‖ ∫ (t-s)^{α-1} u + ‖B‖ ∫ (t-s)^{β-1} u(s-τ)`, `u = phi_norm`
/// on `[-τ, 0]`, is solved and checked against the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GronwallSection {
    pub alpha: f64,
    pub beta: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub phi_norm: f64,
    pub f_sup: f64,
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_h: Option<f64>,
}

impl Default for GronwallSection {
    fn default() -> Self {
        GronwallSection {
            alpha: 0.5,
            beta: 0.5,
            norm_a: 1.0,
            norm_b: 0.0,
            horizon: 1.0,
            phi_norm: 1.0,
            f_sup: 1.0,
            tau: 0.5,
            sample_h: None,
        }
    }
}

/// `candidate` is a trajectory CSV; without `exact` the exact solution is
/// computed from the candidate's initial data. `epsilon` replaces the measured
/// residual (for hand-built candidates with a claimed defect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CycleSection {
    pub t_skip: f64,
    pub t_map: f64,
    pub cycle_tol: f64,
    pub amplitude_floor: f64,
    pub max_iter: usize,
    pub perturbation: f64,
    /// Start from `fhn.history` instead of the perturbed rest state.
    pub from_history: bool,
}

impl Default for CycleSection {
    fn default() -> Self {
        let c = CycleConfig::default();
        CycleSection {
            t_skip: c.t_skip,
            t_map: c.t_map,
            cycle_tol: c.cycle_tol,
            amplitude_floor: c.amplitude_floor,
            max_iter: c.max_iter,
            perturbation: c.perturbation,
            from_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_count: usize,
    pub spike_margin: f64,
    pub t_obs: f64,
    pub i_max: f64,
    pub i_start: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { tau_min: 0.05, tau_max: 1.0, tau_count: 5, spike_margin: 1.0, t_obs: 30.0, i_max: 5.0, i_start: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub output_dir: PathBuf,
    /// Seed for randomized generators.
    pub seed: u64,
    pub solver: SolverSection,
    pub problem: ProblemSection,
    pub fhn: FhnSection,
    pub gronwall: GronwallSection,
    pub verify: VerifySection,
    pub cycle: CycleSection,
    pub scan: ScanSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            subcommand: Subcommand::default(),
            output_dir: PathBuf::from("fracdyn-out"),
            seed: 0,
            solver: SolverSection::default(),
            problem: ProblemSection::default(),
            fhn: FhnSection::default(),
            gronwall: GronwallSection::default(),
            verify: VerifySection::default(),
            cycle: CycleSection::default(),
            scan: ScanSection::default(),
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn order(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("alpha must lie in (0,1], got {v}")))
    }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be non-negative and finite, got {v}")))
    }
}

fn finite(key: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(key, "values must be finite"))
    }
}

fn history(key: &str, h: &HistorySpec, dim: usize) -> Result<(), ConfigError> {
    if h.dim() != dim {
        return Err(invalid(key, format!("needs {dim} components, got {}", h.dim())));
    }
    match h {
        HistorySpec::Constant(v) => finite(key, v),
        HistorySpec::Polynomial(c) => c.iter().try_for_each(|row| finite(key, row)),
    }
}

impl RunConfig {
    /// Invariants of every section, and the input files of the selected
    /// subcommand.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        positive("solver.h", s.h)?;
        positive("solver.implicit_tol", s.implicit_tol)?;
        if s.implicit_max_iter == 0 {
            return Err(invalid("solver.implicit_max_iter", "must be at least 1"));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(invalid("solver.damping", format!("must lie in (0,1], got {}", s.damping)));
        }

        let p = &self.problem;
        order("problem.alpha", p.alpha)?;
        positive("problem.T", p.horizon)?;
        finite("problem.lambda", &[p.lambda])?;
        let n = p.x0.len();
        if n == 0 {
            return Err(invalid("problem.x0", "must not be empty"));
        }
        finite("problem.x0", &p.x0)?;
        for (key, m, len) in [("problem.a", &p.a, n * n), ("problem.b", &p.b, n * n), ("problem.c", &p.c, n)] {
            if !m.is_empty() && m.len() != len {
                return Err(invalid(key, format!("needs {len} entries for x0 of length {n}, got {}", m.len())));
            }
            finite(key, m)?;
        }
        if p.model == Model::Relaxation && n != 1 {
            return Err(invalid("problem.x0", "relaxation is scalar"));
        }
        if p.model == Model::LinearDelay {
            positive("problem.tau", p.tau)?;
        }
        if let Some(l) = p.lipschitz {
            non_negative("problem.lipschitz", l)?;
        }
        if let Some(h) = &p.history {
            history("problem.history", h, n)?;
        }

        let f = &self.fhn;
        order("fhn.alpha", f.alpha)?;
        positive("fhn.epsilon", f.epsilon)?;
        positive("fhn.b", f.b)?;
        positive("fhn.tau", f.tau)?;
        positive("fhn.T", f.horizon)?;
        finite("fhn", &[f.a, f.lambda, f.i_ext])?;
        history("fhn.history", &f.history, 2)?;

        let g = &self.gronwall;
        order("gronwall.alpha", g.alpha)?;
        order("gronwall.beta", g.beta)?;
        non_negative("gronwall.norm_a", g.norm_a)?;
        non_negative("gronwall.norm_b", g.norm_b)?;
        positive("gronwall.T", g.horizon)?;
        non_negative("gronwall.phi_norm", g.phi_norm)?;
        non_negative("gronwall.f_sup", g.f_sup)?;
        positive("gronwall.tau", g.tau)?;
        if let Some(h) = g.sample_h {
            positive("gronwall.sample_h", h)?;
        }

        let v = &self.verify;
        if let Some(e) = v.epsilon {
            non_negative("verify.epsilon", e)?;
        }
        if self.subcommand == Subcommand::VerifyUh && v.candidate.is_none() {
            return Err(invalid("verify.candidate", "verify-uh needs a candidate trajectory"));
        }
        for (key, path) in [("verify.candidate", &v.candidate), ("verify.exact", &v.exact)] {
            if let Some(path) = path {
                if self.subcommand == Subcommand::VerifyUh && !path.is_file() {
                    return Err(invalid(key, format!("file {} does not exist", path.display())));
                }
            }
        }

        let c = &self.cycle;
        non_negative("cycle.t_skip", c.t_skip)?;
        positive("cycle.t_map", c.t_map)?;
        positive("cycle.cycle_tol", c.cycle_tol)?;
        non_negative("cycle.amplitude_floor", c.amplitude_floor)?;
        non_negative("cycle.perturbation", c.perturbation)?;
        if c.max_iter == 0 {
            return Err(invalid("cycle.max_iter", "must be at least 1"));
        }

        let sc = &self.scan;
        positive("scan.tau_min", sc.tau_min)?;
        if !(sc.tau_max > sc.tau_min) || !sc.tau_max.is_finite() {
            return Err(invalid("scan.tau_max", format!("must exceed tau_min = {}", sc.tau_min)));
        }
        if sc.tau_count < 5 {
            return Err(invalid("scan.tau_count", format!("needs at least 5 delays, got {}", sc.tau_count)));
        }
        positive("scan.spike_margin", sc.spike_margin)?;
        positive("scan.t_obs", sc.t_obs)?;
        positive("scan.i_max", sc.i_max)?;
        positive("scan.i_start", sc.i_start)?;
        Ok(())
    }

    /// Canonical TOML text; parses back to an equal configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn cycle_config(&self) -> CycleConfig {
        let c = &self.cycle;
        CycleConfig {
            h: self.solver.h,
            t_skip: c.t_skip,
            t_map: c.t_map,
            cycle_tol: c.cycle_tol,
            amplitude_floor: c.amplitude_floor,
            max_iter: c.max_iter,
            initial: c.from_history.then(|| self.fhn.history.to_function()),
            perturbation: c.perturbation,
            solver: self.solver.to_config(),
        }
    }
}

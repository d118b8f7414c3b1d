//! Subcommand dispatch. Every subcommand writes its artifacts and a manifest
//! into `output_dir`; identical configurations give byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::sync::Arc;

use fracdyn_core::cycles::{find_cycle, log_spaced_taus, FhnSpikeProbe, ThresholdConfig};
use fracdyn_core::fhn::{
    annulus, characteristic_roots, equilibrium, fhn_problem, lyapunov_series, theorem_conditions, FhnParams,
    SearchBox,
};
use fracdyn_core::fraccore::{HistoryFunction, UniformGrid};
use fracdyn_core::gronwall::{certify_bound, compute_bound_constant, solve_volterra_equality, GronwallInput, Verdict, VolterraEquality};
use fracdyn_core::models::{relaxation, LinearSystem};
use fracdyn_core::solver::{solve_on_grid, ProblemSpec, SolverConfig};
use fracdyn_core::stability::{exact_from, verify_uh_against, UhVerdict};

use crate::config::{Model, RunConfig, Subcommand};
use crate::csvio::{self, fmt_f64, CsvError};
use crate::manifest::{self, Manifest};
use crate::scan::{parallel_threshold_scan, thread_count};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] fracdyn_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Solver(fracdyn_core::Error::NonConvergence { .. } | fracdyn_core::Error::BlowUp { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Key-value report, also written to the output directory.
    pub report: String,
    /// Diagnostics for stderr (grid adjustments).
    pub notes: Vec<String>,
    pub verdict_failed: bool,
    pub manifest: Manifest,
    pub files: Vec<String>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        if self.verdict_failed {
            3
        } else {
            0
        }
    }
}

#[derive(Default)]
struct Report(String);

impl Report {
    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.0, "{key}={value}");
    }

    fn num(&mut self, key: &str, value: f64) {
        self.put(key, fmt_f64(value));
    }
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Artifacts<'_> {
    fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(&mut self, name: &str, f: F) -> Result<(), RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        f(&mut w).map_err(CsvError::from)?;
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    notes: Vec<String>,
    manifest: Manifest,
    out: Artifacts<'a>,
    verdict_failed: bool,
}

impl Ctx<'_> {
    /// Aligns the requested step to `delay` and records the outcome.
    fn align(&mut self, horizon: f64, delay: Option<f64>) -> Result<UniformGrid, RunError> {
        let al = UniformGrid::aligned(self.cfg.solver.h, horizon, delay)?;
        self.record_h(al.requested_h, al.grid.h, al.adjusted);
        Ok(al.grid)
    }

    fn record_h(&mut self, requested: f64, h: f64, adjusted: bool) {
        self.manifest.set("requested_h", fmt_f64(requested));
        self.manifest.set("adjusted_h", fmt_f64(h));
        self.manifest.set("h_adjusted", adjusted);
        if adjusted {
            self.notes.push(format!("h adjusted from {requested} to {h} so that the delay is a whole number of steps"));
        }
    }

    fn solver(&self, h: f64) -> SolverConfig {
        SolverConfig { h, ..self.cfg.solver.to_config() }
    }
}

/// Builds the `[problem]` (or `[fhn]` for `model = "fhn"`) problem.
pub fn build_problem(cfg: &RunConfig) -> Result<ProblemSpec, RunError> {
    let p = &cfg.problem;
    let n = p.x0.len();
    let or_zero = |v: &Vec<f64>, len: usize| if v.is_empty() { vec![0.0; len] } else { v.clone() };
    let history = p.history.as_ref().map(|h| h.to_function());
    let problem = match p.model {
        Model::Relaxation => {
            let mut spec = relaxation(p.alpha, p.lambda, p.x0[0], p.horizon);
            if let Some(h) = history {
                spec = spec.with_history(h);
            }
            spec
        }
        Model::Linear | Model::LinearDelay => LinearSystem {
            alpha: p.alpha,
            a: or_zero(&p.a, n * n),
            b: (p.model == Model::LinearDelay).then(|| (or_zero(&p.b, n * n), p.tau)),
            c: or_zero(&p.c, n),
            x0: p.x0.clone(),
            horizon: p.horizon,
        }
        .problem(history)?,
        Model::Fhn => fhn_problem(&cfg.fhn.params(), cfg.fhn.history.to_function(), cfg.fhn.horizon)?,
    };
    Ok(match p.lipschitz {
        Some(l) => problem.with_lipschitz(l),
        None => problem,
    })
}

/// Executes the configured subcommand.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    let dir = cfg.output_dir.as_path();
    std::fs::create_dir_all(dir)?;
    let mut manifest = Manifest::new();
    manifest.set("fracdyn_version", env!("CARGO_PKG_VERSION"));
    manifest.set("fracdyn_core_version", fracdyn_core::VERSION);
    manifest.set("subcommand", cfg.subcommand.name());
    manifest.set("config_sha256", manifest::sha256_hex(cfg.to_toml().as_bytes()));
    let mut ctx = Ctx { cfg, notes: Vec::new(), manifest, out: Artifacts { dir, files: Vec::new() }, verdict_failed: false };

    let report = match cfg.subcommand {
        Subcommand::Simulate => simulate(&mut ctx)?,
        Subcommand::FhnAnalyze => fhn_analyze(&mut ctx)?,
        Subcommand::Gronwall => gronwall(&mut ctx)?,
        Subcommand::VerifyUh => verify_uh(&mut ctx)?,
        Subcommand::FindCycle => cycle(&mut ctx)?,
        Subcommand::ScanThreshold => scan_threshold(&mut ctx)?,
    };
    for name in ctx.out.files.clone() {
        ctx.manifest.hash_file(dir, &name)?;
    }
    std::fs::write(dir.join(manifest::FILE_NAME), ctx.manifest.render())?;
    Ok(RunSummary {
        report: report.0,
        notes: ctx.notes,
        verdict_failed: ctx.verdict_failed,
        manifest: ctx.manifest,
        files: ctx.out.files,
    })
}

fn simulate(ctx: &mut Ctx) -> Result<Report, RunError> {
    let problem = build_problem(ctx.cfg)?;
    let grid = ctx.align(problem.horizon, problem.memory.delay())?;
    let traj = solve_on_grid(&problem, &ctx.solver(grid.h), grid)?;
    csvio::save_trajectory(&traj, &ctx.out.dir.join("trajectory.csv"))?;
    ctx.out.files.push("trajectory.csv".into());

    let mut r = Report::default();
    r.put("model", format!("{:?}", ctx.cfg.problem.model).to_lowercase());
    r.num("h", grid.h);
    r.put("n_steps", grid.n_steps);
    r.put("delay_steps", grid.delay_steps);
    r.put("max_inner_iters", traj.inner_iters.iter().max().copied().unwrap_or(0));
    let last = traj.last_state();
    for (i, v) in last.iter().enumerate() {
        r.num(&format!("x_{}(T)", i + 1), *v);
    }
    if ctx.cfg.problem.model == Model::Fhn {
        let params = ctx.cfg.fhn.params();
        let series = lyapunov_series(&traj, &params)?;
        ctx.out.csv("lyapunov.csv", |w| {
            w.write_record(["t", "V", "envelope"])?;
            for (k, (v, e)) in series.v.iter().zip(&series.envelope).enumerate() {
                w.write_record([fmt_f64(traj.time(k)), fmt_f64(*v), fmt_f64(*e)])?;
            }
            Ok(())
        })?;
        r.num("ultimate_v", series.ultimate_bound);
        r.put("envelope_violation", series.first_violation.map_or("none".to_string(), |k| k.to_string()));
        r.put("settles_below_1.1", series.settles_below(1.1).map_or("never".to_string(), |k| fmt_f64(traj.time(k))));
    }
    ctx.out.write("summary.txt", &r.0)?;
    Ok(r)
}

fn fhn_analyze(ctx: &mut Ctx) -> Result<Report, RunError> {
    let params: FhnParams = ctx.cfg.fhn.params();
    let cond = theorem_conditions(&params)?;
    let eq = equilibrium(&params)?;
    let (v0, w0) = eq.primary();
    let chars = characteristic_roots(&params, v0, &SearchBox::default())?;

    let mut r = Report::default();
    r.num("lambda0", cond.lambda0);
    r.num("epsilon0", cond.epsilon0);
    r.put("lambda_ok", cond.lambda_ok);
    r.put("epsilon_ok", cond.epsilon_ok);
    r.put("subthreshold_ok", cond.subthreshold_ok);
    r.put("all_satisfied", cond.all_satisfied);
    r.put("degenerate_threshold", cond.degenerate_threshold);
    r.put("equilibria", eq.points.len());
    r.put("unique_equilibrium", eq.unique);
    r.num("v0", v0);
    r.num("w0", w0);
    match annulus(&params) {
        Ok(ann) => {
            r.num("delta", ann.delta);
            r.num("c1", ann.c1);
            r.num("c2", ann.c2);
            r.num("m", ann.m);
            r.num("r1", ann.r1);
            r.num("r2", ann.r2);
            r.num("ultimate_v", ann.ultimate_v());
        }
        Err(e) => r.put("annulus", format!("unavailable ({e})")),
    }
    r.num("char_c", chars.c);
    r.put("roots", chars.roots.len());
    if let Some(root) = chars.rightmost {
        r.num("rightmost_re", root.s.re);
        r.num("rightmost_im", root.s.im);
    }
    r.put("unstable", chars.unstable);
    ctx.out.csv("roots.csv", |w| {
        w.write_record(["re", "im", "residual"])?;
        for root in &chars.roots {
            w.write_record([fmt_f64(root.s.re), fmt_f64(root.s.im), fmt_f64(root.residual)])?;
        }
        Ok(())
    })?;
    ctx.out.write("conditions.txt", &r.0)?;
    Ok(r)
}

fn gronwall(ctx: &mut Ctx) -> Result<Report, RunError> {
    let g = &ctx.cfg.gronwall;
    let input = GronwallInput {
        alpha: g.alpha,
        beta: g.beta,
        norm_a: g.norm_a,
        norm_b: g.norm_b,
        horizon: g.horizon,
        phi_norm: g.phi_norm,
        f_sup: g.f_sup,
    };
    let cert = compute_bound_constant(&input)?;
    let mut r = Report::default();
    r.num("m", cert.m);
    r.num("h_star", cert.h_star);
    r.put("n_intervals", cert.n_intervals);
    r.num("q", cert.q);
    r.num("bound", cert.bound(&input));

    if let Some(sample_h) = g.sample_h {
        let al = UniformGrid::aligned(sample_h, g.horizon, Some(g.tau))?;
        ctx.record_h(al.requested_h, al.grid.h, al.adjusted);
        let f_sup = g.f_sup;
        let eq = VolterraEquality {
            alpha: g.alpha,
            beta: g.beta,
            dim: 1,
            a: vec![g.norm_a],
            b: vec![g.norm_b],
            tau: g.tau,
            f: Arc::new(move |_t, out: &mut [f64]| out[0] = f_sup),
            history: HistoryFunction::Constant(vec![g.phi_norm]),
            horizon: g.horizon,
        };
        let sol = solve_volterra_equality(&eq, al.grid.h)?;
        let check = certify_bound(&input, &sol.abs_samples(), false)?;
        let verdict = match check.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::HypothesisNotSatisfied => "HYPOTHESIS_NOT_SATISFIED",
        };
        ctx.verdict_failed = check.verdict == Verdict::Fail;
        r.put("verdict", verdict);
        r.num("worst_margin", check.worst_margin);
        r.num("worst_t", sol.grid.time(check.worst_index));
        ctx.out.csv("bound.csv", |w| {
            w.write_record(["t", "u", "bound"])?;
            for (k, (u, b)) in sol.u.iter().zip(&check.bound).enumerate() {
                w.write_record([fmt_f64(sol.grid.time(k)), fmt_f64(*u), fmt_f64(*b)])?;
            }
            Ok(())
        })?;
    }
    ctx.out.write("certificate.txt", &r.0)?;
    Ok(r)
}

fn verify_uh(ctx: &mut Ctx) -> Result<Report, RunError> {
    let v = &ctx.cfg.verify;
    let candidate_path = v.candidate.as_ref().ok_or_else(|| RunError::Usage("verify.candidate is required".into()))?;
    let y = csvio::load_trajectory(candidate_path)?;
    let problem = build_problem(ctx.cfg)?;
    if problem.memory.delay().map_or(0, |tau| (tau / y.grid.h).round() as usize) != y.grid.delay_steps {
        return Err(RunError::Usage("candidate grid does not match the problem delay".into()));
    }
    ctx.record_h(y.grid.h, y.grid.h, false);
    let exact = match &v.exact {
        Some(path) => csvio::load_trajectory(path)?,
        None => {
            let exact = exact_from(&y, &problem, &ctx.solver(y.grid.h))?;
            csvio::save_trajectory(&exact, &ctx.out.dir.join("exact.csv"))?;
            ctx.out.files.push("exact.csv".into());
            exact
        }
    };
    let rep = verify_uh_against(&y, &exact, &problem, v.epsilon)?;
    let verdict = match rep.verdict {
        UhVerdict::Pass => "PASS",
        UhVerdict::Fail => "FAIL",
    };
    ctx.verdict_failed = rep.verdict == UhVerdict::Fail;
    let mut r = Report::default();
    r.put("verdict", verdict);
    r.num("epsilon", rep.epsilon);
    r.num("c", rep.c);
    r.num("max_deviation", rep.max_deviation);
    r.num("bound", rep.bound);
    r.num("margin", rep.margin);
    ctx.out.csv("uh.csv", |w| {
        w.write_record(["verdict", "epsilon", "c", "max_deviation", "bound", "margin"])?;
        w.write_record([
            verdict.to_string(),
            fmt_f64(rep.epsilon),
            fmt_f64(rep.c),
            fmt_f64(rep.max_deviation),
            fmt_f64(rep.bound),
            fmt_f64(rep.margin),
        ])
    })?;
    ctx.out.write("uh.txt", &r.0)?;
    Ok(r)
}

fn cycle(ctx: &mut Ctx) -> Result<Report, RunError> {
    let params = ctx.cfg.fhn.params();
    let cc = ctx.cfg.cycle_config();
    ctx.align(params.tau, Some(params.tau))?;
    let rep = find_cycle(&params, &cc)?;
    let mut r = Report::default();
    r.put("found", rep.found);
    r.put("period", rep.period.map_or("none".to_string(), fmt_f64));
    r.num("poincare_residual", rep.poincare_residual);
    r.num("amplitude", rep.amplitude);
    r.put("in_annulus", rep.in_annulus);
    r.num("radius_min", rep.radius_range.0);
    r.num("radius_max", rep.radius_range.1);
    r.num("transient_discarded", rep.transient_discarded);
    r.put("iterations", rep.iterations);
    if let Some(d) = &rep.diagnostic {
        r.put("diagnostic", d);
    }
    let seg = &rep.segment;
    let m = seg.nodes() - 1;
    ctx.out.csv("segment.csv", |w| {
        let mut header = vec!["theta".to_string()];
        header.extend((1..=seg.dim).map(|i| format!("x_{i}")));
        w.write_record(&header)?;
        for j in 0..=m {
            let mut row = vec![fmt_f64((j as f64 - m as f64) * seg.h)];
            row.extend(seg.node(j).iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        Ok(())
    })?;
    ctx.out.write("cycle.txt", &r.0)?;
    Ok(r)
}

fn scan_threshold(ctx: &mut Ctx) -> Result<Report, RunError> {
    let s = &ctx.cfg.scan;
    let base = ctx.cfg.fhn.params();
    let taus = log_spaced_taus(s.tau_min, s.tau_max, s.tau_count)?;
    let probe = FhnSpikeProbe {
        base,
        h: ctx.cfg.solver.h,
        t_obs: s.t_obs,
        spike_margin: s.spike_margin,
        solver: ctx.cfg.solver.to_config(),
    };
    let tcfg = ThresholdConfig { i_max: s.i_max, i_start: s.i_start, ..ThresholdConfig::default() };
    for &tau in &taus {
        let al = UniformGrid::aligned(ctx.cfg.solver.h, s.t_obs, Some(tau))?;
        if al.adjusted {
            ctx.notes.push(format!("tau={tau}: h adjusted from {} to {}", al.requested_h, al.grid.h));
        }
    }
    ctx.manifest.set("requested_h", fmt_f64(ctx.cfg.solver.h));
    ctx.manifest.set("adjusted_h", "per-delay");
    let result = parallel_threshold_scan(&probe, base.alpha, &taus, &tcfg, thread_count())?;
    ctx.out.csv("thresholds.csv", |w| {
        w.write_record(["tau", "i_th", "bracket_width"])?;
        for p in &result.points {
            w.write_record([fmt_f64(p.tau), p.i_th.map_or(String::new(), fmt_f64), fmt_f64(p.bracket_width)])?;
        }
        Ok(())
    })?;
    let mut r = Report::default();
    r.num("alpha", base.alpha);
    r.put("defined_points", result.points.iter().filter(|p| p.i_th.is_some()).count());
    match result.fit {
        Some(fit) => {
            r.num("p", fit.p);
            r.num("stderr", fit.stderr);
            r.num("r2", fit.r2);
            r.num("prefactor", fit.prefactor);
        }
        None => r.put("p", "none"),
    }
    r.num("expected_exponent", result.expected_exponent);
    r.put("deviation", result.deviation.map_or("none".to_string(), fmt_f64));
    r.put("monotone", result.monotone);
    r.put("non_increasing", result.non_increasing);
    ctx.out.write("fit.txt", &r.0)?;
    Ok(r)
}

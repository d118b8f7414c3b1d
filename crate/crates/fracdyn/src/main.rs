use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use fracdyn::config::{load_config, RunConfig, Subcommand};

/// Fractional delay systems: simulation, certificates and FHN analysis.
#[derive(Parser)]
#[command(name = "fracdyn", version)]
struct Cli {
    /// Print the default configuration and exit.
    #[arg(long)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply to missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Solve the `[problem]` system and write its trajectory.
    Simulate(Common),
    /// Conditions, equilibria, annulus and characteristic roots of `[fhn]`.
    FhnAnalyze(Common),
    /// Gronwall constant for `[gronwall]`, optionally checked on a sampled solution.
    Gronwall(Common),
    /// Ulam-Hyers check of a candidate trajectory against `[problem]`.
    VerifyUh {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidate: Option<PathBuf>,
        #[arg(long)]
        exact: Option<PathBuf>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Limit-cycle search for `[fhn]`.
    FindCycle(Common),
    /// Excitability threshold over log-spaced delays.
    ScanThreshold {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tau_min: Option<f64>,
        #[arg(long)]
        tau_max: Option<f64>,
        #[arg(long)]
        tau_count: Option<usize>,
        #[arg(long)]
        spike_margin: Option<f64>,
        #[arg(long)]
        t_obs: Option<f64>,
        #[arg(long)]
        i_max: Option<f64>,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(command) = cli.command else {
        if cli.print_config {
            print!("{}", RunConfig::default().to_toml());
            return ExitCode::SUCCESS;
        }
        return usage("a subcommand is required (see --help)");
    };

    let (sub, common) = match &command {
        Command::Simulate(c) => (Subcommand::Simulate, c.clone()),
        Command::FhnAnalyze(c) => (Subcommand::FhnAnalyze, c.clone()),
        Command::Gronwall(c) => (Subcommand::Gronwall, c.clone()),
        Command::VerifyUh { common, .. } => (Subcommand::VerifyUh, common.clone()),
        Command::FindCycle(c) => (Subcommand::FindCycle, c.clone()),
        Command::ScanThreshold { common, .. } => (Subcommand::ScanThreshold, common.clone()),
    };
    let mut cfg = match &common.config {
        Some(path) => match load_config(path) {
            Ok(c) => c,
            Err(e) => return usage(e),
        },
        None => RunConfig::default(),
    };
    cfg.subcommand = sub;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    match command {
        Command::VerifyUh { candidate, exact, epsilon, .. } => {
            cfg.verify.candidate = candidate.or(cfg.verify.candidate);
            cfg.verify.exact = exact.or(cfg.verify.exact);
            cfg.verify.epsilon = epsilon.or(cfg.verify.epsilon);
        }
        Command::ScanThreshold { alpha, tau_min, tau_max, tau_count, spike_margin, t_obs, i_max, .. } => {
            let s = &mut cfg.scan;
            cfg.fhn.alpha = alpha.unwrap_or(cfg.fhn.alpha);
            s.tau_min = tau_min.unwrap_or(s.tau_min);
            s.tau_max = tau_max.unwrap_or(s.tau_max);
            s.tau_count = tau_count.unwrap_or(s.tau_count);
            s.spike_margin = spike_margin.unwrap_or(s.spike_margin);
            s.t_obs = t_obs.unwrap_or(s.t_obs);
            s.i_max = i_max.unwrap_or(s.i_max);
        }
        _ => {}
    }
    if let Err(e) = cfg.validate() {
        return usage(e);
    }
    if common.print_config || cli.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }

    match fracdyn::run(&cfg) {
        Ok(summary) => {
            for note in &summary.notes {
                eprintln!("note: {note}");
            }
            print!("{}", summary.report);
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

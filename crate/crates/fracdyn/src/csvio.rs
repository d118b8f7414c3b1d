//! Trajectory CSV.
//!
//! Layout:
//!
//! ```text
//! # fracdyn-trajectory h=<h> n_steps=<n> delay_steps=<m> dim=<d>
//! t,x_1,..,x_d,d_1,..,d_d,inner_iters
//! ```
//!
//! followed by `m + 1` history rows on `[-τ, 0]` (empty derivative and
//! iteration fields) and `n + 1` solution rows. Floats carry 17 significant
//! digits, so a written trajectory parses back bit-identically.

use std::io::{self, Write};
use std::path::Path;

use fracdyn_core::fraccore::{HistoryFunction, UniformGrid};
use fracdyn_core::solver::Trajectory;

const MAGIC: &str = "# fracdyn-trajectory";

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn format_err(line: usize, message: impl Into<String>) -> CsvError {
    CsvError::Format { line, message: message.into() }
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, out: W) -> Result<(), CsvError> {
    let mut out = io::BufWriter::new(out);
    let g = &traj.grid;
    let d = traj.dim;
    writeln!(out, "{MAGIC} h={} n_steps={} delay_steps={} dim={d}", fmt_f64(g.h), g.n_steps, g.delay_steps)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("d_{i}")));
    header.push("inner_iters".into());
    w.write_record(&header)?;

    let m = g.delay_steps;
    for (j, x) in traj.history_states.chunks(d).enumerate() {
        let mut row = vec![fmt_f64(g.time_signed(j as isize - m as isize))];
        row.extend(x.iter().map(|v| fmt_f64(*v)));
        row.extend(std::iter::repeat_n(String::new(), d + 1));
        w.write_record(&row)?;
    }
    for k in 0..traj.n_nodes() {
        let mut row = vec![fmt_f64(traj.time(k))];
        row.extend(traj.state(k).iter().map(|v| fmt_f64(*v)));
        row.extend(traj.deriv(k).iter().map(|v| fmt_f64(*v)));
        row.push(traj.inner_iters[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<(), CsvError> {
    write_trajectory(traj, std::fs::File::create(path)?)
}

fn meta(fields: &[(&str, &str)], key: &str) -> Result<String, CsvError> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
        .ok_or_else(|| format_err(1, format!("grid metadata lacks {key}")))
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, CsvError> {
    s.trim().parse().map_err(|_| format_err(line, format!("cannot parse {what} from {s:?}")))
}

pub fn parse_trajectory(text: &str) -> Result<Trajectory, CsvError> {
    let first = text.lines().next().unwrap_or("");
    let rest = first
        .strip_prefix(MAGIC)
        .ok_or_else(|| format_err(1, format!("expected a '{MAGIC}' metadata line")))?;
    let fields: Vec<(&str, &str)> = rest.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
    let h: f64 = num(&meta(&fields, "h")?, 1, "h")?;
    let n_steps: usize = num(&meta(&fields, "n_steps")?, 1, "n_steps")?;
    let delay_steps: usize = num(&meta(&fields, "delay_steps")?, 1, "delay_steps")?;
    let dim: usize = num(&meta(&fields, "dim")?, 1, "dim")?;
    let grid = UniformGrid::new(h, n_steps, delay_steps).map_err(|e| format_err(1, e.to_string()))?;
    if dim == 0 {
        return Err(format_err(1, "dim must be positive"));
    }

    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    if header.len() != 2 * dim + 2 || &header[0] != "t" || &header[2 * dim + 1] != "inner_iters" {
        return Err(format_err(2, format!("header does not match dim = {dim}")));
    }

    let n_hist = delay_steps + 1;
    let mut history_states = Vec::with_capacity(n_hist * dim);
    let mut states = Vec::with_capacity((n_steps + 1) * dim);
    let mut derivs = Vec::with_capacity((n_steps + 1) * dim);
    let mut inner_iters = Vec::with_capacity(n_steps + 1);
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = r + 3;
        if rec.len() != 2 * dim + 2 {
            return Err(format_err(line, format!("expected {} fields, got {}", 2 * dim + 2, rec.len())));
        }
        let x = (1..=dim).map(|i| num::<f64>(&rec[i], line, "state"));
        if r < n_hist {
            for v in x {
                history_states.push(v?);
            }
        } else {
            for v in x {
                states.push(v?);
            }
            for i in dim + 1..=2 * dim {
                derivs.push(num::<f64>(&rec[i], line, "derivative")?);
            }
            inner_iters.push(num::<u32>(&rec[2 * dim + 1], line, "inner_iters")?);
        }
    }
    if history_states.len() != n_hist * dim || inner_iters.len() != n_steps + 1 {
        return Err(format_err(0, "row count does not match the grid metadata"));
    }
    let history = if delay_steps == 0 {
        HistoryFunction::Constant(states[..dim].to_vec())
    } else {
        HistoryFunction::Sampled { tau: grid.delay(), dim, values: history_states.clone() }
    };
    Ok(Trajectory { grid, dim, states, derivs, inner_iters, history, history_states })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory, CsvError> {
    parse_trajectory(&std::fs::read_to_string(path)?)
}

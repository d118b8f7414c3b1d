//! Parallel threshold scan. Each delay is an independent bisection, so the
//! result does not depend on the number of threads.

use fracdyn_core::cycles::{find_threshold, summarize_scan, ScanResult, SpikeProbe, ThresholdConfig};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "FRACDYN_THREADS";

/// Thread cap from `FRACDYN_THREADS`, else the number of logical processors.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn parallel_threshold_scan<P: SpikeProbe + ?Sized>(
    probe: &P,
    alpha: f64,
    taus: &[f64],
    cfg: &ThresholdConfig,
    threads: usize,
) -> fracdyn_core::Result<ScanResult> {
    if taus.len() < 5 {
        return Err(fracdyn_core::Error::Config(format!("a threshold scan needs at least 5 delays, got {}", taus.len())));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| fracdyn_core::Error::Config(format!("cannot build thread pool: {e}")))?;
    let points = pool.install(|| {
        taus.par_iter().map(|&tau| find_threshold(probe, tau, cfg)).collect::<fracdyn_core::Result<Vec<_>>>()
    })?;
    Ok(summarize_scan(alpha, points))
}

//! Numerics for implicit Caputo-fractional differential systems with delay
//! and distributed memory.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides:
//!
//! - [`mlf`]: gamma and Mittag-Leffler functions.
//! - [`fraccore`]: uniform grids, Riemann-Liouville product-quadrature weights,
//!   the L1 Caputo derivative and the memory-operator family.
//! - [`solver`]: a fractional Adams predictor-corrector where the implicit
//!   unknown at each node is the Caputo derivative value itself.
//! - [`gronwall`]: explicit constants for the delayed fractional
//!   Gronwall-Wendroff inequality and a sampled-function certifier.
//! - [`stability`]: Ulam-Hyers residual measurement and verification.
//! - [`fhn`]: the delayed fractional FitzHugh-Nagumo model and its analysis.
//! - [`cycles`]: Poincare maps on history segments, limit-cycle search,
//!   Holder diagnostics and the excitability-threshold scan.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cycles;
mod error;
pub mod fhn;
pub mod fraccore;
pub mod gronwall;
pub mod mlf;
pub mod models;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use core::fmt;

use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of a special function or operator.
    Domain(String),
    /// Mismatched lengths, grids or dimensions.
    Shape(String),
    /// A problem or configuration that violates its invariants.
    InvalidProblem(String),
    /// Missing configuration such as an undeclared Lipschitz constant.
    Config(String),
    /// Delayed lookup reached before the start of the stored history.
    HistoryUnderflow { index: isize },
    /// The implicit inner iteration did not converge at `step`.
    NonConvergence { step: usize, residual: f64, iterations: usize },
    /// The right-hand side produced NaN or infinity at `step`.
    BlowUp { step: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::InvalidProblem(msg) => write!(f, "invalid problem: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::HistoryUnderflow { index } => {
                write!(f, "history underflow: node {index} lies before the stored history")
            }
            Error::NonConvergence { step, residual, iterations } => write!(
                f,
                "implicit solve did not converge at step {step} after {iterations} iterations (residual {residual:e})"
            ),
            Error::BlowUp { step } => write!(f, "non-finite right-hand side at step {step}"),
        }
    }
}

impl core::error::Error for Error {}

//! Error type shared by the simulation and analysis entry points.

use alloc::string::String;
use core::fmt;

/// Errors produced by configuration checks, queueing formulas, and the
/// stationary-distribution solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument or configuration value is outside its documented domain.
    /// The message names the offending parameter.
    InvalidArgument(String),
    /// A queueing formula was evaluated at or past its stability limit.
    Saturated {
        /// First class whose cumulative utilization reaches 1.
        class: usize,
        /// The offending cumulative utilization.
        utilization: f64,
    },
    /// An iterative solver stopped before reaching its tolerance.
    NoConvergence { iterations: u64, residual: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Saturated { class, utilization } => write!(
                f,
                "queue saturated: cumulative utilization {utilization} at class {class}"
            ),
            Error::NoConvergence { iterations, residual } => write!(
                f,
                "solver did not converge after {iterations} iterations (residual {residual:e})"
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

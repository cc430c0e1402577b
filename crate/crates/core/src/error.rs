use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A model or configuration value violates its invariant.
    InvalidInput(String),
    /// The cost function failed a convexity or normalisation check.
    NonConvexCost(String),
    /// `f(0) ≤ 0 ≤ f(π)` does not hold, which means the next-period functional
    /// left `[0, π]`.
    NotBracketing { state: f64, low: f64, high: f64 },
    /// The inner fixed-point iteration did not settle.
    NoConvergence { t: usize, residuals: Vec<f64> },
    /// A requested price lies outside the attainable range of a functional.
    OutOfRange { value: f64, min: f64, max: f64 },
    /// The enumeration tree exceeds its node or work budget.
    TreeTooLarge { nodes: u128, budget: u128 },
    /// The finite-difference grid violates the transport CFL bound.
    UnstableGrid { suggested_time_steps: usize },
    /// The finite-difference solution escaped `[-δ, π + δ]`.
    Instability { t: f64, value: f64, suggested_time_steps: usize },
    /// Too few paths for a statistical diagnostic.
    InsufficientPaths { got: usize, required: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::NonConvexCost(msg) => write!(f, "cost function rejected: {msg}"),
            Error::NotBracketing { state, low, high } => write!(
                f,
                "bisection not bracketed at g = {state}: f(0) = {low}, f(pi) = {high}"
            ),
            Error::NoConvergence { t, residuals } => write!(
                f,
                "fixed-point iteration at t = {t} did not converge after {} iterations (last residual {:e})",
                residuals.len(),
                residuals.last().copied().unwrap_or(f64::NAN)
            ),
            Error::OutOfRange { value, min, max } => {
                write!(f, "price {value} outside attainable range [{min}, {max}]")
            }
            Error::TreeTooLarge { nodes, budget } => {
                write!(f, "tree needs {nodes} evaluations, budget is {budget}")
            }
            Error::UnstableGrid { suggested_time_steps } => write!(
                f,
                "transport CFL bound violated; use at least {suggested_time_steps} time steps"
            ),
            Error::Instability { t, value, suggested_time_steps } => write!(
                f,
                "solution value {value} left the admissible band at t = {t}; try {suggested_time_steps} time steps"
            ),
            Error::InsufficientPaths { got, required } => {
                write!(f, "{got} paths supplied, at least {required} required")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

//! Risk-neutral pricing of emission allowances.
//!
//! The allowance spot price is modelled as `A_t = α_t(G_t)`, where `G_t` is the
//! expected allowance shortage net of abatement triggered so far and `α_t` is a
//! deterministic non-decreasing price functional. The functionals are obtained
//! backwards from the digital compliance payoff `α_T(g) = π·1[g ≥ 0]` through the
//! fixed-point equation
//!
//! ```text
//! α_t(g) = E[ α_{t+1}(g − c(α_t(g)) + ε_{t+1}) ]
//! ```
//!
//! where `c` is the abatement volume function and `ε` the shortage innovation.
//!
//! This crate is `no_std` (it needs `alloc`) and contains only the numerics:
//!
//! * [`model`] – penalty, noise, abatement and cost functions;
//! * [`functional`] – piecewise-linear price functionals and their Gaussian expectations;
//! * [`fixedpoint`] – the bisection-based reference recursion;
//! * [`tree`] – exhaustive enumeration for small discrete-noise trees;
//! * [`lsmc`] – least-squares Monte Carlo with hut-function bases;
//! * [`pricing`] – path simulation, martingale diagnostics and European calls;
//! * [`pde`] – the continuous-time finite-difference counterpart.
//!
//! File formats, configuration and the command-line front end live in the
//! `allowance` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod exec;
pub mod fixedpoint;
pub mod functional;
pub mod isotonic;
pub mod lsmc;
pub mod model;
pub mod normal;
pub mod pde;
pub mod pricing;
pub mod tree;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use functional::{Interpolant, PriceFunctional, Profile};
pub use model::{AbatementFunction, CostFunction, NoiseModel, PricingConfig};

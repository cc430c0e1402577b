//! Reference construction of the price functionals.
//!
//! For every state `g` on a grid, `α_t(g)` is the unique root of
//!
//! ```text
//! f^g(a) = a − E[α_{t+1}(g − c(a) + ε)],   a ∈ [0, π],
//! ```
//!
//! which is strictly increasing in `a` because `α_{t+1}` is non-decreasing and
//! `c` is non-decreasing. Bisection started from `[0, π]` therefore always
//! converges. Expectations are evaluated in closed form (normal noise) or by
//! exact summation (discrete noise).

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::functional::{PriceFunctional, Quadrature};
use crate::model::{AbatementFunction, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Bisection stops once the bracket is narrower than `tolerance·π`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub quadrature: Quadrature,
    /// State grid on which each `α_t` is tabulated.
    pub grid: Vec<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-8,
            max_iterations: 60,
            quadrature: Quadrature::Exact,
            grid: equidistant(-7.5, 7.5, 601),
        }
    }
}

impl SolverSettings {
    pub fn with_grid(grid: Vec<f64>) -> Self {
        SolverSettings { grid, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid(format!("bisection tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(invalid("bisection needs at least one iteration"));
        }
        if let Quadrature::GaussHermite(gh) = &self.quadrature {
            if gh.nodes.len() < 2 {
                return Err(invalid("quadrature needs at least two nodes"));
            }
        }
        if self.grid.len() < 2 || self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("solver grid must be strictly increasing with at least two points"));
        }
        Ok(())
    }
}

/// `n` equally spaced points from `lo` to `hi` inclusive.
pub fn equidistant(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + i as f64 * step }).collect()
        }
    }
}

/// `E[next(shift + ε)]`.
pub fn expectation_of_shifted(next: &PriceFunctional, shift: f64, noise: &NoiseModel, rule: &Quadrature) -> f64 {
    next.profile().expect(shift, noise, rule)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
}

/// Solves `a = E[next(g − c(a) + ε)]` on `[0, π]`, with π the penalty of `next`.
///
/// On a tie `f^g(a) = 0` the upper end of the bracket moves down.
pub fn bisect_alpha(
    g: f64,
    next: &PriceFunctional,
    abate: &AbatementFunction,
    noise: &NoiseModel,
    settings: &SolverSettings,
) -> Result<Bisection> {
    let cap = next.penalty();
    let rule = &settings.quadrature;
    let f = |a: f64| a - expectation_of_shifted(next, g - abate.volume(a), noise, rule);
    // Probability weights summing to 1 ± ulp can push an expectation of a
    // [0, π]-valued function just outside [0, π].
    let slack = 64.0 * f64::EPSILON * cap;

    if abate.vanishes_below(cap) {
        // f^g(a) = a − E[next(g + ε)]: the root is the expectation itself.
        let root = expectation_of_shifted(next, g, noise, rule);
        if !(-slack..=cap + slack).contains(&root) {
            return Err(Error::NotBracketing { state: g, low: -root, high: cap - root });
        }
        return Ok(Bisection { root: root.clamp(0.0, cap), iterations: 0 });
    }

    let (f_lo, f_hi) = (f(0.0), f(cap));
    if !(f_lo <= slack && f_hi >= -slack) {
        return Err(Error::NotBracketing { state: g, low: f_lo, high: f_hi });
    }
    let tol = settings.tolerance * cap;
    let (mut lo, mut hi) = (0.0, cap);
    let mut iterations = 0;
    while hi - lo > tol && iterations < settings.max_iterations {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Ok(Bisection { root: 0.5 * (lo + hi), iterations })
}

/// `α_0, …, α_T` with `α_T = terminal`, tabulated on `settings.grid`.
pub fn backward_recursion(
    terminal: &PriceFunctional,
    abate: &AbatementFunction,
    noise: &NoiseModel,
    settings: &SolverSettings,
    horizon: usize,
) -> Result<Vec<PriceFunctional>> {
    backward_recursion_with(terminal, abate, noise, settings, horizon, &Sequential)
}

/// As [`backward_recursion`], fanning the grid points of each period out over `exec`.
pub fn backward_recursion_with<E: Executor>(
    terminal: &PriceFunctional,
    abate: &AbatementFunction,
    noise: &NoiseModel,
    settings: &SolverSettings,
    horizon: usize,
    exec: &E,
) -> Result<Vec<PriceFunctional>> {
    settings.validate()?;
    noise.validate()?;
    if horizon == 0 {
        return Err(invalid("horizon must be at least one period"));
    }
    let penalty = terminal.penalty();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(terminal.clone());
    for _ in 0..horizon {
        let next = out.last().expect("non-empty");
        let roots = exec.map(settings.grid.len(), |i| bisect_alpha(settings.grid[i], next, abate, noise, settings));
        let values = roots.into_iter().map(|r| r.map(|b| b.root)).collect::<Result<Vec<_>>>()?;
        out.push(PriceFunctional::from_values(settings.grid.clone(), values, penalty)?);
    }
    out.reverse();
    Ok(out)
}

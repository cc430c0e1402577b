//! Continuous-time counterpart: the price surface `α(t, g)` solving
//!
//! ```text
//! ∂_t α − c(α) ∂_g α + ½ σ_t² ∂_gg α = 0,   α(T, g) = π·1[g ≥ 0]
//! ```
//!
//! by backward time stepping with an explicit upwind transport step and a
//! θ-scheme diffusion step, plus Euler simulation of the state SDE
//! `dG = σ_t dW − c(α(t, G)) dt`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::functional::PriceFunctional;
use crate::model::AbatementFunction;
use crate::pricing::PathState;

/// Piecewise-constant `σ_t`: `levels[i]` applies on `[breaks[i-1], breaks[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilitySchedule {
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl VolatilitySchedule {
    pub fn constant(sigma: f64) -> Result<Self> {
        Self::piecewise(Vec::new(), vec![sigma])
    }

    pub fn piecewise(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breaks.len() + 1 {
            return Err(invalid("need one more volatility level than break points"));
        }
        if breaks.windows(2).any(|w| !(w[0] < w[1])) || breaks.iter().any(|b| !b.is_finite()) {
            return Err(invalid("volatility break points must be finite and increasing"));
        }
        if levels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("volatility levels must be finite and non-negative"));
        }
        Ok(VolatilitySchedule { breaks, levels })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.levels[self.breaks.partition_point(|&b| b <= t)]
    }

    pub fn is_positive(&self) -> bool {
        self.levels.iter().all(|&s| s > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSpec {
    pub horizon: f64,
    pub volatility: VolatilitySchedule,
    pub abatement: AbatementFunction,
}

impl DiffusionSpec {
    pub fn new(horizon: f64, volatility: VolatilitySchedule, abatement: AbatementFunction) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(DiffusionSpec { horizon, volatility, abatement })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrid {
    pub time_steps: usize,
    pub nodes: usize,
    pub g_min: f64,
    pub g_max: f64,
    /// Diffusion implicitness; 0.5 is Crank–Nicolson.
    pub theta: f64,
    /// Leading fully implicit steps that damp the terminal kink.
    pub rannacher_steps: usize,
    /// Start from the cell average of the digital payoff instead of its
    /// point values.
    pub smooth_terminal: bool,
}

impl PdeGrid {
    pub fn new(time_steps: usize, nodes: usize, g_min: f64, g_max: f64) -> Self {
        PdeGrid { time_steps, nodes, g_min, g_max, theta: 0.5, rannacher_steps: 4, smooth_terminal: true }
    }

    pub fn spacing(&self) -> f64 {
        (self.g_max - self.g_min) / (self.nodes - 1) as f64
    }

    pub fn states(&self) -> Vec<f64> {
        crate::fixedpoint::equidistant(self.g_min, self.g_max, self.nodes)
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.g_min <= lo && hi <= self.g_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_steps == 0 || self.nodes < 3 {
            return Err(invalid("need at least one time step and three nodes"));
        }
        if !(self.g_min.is_finite() && self.g_max.is_finite() && self.g_min < self.g_max) {
            return Err(invalid("state range must be finite and non-empty"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        Ok(())
    }
}

/// `α` on the grid; `values[k][i] = α(times[k], states[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub penalty: f64,
    /// The terminal slice is `π·1[g ≥ 0]` and is evaluated exactly.
    pub digital_terminal: bool,
}

impl Surface {
    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Bilinear interpolation, clamped in `g`. At the horizon the exact
    /// digital payoff is returned.
    pub fn eval(&self, t: f64, g: f64) -> f64 {
        let last = self.times.len() - 1;
        if t >= self.times[last] && self.digital_terminal {
            return if g >= 0.0 { self.penalty } else { 0.0 };
        }
        let t = t.clamp(0.0, self.times[last]);
        let k = (self.times.partition_point(|&s| s <= t) - 1).min(last - 1);
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        let a = self.interpolate(k, g);
        if w == 0.0 {
            a
        } else {
            (1.0 - w) * a + w * self.interpolate(k + 1, g)
        }
    }

    fn interpolate(&self, k: usize, g: f64) -> f64 {
        let z = &self.states;
        let v = &self.values[k];
        let n = z.len();
        if g <= z[0] {
            return v[0];
        }
        if g >= z[n - 1] {
            return v[n - 1];
        }
        let i = z.partition_point(|&x| x <= g) - 1;
        let w = (g - z[i]) / (z[i + 1] - z[i]);
        v[i] + w * (v[i + 1] - v[i])
    }

    /// The slice at `times[k]` as a price functional.
    pub fn functional(&self, k: usize) -> Result<PriceFunctional> {
        if k + 1 == self.times.len() && self.digital_terminal {
            return Ok(PriceFunctional::digital(self.penalty));
        }
        PriceFunctional::from_values(self.states.clone(), self.values[k].clone(), self.penalty)
    }

    /// Index of the slice closest to `t`.
    pub fn slice_at(&self, t: f64) -> usize {
        let dt = self.horizon() / (self.times.len() - 1) as f64;
        libm::round((t / dt).clamp(0.0, (self.times.len() - 1) as f64)) as usize
    }
}

/// Values may leave `[0, π]` by at most this fraction of π before the
/// solution is declared unstable.
pub const BAND_TOLERANCE: f64 = 1e-6;

fn thomas(sub: f64, diag: f64, sup: f64, rhs: &mut [f64], scratch: &mut Vec<f64>) {
    // Constant-coefficient tridiagonal solve in place.
    let n = rhs.len();
    scratch.clear();
    scratch.resize(n, 0.0);
    let mut denom = diag;
    scratch[0] = sup / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag - sub * scratch[i - 1];
        scratch[i] = sup / denom;
        rhs[i] = (rhs[i] - sub * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

pub fn solve_pde(spec: &DiffusionSpec, grid: &PdeGrid, penalty: f64) -> Result<Surface> {
    check(spec, grid, penalty)?;
    let dg = grid.spacing();
    let states = grid.states();
    let digital: Vec<f64> = states.iter().map(|&g| if g >= 0.0 { penalty } else { 0.0 }).collect();
    let start = if grid.smooth_terminal {
        states
            .iter()
            .map(|&g| {
                let (lo, hi) = (g - 0.5 * dg, g + 0.5 * dg);
                penalty * ((hi.max(0.0) - lo.max(0.0)) / dg)
            })
            .collect()
    } else {
        digital.clone()
    };
    march(spec, grid, start, digital, penalty, true)
}

/// Backward solve from arbitrary terminal node values in `[0, π]`; the ends
/// are held at 0 and π. The stored terminal slice is `terminal` itself.
pub fn solve_pde_from(spec: &DiffusionSpec, grid: &PdeGrid, terminal: &[f64], penalty: f64) -> Result<Surface> {
    check(spec, grid, penalty)?;
    if terminal.len() != grid.nodes || terminal.iter().any(|&v| !(0.0..=penalty).contains(&v)) {
        return Err(invalid("terminal data must give a value in [0, penalty] at every node"));
    }
    march(spec, grid, terminal.to_vec(), terminal.to_vec(), penalty, false)
}

fn check(spec: &DiffusionSpec, grid: &PdeGrid, penalty: f64) -> Result<()> {
    grid.validate()?;
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(invalid(format!("penalty must be positive, got {penalty}")));
    }
    if !spec.volatility.is_positive() {
        return Err(invalid("volatility must be positive on the whole horizon"));
    }
    let dt = spec.horizon / grid.time_steps as f64;
    let dg = grid.spacing();
    let c_max = spec.abatement.volume(penalty);
    if c_max * dt > dg {
        let needed = libm::ceil(spec.horizon * c_max / dg) as usize;
        return Err(Error::UnstableGrid { suggested_time_steps: needed.max(grid.time_steps + 1) });
    }
    Ok(())
}

fn march(
    spec: &DiffusionSpec,
    grid: &PdeGrid,
    mut u: Vec<f64>,
    terminal: Vec<f64>,
    penalty: f64,
    digital_terminal: bool,
) -> Result<Surface> {
    let n = grid.nodes;
    let dg = grid.spacing();
    let dt = spec.horizon / grid.time_steps as f64;
    u[0] = 0.0;
    u[n - 1] = penalty;
    let states = grid.states();

    let mut values = vec![Vec::new(); grid.time_steps + 1];
    values[grid.time_steps] = terminal;
    let band = BAND_TOLERANCE * penalty;
    let ratio = dt / dg;
    let mut flux = vec![0.0; n];
    let mut rhs = vec![0.0; n - 2];
    let mut scratch = Vec::with_capacity(n - 2);
    for step in 0..grid.time_steps {
        let k = grid.time_steps - step - 1;
        let t_mid = (k as f64 + 0.5) * dt;
        let theta = if step < grid.rannacher_steps { 1.0 } else { grid.theta };

        // Transport: information travels towards larger g as t decreases.
        for (f, &x) in flux.iter_mut().zip(&u) {
            *f = spec.abatement.integral(x);
        }
        for i in (1..n - 1).rev() {
            u[i] -= ratio * (flux[i] - flux[i - 1]);
        }

        // Diffusion with Dirichlet ends.
        let sigma = spec.volatility.at(t_mid);
        let r = 0.5 * sigma * sigma * dt / (dg * dg);
        for i in 1..n - 1 {
            let lap = u[i + 1] - 2.0 * u[i] + u[i - 1];
            rhs[i - 1] = u[i] + (1.0 - theta) * r * lap;
        }
        rhs[0] += theta * r * u[0];
        rhs[n - 3] += theta * r * u[n - 1];
        thomas(-theta * r, 1.0 + 2.0 * theta * r, -theta * r, &mut rhs, &mut scratch);
        u[1..n - 1].copy_from_slice(&rhs);

        if let Some(&bad) = u.iter().find(|&&x| !(x >= -band && x <= penalty + band)) {
            return Err(Error::Instability {
                t: k as f64 * dt,
                value: bad,
                suggested_time_steps: 2 * grid.time_steps,
            });
        }
        values[k] = u.clone();
    }
    let times = (0..=grid.time_steps).map(|k| k as f64 * dt).collect();
    Ok(Surface { times, states, values, penalty, digital_terminal })
}

/// Euler–Maruyama paths of `G` on `n_steps` equal steps, with `A_t` read off
/// the surface. Path `i` uses ChaCha stream `i` under `seed`.
pub fn simulate_sde(
    surface: &Surface,
    spec: &DiffusionSpec,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    initial: f64,
) -> Result<Vec<PathState>> {
    simulate_sde_with(surface, spec, n_paths, n_steps, seed, initial, &Sequential)
}

pub fn simulate_sde_with<E: Executor>(
    surface: &Surface,
    spec: &DiffusionSpec,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    initial: f64,
    exec: &E,
) -> Result<Vec<PathState>> {
    if n_steps == 0 {
        return Err(invalid("need at least one time step"));
    }
    let dt = spec.horizon / n_steps as f64;
    let root = libm::sqrt(dt);
    Ok(exec.map(n_paths, |p| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let mut states = Vec::with_capacity(n_steps + 1);
        let mut prices = Vec::with_capacity(n_steps + 1);
        let mut g = initial;
        for k in 0..=n_steps {
            let t = if k == n_steps { spec.horizon } else { k as f64 * dt };
            let a = surface.eval(t, g);
            states.push(g);
            prices.push(a);
            if k < n_steps {
                let xi: f64 = StandardNormal.sample(&mut rng);
                g += spec.volatility.at(t) * root * xi - spec.abatement.volume(a) * dt;
            }
        }
        PathState { states, prices }
    }))
}

/// One row of a grid-halving study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub time_steps: usize,
    pub nodes: usize,
    /// Max difference at `t = 0` to the previous (coarser) level on the
    /// coarsest level's nodes inside the probe window; NaN on the first row.
    pub difference: f64,
    /// `log2` of the ratio of successive differences; NaN until defined.
    pub order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Time,
    Space,
    Both,
}

/// Solves on `levels` successively halved grids and reports self-convergence
/// at `t = 0` for states in `[probe_lo, probe_hi]`.
pub fn grid_halving(
    spec: &DiffusionSpec,
    base: &PdeGrid,
    penalty: f64,
    levels: usize,
    refine: Refinement,
    probe: (f64, f64),
) -> Result<Vec<ConvergenceRow>> {
    let probes: Vec<f64> = base.states().into_iter().filter(|&g| g >= probe.0 && g <= probe.1).collect();
    if probes.is_empty() {
        return Err(invalid("probe window contains no grid nodes"));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    let mut previous: Option<Vec<f64>> = None;
    let mut grid = base.clone();
    for level in 0..levels {
        if level > 0 {
            if matches!(refine, Refinement::Time | Refinement::Both) {
                grid.time_steps *= 2;
            }
            if matches!(refine, Refinement::Space | Refinement::Both) {
                grid.nodes = 2 * grid.nodes - 1;
            }
        }
        let surface = solve_pde(spec, &grid, penalty)?;
        let current: Vec<f64> = probes.iter().map(|&g| surface.eval(0.0, g)).collect();
        let difference = match &previous {
            Some(p) => p.iter().zip(&current).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max),
            None => f64::NAN,
        };
        let order = match rows.last() {
            Some(r) if r.difference.is_finite() => libm::log2(r.difference / difference),
            _ => f64::NAN,
        };
        rows.push(ConvergenceRow { time_steps: grid.time_steps, nodes: grid.nodes, difference, order });
        previous = Some(current);
    }
    Ok(rows)
}

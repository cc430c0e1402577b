//! Path simulation, martingale diagnostics and European calls on the
//! allowance price.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::exec::{Executor, Sequential};
use crate::functional::{Interpolant, PriceFunctional, Profile, Quadrature};
use crate::lsmc::{LsmcEngine, Projection};
use crate::model::{AbatementFunction, NoiseModel};

/// One trajectory: `states[t] = G_t`, `prices[t] = A_t = α_t(G_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathState {
    pub states: Vec<f64>,
    pub prices: Vec<f64>,
}

/// Simulates `G_{t+1} = G_t − c(A_t) + ε_{t+1}` with `A_t = α_t(G_t)` from
/// `G_0 = initial`. Path `i` draws from its own ChaCha stream `i` under `seed`.
pub fn simulate_paths(
    alphas: &[PriceFunctional],
    abate: &AbatementFunction,
    noise: &NoiseModel,
    n_paths: usize,
    seed: u64,
    initial: f64,
) -> Result<Vec<PathState>> {
    simulate_paths_with(alphas, abate, noise, n_paths, seed, initial, &Sequential)
}

pub fn simulate_paths_with<E: Executor>(
    alphas: &[PriceFunctional],
    abate: &AbatementFunction,
    noise: &NoiseModel,
    n_paths: usize,
    seed: u64,
    initial: f64,
    exec: &E,
) -> Result<Vec<PathState>> {
    if alphas.len() < 2 {
        return Err(invalid("need price functionals for t = 0..T with T >= 1"));
    }
    noise.validate()?;
    let horizon = alphas.len() - 1;
    Ok(exec.map(n_paths, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut states = Vec::with_capacity(horizon + 1);
        let mut prices = Vec::with_capacity(horizon + 1);
        let mut g = initial;
        for (t, alpha) in alphas.iter().enumerate() {
            let a = alpha.evaluate(g);
            states.push(g);
            prices.push(a);
            if t < horizon {
                g = g - abate.volume(a) + noise.sample(&mut rng);
            }
        }
        PathState { states, prices }
    }))
}

pub const MIN_DIAGNOSTIC_PATHS: usize = 10_000;
pub const FLAG_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticSettings {
    /// Equal-count bins per date.
    pub buckets: usize,
    /// Smallest mean increment, in price units, worth flagging. Prices read
    /// off a discretized surface are martingales only up to its accuracy.
    pub resolution: f64,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        DiagnosticSettings { buckets: 20, resolution: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    pub state_low: f64,
    pub state_high: f64,
    pub count: usize,
    pub mean_increment: f64,
    pub std_error: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: usize,
    pub buckets: Vec<BucketReport>,
}

impl StepReport {
    pub fn flagged(&self) -> bool {
        self.buckets.iter().any(|b| b.flagged)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub steps: Vec<StepReport>,
    pub initial_mean: f64,
    pub terminal_mean: f64,
    /// Standard error of `mean(A_T − A_0)`.
    pub terminal_std_error: f64,
    /// Fraction of paths ending at the penalty.
    pub terminal_shortage_fraction: f64,
    /// Every terminal price is exactly 0 or the penalty.
    pub terminal_digital: bool,
}

impl MartingaleReport {
    pub fn flagged_steps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.flagged()).map(|s| s.t).collect()
    }

    pub fn any_flag(&self) -> bool {
        self.steps.iter().any(StepReport::flagged)
    }

    /// `|mean(A_T) − mean(A_0)|` in standard errors.
    pub fn terminal_z(&self) -> f64 {
        let d = (self.terminal_mean - self.initial_mean).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.terminal_std_error
        }
    }
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (mean, libm::sqrt(var / n as f64), n)
}

/// Groups paths into equal-count bins by `G_t` and tests whether the mean of
/// `A_{t+1} − A_t` in each bin differs from zero by more than four standard
/// errors (and by more than the resolution). When every `A_{t+1}` is 0 or the penalty the
/// standard error uses the Bernoulli variance `A_t(π − A_t)` implied by the
/// null rather than the sample variance.
pub fn martingale_diagnostic(
    paths: &[PathState],
    penalty: f64,
    settings: &DiagnosticSettings,
) -> Result<MartingaleReport> {
    let buckets = settings.buckets;
    if paths.len() < MIN_DIAGNOSTIC_PATHS {
        return Err(Error::InsufficientPaths { got: paths.len(), required: MIN_DIAGNOSTIC_PATHS });
    }
    if buckets == 0 {
        return Err(invalid("need at least one bucket"));
    }
    let len = paths[0].prices.len();
    if len < 2 || paths.iter().any(|p| p.prices.len() != len || p.states.len() != len) {
        return Err(invalid("paths must share a horizon of at least one period"));
    }
    let mut steps = Vec::with_capacity(len - 1);
    let mut order: Vec<usize> = (0..paths.len()).collect();
    for t in 0..len - 1 {
        order.sort_by(|&a, &b| paths[a].states[t].total_cmp(&paths[b].states[t]).then(a.cmp(&b)));
        let digital_next = paths.iter().all(|p| p.prices[t + 1] == 0.0 || p.prices[t + 1] == penalty);
        let mut reports = Vec::with_capacity(buckets);
        for b in 0..buckets {
            let lo = b * paths.len() / buckets;
            let hi = (b + 1) * paths.len() / buckets;
            if lo == hi {
                continue;
            }
            let idx = &order[lo..hi];
            let (mean, mut se, count) = mean_and_se(idx.iter().map(|&i| paths[i].prices[t + 1] - paths[i].prices[t]));
            if digital_next {
                // A_{t+1} ∈ {0, π} with mean A_t under the null: the variance is known,
                // and the sample variance collapses in tail buckets where no jump is seen.
                let var = idx.iter().map(|&i| paths[i].prices[t] * (penalty - paths[i].prices[t])).sum::<f64>();
                se = libm::sqrt(var.max(0.0)) / count as f64;
            }
            reports.push(BucketReport {
                state_low: paths[idx[0]].states[t],
                state_high: paths[idx[idx.len() - 1]].states[t],
                count,
                mean_increment: mean,
                std_error: se,
                flagged: mean.abs() > FLAG_THRESHOLD * se && mean.abs() > settings.resolution,
            });
        }
        steps.push(StepReport { t, buckets: reports });
    }
    let last = len - 1;
    let (terminal_mean, _, _) = mean_and_se(paths.iter().map(|p| p.prices[last]));
    let (initial_mean, _, _) = mean_and_se(paths.iter().map(|p| p.prices[0]));
    let (_, terminal_std_error, _) = mean_and_se(paths.iter().map(|p| p.prices[last] - p.prices[0]));
    let shortage = paths.iter().filter(|p| p.prices[last] == penalty).count();
    Ok(MartingaleReport {
        steps,
        initial_mean,
        terminal_mean,
        terminal_std_error,
        terminal_shortage_fraction: shortage as f64 / paths.len() as f64,
        terminal_digital: paths.iter().all(|p| p.prices[last] == 0.0 || p.prices[last] == penalty),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub state: f64,
    /// Length of the interval of states that map to the requested price
    /// (restricted to the knot range); zero on strictly increasing stretches.
    pub width: f64,
}

/// A state `g` with `α(g) = a`. On a flat stretch the midpoint of the level
/// set (clipped to the knot range) is returned.
pub fn invert_alpha(f: &PriceFunctional, a: f64) -> Result<Inversion> {
    let curve = f.curve().ok_or_else(|| invalid("the digital terminal price cannot be inverted"))?;
    let (z, v) = (curve.knots(), curve.values());
    let (min, max) = (curve.min_value(), curve.max_value());
    let slack = 1e-12 * f.penalty();
    if !(a >= min - slack && a <= max + slack) {
        return Err(Error::OutOfRange { value: a, min, max });
    }
    let a = a.clamp(min, max);
    let n = z.len();
    // Leftmost state with α ≥ a.
    let i = v.partition_point(|&x| x < a);
    let left = if i == 0 {
        z[0]
    } else if v[i] == a {
        z[i]
    } else {
        z[i] - (v[i] - a) / (v[i] - v[i - 1]) * (z[i] - z[i - 1])
    };
    // Rightmost state with α ≤ a.
    let j = v.partition_point(|&x| x <= a);
    let right = if j == n {
        z[n - 1]
    } else {
        let j = j - 1;
        z[j] + (a - v[j]) / (v[j + 1] - v[j]) * (z[j + 1] - z[j])
    };
    Ok(Inversion { state: 0.5 * (left + right), width: right - left })
}

/// European call on the allowance price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallSpec {
    pub maturity: usize,
    pub strike: f64,
}

/// Values at knots of `g ↦ E[payoff(g − shift(g) + ε)]`.
pub trait ConditionalExpectation {
    fn expect(&self, payoff: &Profile, shift: &dyn Fn(f64) -> f64) -> Result<(Interpolant, Option<Projection>)>;

    /// Standard error at `x` of an estimate returned by `expect`.
    fn standard_error(&self, _projection: &Projection, _x: f64) -> f64 {
        0.0
    }
}

/// Least-squares projection on the engine's hut basis and sample.
impl ConditionalExpectation for LsmcEngine {
    fn expect(&self, payoff: &Profile, shift: &dyn Fn(f64) -> f64) -> Result<(Interpolant, Option<Projection>)> {
        let s = self.sample();
        let targets: Vec<f64> =
            s.states.iter().zip(&s.innovations).map(|(&g, &e)| payoff.eval(g - shift(g) + e)).collect();
        let projection = crate::lsmc::project(s, self.matrix(), &targets)?;
        Ok((self.curve(&projection.coefficients), Some(projection)))
    }

    fn standard_error(&self, projection: &Projection, x: f64) -> f64 {
        projection.standard_error_at(self.matrix(), x)
    }
}

/// Exact expectation at every point of a state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExpectation {
    pub grid: Vec<f64>,
    pub noise: NoiseModel,
    pub quadrature: Quadrature,
}

impl ConditionalExpectation for GridExpectation {
    fn expect(&self, payoff: &Profile, shift: &dyn Fn(f64) -> f64) -> Result<(Interpolant, Option<Projection>)> {
        let values =
            self.grid.iter().map(|&g| payoff.expect(g - shift(g), &self.noise, &self.quadrature)).collect();
        Ok((Interpolant::new(self.grid.clone(), values)?, None))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallValuation {
    pub price: f64,
    /// State recovered from the spot price.
    pub state: f64,
    pub inversion_width: f64,
    /// Regression standard error of the final projection at `state`; zero
    /// for exact operators and for the closed-form identities.
    pub std_error: f64,
    /// Option value functions `f^τ_u` for `u = t_now, …, τ`.
    pub surface: Vec<(usize, Interpolant)>,
}

/// Values a call by backward conditional expectations of the payoff
/// `(α_τ − K)⁺` along the state dynamics, then reads the value off at the
/// state implied by the current spot.
///
/// When the strike lies outside the range of `α_τ` the payoff is either zero
/// or affine in the martingale `A_τ`, and the price is returned in closed form.
pub fn price_european_call<Op: ConditionalExpectation + ?Sized>(
    alphas: &[PriceFunctional],
    abate: &AbatementFunction,
    op: &Op,
    spec: CallSpec,
    t_now: usize,
    a_now: f64,
) -> Result<CallValuation> {
    let horizon = alphas.len().checked_sub(1).ok_or_else(|| invalid("no price functionals"))?;
    let tau = spec.maturity;
    if tau == 0 || tau > horizon {
        return Err(invalid(format!("maturity {tau} outside 1..={horizon}")));
    }
    if !(spec.strike.is_finite() && spec.strike >= 0.0) {
        return Err(invalid(format!("strike must be non-negative, got {}", spec.strike)));
    }
    if t_now > tau {
        return Err(invalid(format!("valuation time {t_now} is after maturity {tau}")));
    }
    let strike = spec.strike;
    if t_now == tau {
        let (min, max) = (alphas[tau].min_value(), alphas[tau].max_value());
        if !(a_now >= min && a_now <= max) {
            return Err(Error::OutOfRange { value: a_now, min, max });
        }
        return Ok(CallValuation {
            price: (a_now - strike).max(0.0),
            state: f64::NAN,
            inversion_width: f64::NAN,
            std_error: 0.0,
            surface: Vec::new(),
        });
    }
    let inversion = invert_alpha(&alphas[t_now], a_now)?;
    let target = &alphas[tau];
    let knots: Vec<f64> = match alphas[t_now].curve() {
        Some(c) => c.knots().to_vec(),
        None => unreachable!("inversion succeeded on a curve"),
    };

    let closed_form = |value: &dyn Fn(usize, f64) -> f64, price: f64| -> Result<CallValuation> {
        let mut surface = Vec::with_capacity(tau - t_now + 1);
        for u in t_now..=tau {
            let vals = knots.iter().map(|&g| value(u, g)).collect();
            surface.push((u, Interpolant::new(knots.clone(), vals)?));
        }
        Ok(CallValuation { price, state: inversion.state, inversion_width: inversion.width, std_error: 0.0, surface })
    };
    if strike >= target.max_value() {
        return closed_form(&|_, _| 0.0, 0.0);
    }
    if strike <= target.min_value() {
        return closed_form(&|u, g| alphas[u].evaluate(g) - strike, a_now - strike);
    }

    let mut payoff = match target.profile() {
        Profile::Step { level } => Profile::Step { level: (level - strike).max(0.0) },
        Profile::Linear(curve) => Profile::Linear(curve.call_payoff(strike)),
    };
    let mut surface = Vec::with_capacity(tau - t_now + 1);
    if let Profile::Linear(c) = &payoff {
        surface.push((tau, c.clone()));
    }
    let mut last_projection = None;
    for u in (t_now + 1..=tau).rev() {
        // Abatement over (u−1, u] is driven by the price at u−1.
        let alpha_prev = &alphas[u - 1];
        let shift = |g: f64| abate.volume(alpha_prev.evaluate(g));
        let (curve, projection) = op.expect(&payoff, &shift)?;
        let curve = curve.map_values(|v| v.max(0.0));
        surface.push((u - 1, curve.clone()));
        payoff = Profile::Linear(curve);
        last_projection = projection;
    }
    surface.reverse();
    let price = payoff.eval(inversion.state);
    let std_error = last_projection.map_or(0.0, |p| op.standard_error(&p, inversion.state));
    Ok(CallValuation { price, state: inversion.state, inversion_width: inversion.width, std_error, surface })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixedpoint::{backward_recursion, equidistant, SolverSettings};
    use crate::tree::exact_tree_oracle;
    use alloc::vec;

    fn baseline_abatement() -> AbatementFunction {
        AbatementFunction::power(0.1, 0.5).unwrap().in_units_of(100.0)
    }

    fn reference(horizon: usize) -> (Vec<PriceFunctional>, NoiseModel) {
        let noise = NoiseModel::normal(0.5, 1.0).unwrap();
        let alphas =
            backward_recursion(&PriceFunctional::digital(1.0), &baseline_abatement(), &noise, &Default::default(), horizon)
                .unwrap();
        (alphas, noise)
    }

    #[test]
    fn paths_are_reproducible_and_start_at_initial_state() {
        let (alphas, noise) = reference(3);
        let a = simulate_paths(&alphas, &baseline_abatement(), &noise, 50, 7, -1.0).unwrap();
        let b = simulate_paths(&alphas, &baseline_abatement(), &noise, 50, 7, -1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.states[0] == -1.0 && p.prices.len() == 4));
        assert_ne!(a[0].states[1], a[1].states[1]);
        let c = simulate_paths(&alphas, &baseline_abatement(), &noise, 50, 8, -1.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn diagnostic_requires_enough_paths() {
        let (alphas, noise) = reference(1);
        let paths = simulate_paths(&alphas, &baseline_abatement(), &noise, 100, 1, 0.0).unwrap();
        assert!(matches!(
            martingale_diagnostic(&paths, 1.0, &Default::default()),
            Err(Error::InsufficientPaths { got: 100, required: MIN_DIAGNOSTIC_PATHS })
        ));
    }

    #[test]
    fn reference_prices_pass_the_diagnostic() {
        let (alphas, noise) = reference(4);
        let paths = simulate_paths(&alphas, &baseline_abatement(), &noise, 20_000, 3, -1.0).unwrap();
        let report = martingale_diagnostic(&paths, 1.0, &Default::default()).unwrap();
        assert!(report.terminal_digital);
        assert_eq!(report.steps.len(), 4);
        assert!(report.steps.iter().all(|s| s.buckets.len() == 20));
        assert!(!report.any_flag(), "{:?}", report.flagged_steps());
        assert!(report.terminal_z() < 4.0);
    }

    #[test]
    fn wrong_prices_are_flagged() {
        let (mut alphas, noise) = reference(3);
        // Pretend the price one period ahead is the one two periods ahead.
        alphas[1] = alphas[0].clone();
        let paths = simulate_paths(&alphas, &baseline_abatement(), &noise, 20_000, 3, -1.0).unwrap();
        let report = martingale_diagnostic(&paths, 1.0, &Default::default()).unwrap();
        assert!(report.any_flag());
    }

    #[test]
    fn inversion_on_increasing_and_flat_pieces() {
        let f = PriceFunctional::from_values(vec![-2.0, -1.0, 0.0, 1.0, 2.0], vec![0.0, 0.0, 0.5, 1.0, 1.0], 1.0)
            .unwrap();
        let inv = invert_alpha(&f, 0.25).unwrap();
        assert!((inv.state + 0.5).abs() < 1e-15 && inv.width == 0.0);
        let inv = invert_alpha(&f, 0.0).unwrap();
        assert_eq!((inv.state, inv.width), (-1.5, 1.0));
        let inv = invert_alpha(&f, 1.0).unwrap();
        assert_eq!((inv.state, inv.width), (1.5, 1.0));
        assert!(matches!(invert_alpha(&f, 1.5), Err(Error::OutOfRange { .. })));
        assert!(invert_alpha(&PriceFunctional::digital(1.0), 0.5).is_err());
    }

    fn grid_op(noise: &NoiseModel) -> GridExpectation {
        GridExpectation { grid: equidistant(-7.5, 7.5, 601), noise: noise.clone(), quadrature: Quadrature::Exact }
    }

    #[test]
    fn strikes_outside_the_price_range_have_closed_forms() {
        let (alphas, noise) = reference(3);
        let op = grid_op(&noise);
        let a_now = alphas[0].evaluate(-1.0);
        let spec = CallSpec { maturity: 3, strike: 0.0 };
        let v = price_european_call(&alphas, &baseline_abatement(), &op, spec, 0, a_now).unwrap();
        assert!((v.price - a_now).abs() < 1e-15);
        let spec = CallSpec { maturity: 3, strike: 1.0 };
        let v = price_european_call(&alphas, &baseline_abatement(), &op, spec, 0, a_now).unwrap();
        assert_eq!(v.price, 0.0);
        assert_eq!(v.surface.len(), 4);
    }

    #[test]
    fn call_prices_are_bounded_decreasing_and_convex_in_strike() {
        let (alphas, noise) = reference(4);
        let op = grid_op(&noise);
        let a_now = alphas[1].evaluate(0.3);
        let strikes: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let prices: Vec<f64> = strikes
            .iter()
            .map(|&k| {
                price_european_call(&alphas, &baseline_abatement(), &op, CallSpec { maturity: 3, strike: k }, 1, a_now)
                    .unwrap()
                    .price
            })
            .collect();
        for w in prices.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for w in prices.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        assert!(prices.iter().all(|&p| p >= 0.0 && p <= a_now + 1e-12));
        assert!((prices[0] - a_now).abs() < 1e-12);
    }

    #[test]
    fn grid_valuation_matches_the_exact_tree() {
        let noise = NoiseModel::discrete(vec![(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        let abate = AbatementFunction::power(0.1, 0.5).unwrap();
        let horizon = 3;
        let tree = exact_tree_oracle(&noise, &abate, 100.0, horizon, -1.0).unwrap();
        let settings = SolverSettings::with_grid(equidistant(-8.0, 8.0, 1601));
        let alphas = backward_recursion(&PriceFunctional::digital(100.0), &abate, &noise, &settings, horizon).unwrap();
        let op = GridExpectation { grid: settings.grid.clone(), noise, quadrature: Quadrature::Exact };
        for strike in [10.0, 30.0, 60.0] {
            let exact = tree.call_values(2, strike).unwrap()[0][0];
            let v = price_european_call(
                &alphas,
                &abate,
                &op,
                CallSpec { maturity: 2, strike },
                0,
                tree.root().price,
            )
            .unwrap();
            assert!((v.price - exact).abs() < 1e-3 * 100.0, "strike {strike}: {} vs {exact}", v.price);
        }
    }

    #[test]
    fn lsmc_operator_reports_a_standard_error() {
        let (alphas, noise) = reference(3);
        let engine = LsmcEngine::new(crate::lsmc::HutBasis::new(16, 1.0).unwrap(), &noise, 1000, 11).unwrap();
        let a_now = alphas[0].evaluate(-1.0);
        let spec = CallSpec { maturity: 2, strike: 0.3 };
        let lsmc = price_european_call(&alphas, &baseline_abatement(), &engine, spec, 0, a_now).unwrap();
        let exact = price_european_call(&alphas, &baseline_abatement(), &grid_op(&noise), spec, 0, a_now).unwrap();
        assert!(lsmc.std_error > 0.0 && exact.std_error == 0.0);
        assert!((lsmc.price - exact.price).abs() < 5.0 * lsmc.std_error + 0.01, "{lsmc:?} {}", exact.price);
    }

    #[test]
    fn invalid_call_requests() {
        let (alphas, noise) = reference(2);
        let op = grid_op(&noise);
        let c = baseline_abatement();
        let call = |m, k, t, a| price_european_call(&alphas, &c, &op, CallSpec { maturity: m, strike: k }, t, a);
        assert!(call(0, 0.5, 0, 0.5).is_err());
        assert!(call(3, 0.5, 0, 0.5).is_err());
        assert!(call(2, -0.1, 0, 0.5).is_err());
        assert!(call(1, 0.5, 2, 0.5).is_err());
        assert!(matches!(call(2, 0.5, 0, 1.5), Err(Error::OutOfRange { .. })));
        assert_eq!(call(2, 0.4, 2, 1.0).unwrap().price, 0.6);
    }
}

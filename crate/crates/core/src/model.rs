//! Model inputs: penalty and horizon, shortage innovations, abatement.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingConfig {
    /// Penalty per uncovered unit of pollutant, π.
    pub penalty: f64,
    /// Number of trading periods before compliance, T.
    pub horizon: usize,
    /// Report prices as fractions of the penalty instead of currency.
    pub normalize: bool,
}

impl PricingConfig {
    pub fn new(penalty: f64, horizon: usize, normalize: bool) -> Result<Self> {
        let cfg = PricingConfig { penalty, horizon, normalize };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty.is_finite() && self.penalty > 0.0) {
            return Err(invalid(format!("penalty must be positive, got {}", self.penalty)));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon must be at least one period"));
        }
        Ok(())
    }

    /// Factor converting normalised prices (fractions of π) to reported units.
    pub fn output_scale(&self) -> f64 {
        if self.normalize {
            1.0
        } else {
            self.penalty
        }
    }
}

/// Distribution of the i.i.d. shortage innovations ε_1, …, ε_T.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Normal { mean: f64, stddev: f64 },
    /// Finitely many atoms `(value, probability)`.
    Discrete { atoms: Vec<(f64, f64)> },
}

impl NoiseModel {
    pub fn normal(mean: f64, stddev: f64) -> Result<Self> {
        let n = NoiseModel::Normal { mean, stddev };
        n.validate()?;
        Ok(n)
    }

    pub fn discrete(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let n = NoiseModel::Discrete { atoms };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Normal { mean, stddev } => {
                if !mean.is_finite() || !(stddev.is_finite() && *stddev > 0.0) {
                    return Err(invalid(format!(
                        "normal noise needs finite mean and positive stddev, got N({mean}, {stddev})"
                    )));
                }
            }
            NoiseModel::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(invalid("discrete noise needs at least one atom"));
                }
                if let Some((v, p)) =
                    atoms.iter().find(|(v, p)| !v.is_finite() || !(p.is_finite() && *p > 0.0))
                {
                    return Err(invalid(format!("atom ({v}, {p}) needs a finite value and positive probability")));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("atom probabilities sum to {total}, expected 1")));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            NoiseModel::Normal { mean, .. } => *mean,
            NoiseModel::Discrete { atoms } => atoms.iter().map(|(v, p)| v * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Normal { stddev, .. } => stddev * stddev,
            NoiseModel::Discrete { atoms } => {
                let m = self.mean();
                atoms.iter().map(|(v, p)| p * (v - m) * (v - m)).sum()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Normal { mean, stddev } => {
                // Parameters were validated on construction.
                Normal::new(*mean, *stddev).map(|d| d.sample(rng)).unwrap_or(*mean)
            }
            NoiseModel::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                atoms[atoms.len() - 1].0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbatementShape {
    /// `a ↦ scale·(a⁺)^exponent`
    Power { scale: f64, exponent: f64 },
    /// Linear interpolation through `(prices[i], volumes[i])`, constant beyond
    /// the last price.
    Tabulated { prices: Vec<f64>, volumes: Vec<f64> },
}

/// Cumulative abatement volume `c(a)`: the emission reduction available at a
/// marginal cost of at most `a`.
///
/// `price_scale` converts the caller's price units into the units the shape
/// was specified in, so that solvers working in fractions of π can evaluate a
/// function given in currency.
#[derive(Debug, Clone, PartialEq)]
pub struct AbatementFunction {
    shape: AbatementShape,
    price_scale: f64,
}

impl AbatementFunction {
    pub fn zero() -> Self {
        AbatementFunction { shape: AbatementShape::Power { scale: 0.0, exponent: 1.0 }, price_scale: 1.0 }
    }

    pub fn power(scale: f64, exponent: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) || !(exponent.is_finite() && exponent > 0.0) {
            return Err(invalid(format!(
                "power abatement needs scale >= 0 and exponent > 0, got {scale}, {exponent}"
            )));
        }
        Ok(AbatementFunction { shape: AbatementShape::Power { scale, exponent }, price_scale: 1.0 })
    }

    pub fn tabulated(prices: Vec<f64>, volumes: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 || prices.len() != volumes.len() {
            return Err(invalid("tabulated abatement needs at least two (price, volume) pairs"));
        }
        if prices[0] != 0.0 || volumes[0] != 0.0 {
            return Err(invalid("tabulated abatement must start at (0, 0)"));
        }
        if prices.windows(2).any(|w| !(w[0] < w[1])) || prices.iter().any(|p| !p.is_finite()) {
            return Err(invalid("tabulated abatement prices must be strictly increasing"));
        }
        if volumes.windows(2).any(|w| !(w[0] <= w[1])) || volumes.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tabulated abatement volumes must be non-decreasing"));
        }
        Ok(AbatementFunction { shape: AbatementShape::Tabulated { prices, volumes }, price_scale: 1.0 })
    }

    /// Tabulates the optimal abatement of `cost` on the given price grid.
    pub fn from_cost(cost: &CostFunction, prices: &[f64]) -> Result<Self> {
        let volumes = prices
            .iter()
            .map(|&p| derive_abatement_volume(cost, p))
            .collect::<Result<Vec<_>>>()?;
        Self::tabulated(prices.to_vec(), volumes)
    }

    pub fn shape(&self) -> &AbatementShape {
        &self.shape
    }

    pub fn price_scale(&self) -> f64 {
        self.price_scale
    }

    /// The same function, taking prices expressed in units of `unit`.
    pub fn in_units_of(&self, unit: f64) -> Self {
        AbatementFunction { shape: self.shape.clone(), price_scale: self.price_scale * unit }
    }

    pub fn volume(&self, price: f64) -> f64 {
        let a = (price * self.price_scale).max(0.0);
        match &self.shape {
            AbatementShape::Power { scale, exponent } => {
                if *scale == 0.0 || a == 0.0 {
                    0.0
                } else if *exponent == 0.5 {
                    scale * libm::sqrt(a)
                } else {
                    scale * libm::pow(a, *exponent)
                }
            }
            AbatementShape::Tabulated { prices, volumes } => interpolate_clamped(prices, volumes, a),
        }
    }

    /// `∫_0^price c(s) ds`, in the caller's price units.
    pub fn integral(&self, price: f64) -> f64 {
        if price <= 0.0 {
            return 0.0;
        }
        let a = price * self.price_scale;
        match &self.shape {
            AbatementShape::Power { scale, exponent } => {
                if *scale == 0.0 {
                    0.0
                } else {
                    scale * libm::pow(a, *exponent) * price / (exponent + 1.0)
                }
            }
            AbatementShape::Tabulated { prices, volumes } => {
                let mut total = 0.0;
                for i in 0..prices.len() - 1 {
                    if a <= prices[i] {
                        break;
                    }
                    let hi = a.min(prices[i + 1]);
                    let y_hi = interpolate_clamped(prices, volumes, hi);
                    total += 0.5 * (volumes[i] + y_hi) * (hi - prices[i]);
                }
                let last = prices[prices.len() - 1];
                if a > last {
                    total += volumes[volumes.len() - 1] * (a - last);
                }
                total / self.price_scale
            }
        }
    }

    /// True when no abatement happens for prices in `[0, cap]`.
    pub fn vanishes_below(&self, cap: f64) -> bool {
        self.volume(cap) == 0.0
    }
}

fn interpolate_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&p| p <= x) - 1;
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + w * (ys[i + 1] - ys[i])
}

/// Aggregate abatement cost `C(x)` on `[0, cap]`.
pub struct CostFunction {
    cap: f64,
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostFunction").field("cap", &self.cap).finish_non_exhaustive()
    }
}

const CONVEXITY_TRIPLES: usize = 256;

impl CostFunction {
    /// Wraps `eval`, checking `C(0) = 0` and midpoint convexity on a fixed set
    /// of pseudo-random pairs in `[0, cap]`.
    pub fn new(cap: f64, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(invalid(format!("cost cap must be positive, got {cap}")));
        }
        let c0 = eval(0.0);
        if c0.abs() > 1e-12 {
            return Err(Error::NonConvexCost(format!("C(0) = {c0}, expected 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x00c0_57f0);
        for _ in 0..CONVEXITY_TRIPLES {
            let x = rng.random::<f64>() * cap;
            let y = rng.random::<f64>() * cap;
            if (x - y).abs() < 1e-9 * cap {
                continue;
            }
            let (cx, cy, cm) = (eval(x), eval(y), eval(0.5 * (x + y)));
            let chord = 0.5 * (cx + cy);
            let slack = 1e-12 * (cx.abs() + cy.abs()).max(1.0);
            if !(cm.is_finite() && chord.is_finite()) || cm > chord + slack {
                return Err(Error::NonConvexCost(format!(
                    "midpoint convexity fails between x = {x} and y = {y}: C(mid) = {cm} > {chord}"
                )));
            }
        }
        Ok(CostFunction { cap, eval: Box::new(eval) })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

const GOLDEN_TOL: f64 = 1e-10;

/// Abatement volume chosen at `price`: `argmin_{x ∈ [0, cap]} C(x) − price·x`,
/// located by golden-section search.
pub fn derive_abatement_volume(cost: &CostFunction, price: f64) -> Result<f64> {
    if !(price.is_finite() && price >= 0.0) {
        return Err(invalid(format!("price must be non-negative, got {price}")));
    }
    let objective = |x: f64| cost.eval(x) - price * x;
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, cost.cap());
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while hi - lo > GOLDEN_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    let interior = 0.5 * (lo + hi);
    // The minimiser may sit on the boundary; prefer the endpoint on ties.
    let best = [0.0, cost.cap(), interior]
        .into_iter()
        .map(|x| (x, objective(x)))
        .fold((f64::NAN, f64::INFINITY), |acc, (x, v)| if v < acc.1 { (x, v) } else { acc });
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn square(cap: f64) -> CostFunction {
        CostFunction::new(cap, |x| x * x).unwrap()
    }

    /// Brute-force grid minimisation with step 1e-6.
    fn grid_argmin(c: impl Fn(f64) -> f64, cap: f64, price: f64) -> f64 {
        let n = (cap / 1e-6).round() as usize;
        (0..=n)
            .map(|i| i as f64 * 1e-6)
            .map(|x| (x, c(x) - price * x))
            .fold((0.0, f64::INFINITY), |acc, (x, v)| if v < acc.1 { (x, v) } else { acc })
            .0
    }

    #[test]
    fn abatement_volume_matches_grid_oracle() {
        let oracle = grid_argmin(|x| x * x, 10.0, 4.0);
        assert!((oracle - 2.0).abs() <= 1e-6);
        let x = derive_abatement_volume(&square(10.0), 4.0).unwrap();
        assert!((x - oracle).abs() <= 1e-6);
        assert!((x - 2.0).abs() < 1e-7);

        let capped = grid_argmin(|x| x * x, 1.0, 4.0);
        assert_eq!(capped, 1.0);
        assert_eq!(derive_abatement_volume(&square(1.0), 4.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_price_means_no_abatement() {
        assert_eq!(derive_abatement_volume(&square(10.0), 0.0).unwrap(), 0.0);
        let c = CostFunction::new(5.0, |x| libm::exp(x) - 1.0 - 0.0 * x).unwrap();
        assert_eq!(derive_abatement_volume(&c, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_costs() {
        assert!(matches!(CostFunction::new(1.0, |x| x * x + 1.0), Err(Error::NonConvexCost(_))));
        assert!(matches!(CostFunction::new(4.0, libm::sqrt), Err(Error::NonConvexCost(_))));
        assert!(matches!(CostFunction::new(4.0, |x| libm::sin(3.0 * x)), Err(Error::NonConvexCost(_))));
        assert!(derive_abatement_volume(&square(1.0), -1.0).is_err());
    }

    #[test]
    fn integral_matches_quadrature() {
        let simpson = |c: &AbatementFunction, x: f64| {
            let n = 20_000;
            let h = x / n as f64;
            (0..=n)
                .map(|i| {
                    let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                    w * c.volume(i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let cases = [
            AbatementFunction::power(0.1, 0.5).unwrap(),
            AbatementFunction::power(0.1, 0.5).unwrap().in_units_of(100.0),
            AbatementFunction::power(2.0, 1.5).unwrap(),
            AbatementFunction::tabulated(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 2.5]).unwrap().in_units_of(4.0),
        ];
        for c in &cases {
            for x in [0.3, 0.9, 1.0] {
                let exact = c.integral(x);
                assert!((exact - simpson(c, x)).abs() < 1e-5 * (1.0 + exact), "{c:?} {x}");
            }
        }
        assert_eq!(AbatementFunction::zero().integral(5.0), 0.0);
        assert_eq!(cases[0].integral(-1.0), 0.0);
    }

    #[test]
    fn power_and_tabulated_volumes() {
        let c = AbatementFunction::power(0.1, 0.5).unwrap();
        assert_eq!(c.volume(0.0), 0.0);
        assert_eq!(c.volume(-3.0), 0.0);
        assert!((c.volume(100.0) - 1.0).abs() < 1e-15);
        let normalized = c.in_units_of(100.0);
        assert!((normalized.volume(1.0) - 1.0).abs() < 1e-15);
        assert!((normalized.volume(0.25) - 0.5).abs() < 1e-15);

        let t = AbatementFunction::tabulated(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.volume(0.5), 1.0);
        assert_eq!(t.volume(2.0), 2.5);
        assert_eq!(t.volume(10.0), 3.0);
        assert!(AbatementFunction::tabulated(vec![0.0, 1.0], vec![0.0, -1.0]).is_err());
        assert!(AbatementFunction::zero().vanishes_below(1e9));
        assert!(!c.vanishes_below(1.0));
    }

    #[test]
    fn tabulation_round_trip() {
        let c = AbatementFunction::power(0.1, 0.5).unwrap();
        let prices: Vec<f64> = (0..=10_000).map(|i| i as f64 * 0.01).collect();
        let volumes: Vec<f64> = prices.iter().map(|&p| c.volume(p)).collect();
        let t = AbatementFunction::tabulated(prices.clone(), volumes).unwrap();
        for p in prices {
            assert!((t.volume(p) - c.volume(p)).abs() <= 1e-9);
        }
    }

    #[test]
    fn from_cost_tabulates_marginal_cost_inverse() {
        // C(x) = x² ⇒ c(a) = a/2 until the cap.
        let prices: Vec<f64> = (0..=20).map(|i| i as f64 * 0.5).collect();
        let c = AbatementFunction::from_cost(&square(3.0), &prices).unwrap();
        assert!((c.volume(4.0) - 2.0).abs() < 1e-7);
        assert!((c.volume(5.0) - 2.5).abs() < 1e-7);
        assert!((c.volume(9.0) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn noise_validation_and_moments() {
        assert!(NoiseModel::normal(0.5, 0.0).is_err());
        assert!(NoiseModel::discrete(vec![(1.0, 0.5), (-1.0, 0.4)]).is_err());
        assert!(NoiseModel::discrete(vec![(1.0, 1.0), (-1.0, 0.0)]).is_err());
        let d = NoiseModel::discrete(vec![(1.0, 0.25), (-1.0, 0.75)]).unwrap();
        assert!((d.mean() + 0.5).abs() < 1e-15);
        assert!((d.variance() - 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40_000;
        let ups = (0..n).filter(|_| d.sample(&mut rng) > 0.0).count() as f64 / n as f64;
        assert!((ups - 0.25).abs() < 0.01);
        let g = NoiseModel::normal(0.5, 1.0).unwrap();
        let m: f64 = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.02);
    }

    #[test]
    fn config_validation() {
        assert!(PricingConfig::new(0.0, 1, true).is_err());
        assert!(PricingConfig::new(100.0, 0, true).is_err());
        let c = PricingConfig::new(100.0, 6, false).unwrap();
        assert_eq!(c.output_scale(), 100.0);
    }
}

//! Price functionals `g ↦ α_t(g)` and their expectations under the noise.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::NoiseModel;
use crate::normal::{self, GaussHermite};

/// Piecewise-linear function through `(knots[i], values[i])`, held constant
/// outside `[knots[0], knots[n-1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolant {
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl Interpolant {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(invalid(format!(
                "interpolant needs matching non-empty knots and values ({} vs {})",
                knots.len(),
                values.len()
            )));
        }
        if knots.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(invalid("interpolant knots and values must be finite"));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("interpolant knots must be strictly increasing"));
        }
        Ok(Interpolant { knots, values })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (z, v) = (&self.knots, &self.values);
        let n = z.len();
        if x <= z[0] {
            return v[0];
        }
        if x >= z[n - 1] {
            return v[n - 1];
        }
        let i = z.partition_point(|&k| k <= x) - 1;
        let w = (x - z[i]) / (z[i + 1] - z[i]);
        v[i] + w * (v[i + 1] - v[i])
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_non_decreasing(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0] - slack)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Interpolant {
        Interpolant { knots: self.knots.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// `x ↦ (self(x) − strike)⁺`, represented exactly by adding a knot at
    /// every crossing of the strike level.
    pub fn call_payoff(&self, strike: f64) -> Interpolant {
        let mut knots = Vec::with_capacity(self.len() + 4);
        let mut values = Vec::with_capacity(self.len() + 4);
        for i in 0..self.len() {
            if i > 0 {
                let (a, b) = (self.values[i - 1] - strike, self.values[i] - strike);
                if (a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0) {
                    let w = a / (a - b);
                    let x = self.knots[i - 1] + w * (self.knots[i] - self.knots[i - 1]);
                    if x > self.knots[i - 1] && x < self.knots[i] {
                        knots.push(x);
                        values.push(0.0);
                    }
                }
            }
            knots.push(self.knots[i]);
            values.push((self.values[i] - strike).max(0.0));
        }
        Interpolant { knots, values }
    }

    fn expect_normal(&self, centre: f64, stddev: f64) -> f64 {
        const WINDOW: f64 = 12.0;
        let (z, v) = (&self.knots, &self.values);
        let n = z.len();
        if n == 1 {
            return v[0];
        }
        // Knots more than WINDOW deviations away carry no weight; keep one
        // knot beyond the window on each side so every segment touching it is
        // integrated exactly.
        let lo = z.partition_point(|&k| k < centre - WINDOW * stddev).saturating_sub(1);
        let hi = (z.partition_point(|&k| k <= centre + WINDOW * stddev)).min(n - 1);
        let u = |k: f64| (k - centre) / stddev;
        let mut u_prev = u(z[lo]);
        let mut cdf_prev = normal::cdf(u_prev);
        let mut pdf_prev = normal::pdf(u_prev);
        let mut total = v[lo] * cdf_prev;
        for i in lo..hi {
            let u_next = u(z[i + 1]);
            let cdf_next = normal::cdf(u_next);
            let pdf_next = normal::pdf(u_next);
            let slope = (v[i + 1] - v[i]) / (z[i + 1] - z[i]);
            // ∫ over [z_i, z_{i+1}] of (v_i + slope·(y − z_i)) φ_s(y − centre) dy
            total += (v[i] + slope * (centre - z[i])) * (cdf_next - cdf_prev)
                + slope * stddev * (pdf_prev - pdf_next);
            u_prev = u_next;
            cdf_prev = cdf_next;
            pdf_prev = pdf_next;
        }
        total + v[hi] * normal::cdf(-u_prev)
    }
}

/// How expectations over normal noise are evaluated.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Quadrature {
    /// Closed-form Gaussian integral of the piecewise-linear interpolant.
    #[default]
    Exact,
    /// Gauss–Hermite rule with the given nodes.
    GaussHermite(GaussHermite),
}

impl Quadrature {
    pub fn gauss_hermite(nodes: usize) -> Self {
        Quadrature::GaussHermite(GaussHermite::new(nodes))
    }
}

/// A function of the state that can be integrated against the noise.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// `x ↦ level·1[x ≥ 0]`
    Step { level: f64 },
    Linear(Interpolant),
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Step { level } => {
                if x >= 0.0 {
                    *level
                } else {
                    0.0
                }
            }
            Profile::Linear(f) => f.eval(x),
        }
    }

    pub fn min_value(&self) -> f64 {
        match self {
            Profile::Step { level } => level.min(0.0),
            Profile::Linear(f) => f.min_value(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Profile::Step { level } => level.max(0.0),
            Profile::Linear(f) => f.max_value(),
        }
    }

    /// `E[self(shift + ε)]`.
    pub fn expect(&self, shift: f64, noise: &NoiseModel, rule: &Quadrature) -> f64 {
        match noise {
            NoiseModel::Discrete { atoms } => atoms.iter().map(|(e, p)| p * self.eval(shift + e)).sum(),
            NoiseModel::Normal { mean, stddev } => match rule {
                Quadrature::GaussHermite(gh) => gh.expect(|z| self.eval(shift + mean + stddev * z)),
                Quadrature::Exact => match self {
                    Profile::Step { level } => level * normal::cdf((shift + mean) / stddev),
                    Profile::Linear(f) => f.expect_normal(shift + mean, *stddev),
                },
            },
        }
    }
}

/// Allowance price as a function of the state: non-decreasing with values in
/// `[0, penalty]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFunctional {
    profile: Profile,
    penalty: f64,
}

/// Relative slack allowed when validating bounds and monotonicity of
/// numerically computed values.
const VALIDATION_SLACK: f64 = 1e-10;

impl PriceFunctional {
    /// The compliance-date price `penalty·1[g ≥ 0]`.
    pub fn digital(penalty: f64) -> Self {
        PriceFunctional { profile: Profile::Step { level: penalty }, penalty }
    }

    pub fn from_values(knots: Vec<f64>, values: Vec<f64>, penalty: f64) -> Result<Self> {
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(invalid(format!("penalty must be positive, got {penalty}")));
        }
        let curve = Interpolant::new(knots, values)?;
        let slack = VALIDATION_SLACK * penalty;
        if curve.min_value() < -slack || curve.max_value() > penalty + slack {
            return Err(invalid(format!(
                "price functional values must lie in [0, {penalty}], found [{}, {}]",
                curve.min_value(),
                curve.max_value()
            )));
        }
        if !curve.is_non_decreasing(slack) {
            return Err(invalid("price functional values must be non-decreasing"));
        }
        Ok(PriceFunctional { profile: Profile::Linear(curve), penalty })
    }

    pub fn constant(knots: Vec<f64>, level: f64, penalty: f64) -> Result<Self> {
        let values = alloc::vec![level; knots.len()];
        Self::from_values(knots, values, penalty)
    }

    /// Skips validation; for deliberately corrupted fixtures and internal use
    /// where the invariants hold by construction.
    pub fn from_curve_unchecked(curve: Interpolant, penalty: f64) -> Self {
        PriceFunctional { profile: Profile::Linear(curve), penalty }
    }

    pub fn penalty(&self) -> f64 {
        self.penalty
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn curve(&self) -> Option<&Interpolant> {
        match &self.profile {
            Profile::Linear(c) => Some(c),
            Profile::Step { .. } => None,
        }
    }

    pub fn is_digital(&self) -> bool {
        matches!(self.profile, Profile::Step { .. })
    }

    pub fn evaluate(&self, g: f64) -> f64 {
        self.profile.eval(g)
    }

    pub fn min_value(&self) -> f64 {
        self.profile.min_value()
    }

    pub fn max_value(&self) -> f64 {
        self.profile.max_value()
    }

    /// Values at the given states, e.g. to move a functional onto another grid.
    pub fn tabulate(&self, states: &[f64]) -> Vec<f64> {
        states.iter().map(|&g| self.evaluate(g)).collect()
    }

    /// Same functional with prices multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> PriceFunctional {
        let profile = match &self.profile {
            Profile::Step { level } => Profile::Step { level: level * factor },
            Profile::Linear(c) => Profile::Linear(c.map_values(|v| v * factor)),
        };
        PriceFunctional { profile, penalty: self.penalty * factor }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn terminal_functional_values() {
        let d = PriceFunctional::digital(100.0);
        assert_eq!(d.evaluate(-1.0), 0.0);
        assert_eq!(d.evaluate(0.0), 100.0);
        assert_eq!(d.evaluate(1e-300), 100.0);
        assert_eq!(d.evaluate(-1e-300), 0.0);
    }

    #[test]
    fn constant_functional_clamps() {
        let f = PriceFunctional::constant(vec![-1.0, 0.0, 1.0], 5.0, 100.0).unwrap();
        assert_eq!(f.evaluate(100.0), 5.0);
        assert_eq!(f.evaluate(-100.0), 5.0);
    }

    #[test]
    fn interpolation_and_clamping() {
        let f = PriceFunctional::from_values(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 3.0], 4.0).unwrap();
        assert_eq!(f.evaluate(0.5), 1.0);
        assert_eq!(f.evaluate(2.0), 2.5);
        assert_eq!(f.evaluate(9.0), 3.0);
        assert_eq!(f.evaluate(-9.0), 0.0);
    }

    #[test]
    fn rejects_invalid_functionals() {
        assert!(PriceFunctional::from_values(vec![0.0, 1.0], vec![1.0, 0.5], 1.0).is_err());
        assert!(PriceFunctional::from_values(vec![0.0, 1.0], vec![0.0, 1.5], 1.0).is_err());
        assert!(PriceFunctional::from_values(vec![1.0, 0.0], vec![0.0, 0.5], 1.0).is_err());
        assert!(PriceFunctional::from_values(vec![0.0, 1.0], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn call_payoff_inserts_crossings() {
        let f = Interpolant::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 4.0]).unwrap();
        let p = f.call_payoff(1.0);
        assert_eq!(p.knots(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(p.values(), &[0.0, 0.0, 1.0, 3.0]);
        for i in 0..=40 {
            let x = -0.5 + i as f64 * 0.075;
            assert!((p.eval(x) - (f.eval(x) - 1.0).max(0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_normal_expectation_matches_quadrature() {
        let f = Interpolant::new(vec![-2.0, -0.5, 0.0, 1.5, 4.0], vec![0.0, 0.1, 0.5, 0.8, 1.0]).unwrap();
        let noise = NoiseModel::normal(0.3, 0.7).unwrap();
        // Composite Simpson on a wide interval as an independent check.
        let simpson = |shift: f64| {
            let (a, b, n) = (-12.0, 12.0, 240_000);
            let h = (b - a) / n as f64;
            let g = |y: f64| f.eval(y) * normal::pdf((y - shift - 0.3) / 0.7) / 0.7;
            let mut s = g(a) + g(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * g(a + i as f64 * h);
            }
            s * h / 3.0
        };
        for shift in [-3.0, -0.7, 0.0, 0.4, 2.0] {
            let exact = Profile::Linear(f.clone()).expect(shift, &noise, &Quadrature::Exact);
            assert!((exact - simpson(shift)).abs() < 1e-9, "shift {shift}");
        }
    }

    #[test]
    fn step_expectations() {
        let step = Profile::Step { level: 1.0 };
        let n = NoiseModel::normal(0.5, 1.0).unwrap();
        let v = step.expect(0.0, &n, &Quadrature::Exact);
        assert!((v - 0.691_462_461_274_013_1).abs() < 1e-15);
        let d = NoiseModel::discrete(vec![(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        assert_eq!(step.expect(0.0, &d, &Quadrature::Exact), 0.5);
        // Atom landing exactly on the kink counts as in the money.
        assert_eq!(step.expect(1.0, &d, &Quadrature::Exact), 1.0);
    }
}

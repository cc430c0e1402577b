use alloc::format;
use alloc::vec::Vec;

use super::{build_sample, project, DesignMatrix, HutBasis, ProjectionSample};
use crate::error::{invalid, Error, Result};
use crate::functional::{Interpolant, PriceFunctional, Quadrature};
use crate::isotonic::pava;
use crate::model::{AbatementFunction, NoiseModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSettings {
    /// Stop once `max_k |α^{n+1}(g_k) − α^n(g_k)| < tolerance·π`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation weight λ in `α^{n+1} ← (1 − λ)α^n + λ·projection`.
    pub damping: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings { tolerance: 1e-4, max_iterations: 50, damping: 1.0 }
    }
}

impl InnerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(invalid("inner tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("inner iteration needs at least one step"));
        }
        if !(0.5..=1.0).contains(&self.damping) {
            return Err(invalid(format!("damping must lie in [0.5, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// Result of one backward period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: usize,
    /// Hut coefficients, i.e. the values of `α_t` at the peaks.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// `max_k |α^{n+1}(g_k) − α^n(g_k)|` for each inner iteration.
    pub residuals: Vec<f64>,
    /// Regression standard errors of the last projection.
    pub standard_errors: Vec<f64>,
    pub rank_deficient: bool,
    /// The sampled 0/1 targets against the digital terminal price entered a
    /// two-cycle and were replaced by their conditional expectation over the
    /// innovation.
    pub conditional_targets: bool,
}

/// Basis, sample and design matrix shared by all periods.
#[derive(Debug, Clone)]
pub struct LsmcEngine {
    noise: NoiseModel,
    basis: HutBasis,
    sample: ProjectionSample,
    matrix: DesignMatrix,
}

impl LsmcEngine {
    pub fn new(basis: HutBasis, noise: &NoiseModel, count: usize, seed: u64) -> Result<Self> {
        let sample = build_sample(&basis, noise, count, seed)?;
        Self::from_sample(basis, noise, sample)
    }

    pub fn from_sample(basis: HutBasis, noise: &NoiseModel, sample: ProjectionSample) -> Result<Self> {
        let matrix = DesignMatrix::new(&basis, &sample)?;
        Ok(LsmcEngine { noise: noise.clone(), basis, sample, matrix })
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn basis(&self) -> &HutBasis {
        &self.basis
    }

    pub fn sample(&self) -> &ProjectionSample {
        &self.sample
    }

    pub fn matrix(&self) -> &DesignMatrix {
        &self.matrix
    }

    /// Price functional spanned by the hut coefficients.
    pub fn functional(&self, coefficients: &[f64], penalty: f64) -> Result<PriceFunctional> {
        PriceFunctional::from_values(self.basis.peaks(), coefficients.to_vec(), penalty)
    }

    pub fn curve(&self, coefficients: &[f64]) -> Interpolant {
        Interpolant::new(self.basis.peaks(), coefficients.to_vec()).expect("peaks are strictly increasing")
    }

    /// Clips to `[0, cap]` and restores monotonicity, weighting each hut by
    /// the sample mass in its support.
    fn post_process(&self, coefficients: &mut [f64], cap: f64) {
        for q in coefficients.iter_mut() {
            *q = q.clamp(0.0, cap);
        }
        pava(coefficients, &self.matrix.column_mass());
    }

    /// One backward period: iterate
    /// `α^{n+1}(g_k) ≈ projection of α_{t+1}(g_k − c(α^n(g_k)) + e_k)` from
    /// `α^0 = α_{t+1}` until the sup-distance over the sample drops below the
    /// tolerance.
    pub fn step(
        &self,
        next: &PriceFunctional,
        abate: &AbatementFunction,
        inner: &InnerSettings,
        t: usize,
    ) -> Result<StepOutcome> {
        inner.validate()?;
        let cap = next.penalty();
        let tol = inner.tolerance * cap;
        let s = &self.sample;
        let mut coefficients = next.tabulate(&self.basis.peaks());
        let mut current: Vec<f64> = next.tabulate(&s.states);
        let mut residuals = Vec::new();
        let mut conditional = false;
        let mut history: Vec<Vec<f64>> = Vec::new();
        loop {
            let targets: Vec<f64> = s
                .states
                .iter()
                .zip(&s.innovations)
                .zip(&current)
                .map(|((&g, &e), &a)| {
                    let shifted = g - abate.volume(a);
                    if conditional {
                        next.profile().expect(shifted, &self.noise, &Quadrature::Exact)
                    } else {
                        next.evaluate(shifted + e)
                    }
                })
                .collect();
            // A step price sampled at finitely many points makes the iteration
            // map piecewise constant; a sample sitting on the jump can flip
            // back and forth forever. Any repeat other than the immediately
            // preceding target vector is such a cycle.
            if !conditional && next.is_digital() {
                let earlier = history.len().saturating_sub(1);
                if history[..earlier].contains(&targets) {
                    conditional = true;
                    continue;
                }
            }
            let projection = project(s, &self.matrix, &targets)?;
            if !conditional && next.is_digital() {
                history.push(targets);
            }
            let mut fresh = projection.coefficients.clone();
            self.post_process(&mut fresh, cap);
            if inner.damping < 1.0 {
                for (q, old) in fresh.iter_mut().zip(&coefficients) {
                    *q = (1.0 - inner.damping) * old + inner.damping * *q;
                }
            }
            let values = self.matrix.fitted(&fresh);
            let residual = values.iter().zip(&current).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            residuals.push(residual);
            coefficients = fresh;
            current = values;
            if residual < tol {
                return Ok(StepOutcome {
                    t,
                    coefficients,
                    iterations: residuals.len(),
                    standard_errors: projection.standard_errors(&self.matrix),
                    residuals,
                    rank_deficient: projection.rank_deficient,
                    conditional_targets: conditional,
                });
            }
            if residuals.len() >= inner.max_iterations {
                return Err(Error::NoConvergence { t, residuals });
            }
        }
    }

    /// Backward sweep `t = T−1, …, 0` from `terminal`.
    pub fn run(
        &self,
        terminal: &PriceFunctional,
        horizon: usize,
        abate: &AbatementFunction,
        inner: &InnerSettings,
    ) -> Result<LsmcSolution> {
        if horizon == 0 {
            return Err(invalid("horizon must be at least one period"));
        }
        let mut steps: Vec<StepOutcome> = Vec::with_capacity(horizon);
        let mut next = terminal.clone();
        for t in (0..horizon).rev() {
            let outcome = self.step(&next, abate, inner, t)?;
            next = self.functional(&outcome.coefficients, terminal.penalty())?;
            steps.push(outcome);
        }
        steps.reverse();
        Ok(LsmcSolution { engine: self.clone(), terminal: terminal.clone(), steps })
    }
}

/// Output of [`run_apmcm`]: coefficient vectors for `t = 0, …, T−1`.
#[derive(Debug, Clone)]
pub struct LsmcSolution {
    pub engine: LsmcEngine,
    pub terminal: PriceFunctional,
    pub steps: Vec<StepOutcome>,
}

impl LsmcSolution {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// `α_0, …, α_T`, with the exact digital functional at `T`.
    pub fn functionals(&self) -> Result<Vec<PriceFunctional>> {
        let mut out = self
            .steps
            .iter()
            .map(|s| self.engine.functional(&s.coefficients, self.terminal.penalty()))
            .collect::<Result<Vec<_>>>()?;
        out.push(self.terminal.clone());
        Ok(out)
    }
}

/// One period of the least-squares fixed-point iteration.
pub fn apmcm_step(
    next: &PriceFunctional,
    engine: &LsmcEngine,
    abate: &AbatementFunction,
    inner: &InnerSettings,
) -> Result<StepOutcome> {
    engine.step(next, abate, inner, 0)
}

/// Builds the sample and design matrix once and sweeps back from `terminal`.
pub fn run_apmcm(
    terminal: &PriceFunctional,
    horizon: usize,
    basis: HutBasis,
    noise: &NoiseModel,
    abate: &AbatementFunction,
    count: usize,
    seed: u64,
    inner: &InnerSettings,
) -> Result<LsmcSolution> {
    LsmcEngine::new(basis, noise, count, seed)?.run(terminal, horizon, abate, inner)
}

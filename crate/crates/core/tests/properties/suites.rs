//! Property suites over the numerics. Each runs a fixed number of cases from a
//! deterministic generator and reports the first counterexample.

use allowance_core::fixedpoint::{backward_recursion, backward_recursion_with, equidistant, SolverSettings};
use allowance_core::lsmc::{build_sample, project, DesignMatrix, HutBasis, InnerSettings, LsmcEngine};
use allowance_core::pricing::simulate_paths_with;
use allowance_core::{AbatementFunction, Executor, NoiseModel, PriceFunctional, Sequential};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("monotone_propagation", monotone_propagation),
    ("bound_preservation", bound_preservation),
    ("projection_idempotence", projection_idempotence),
    ("banded_gram", banded_gram),
    ("determinism", determinism),
];

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

/// Non-decreasing values in `[0, penalty]` on 21 knots over `[-5, 5]`.
fn monotone_functional() -> impl Strategy<Value = PriceFunctional> {
    (1.0f64..200.0, prop::collection::vec(0.0f64..1.0, 21), 0.0f64..1.0).prop_map(|(penalty, steps, floor)| {
        let total: f64 = steps.iter().sum::<f64>() + 1e-9;
        let mut acc = floor * 0.3;
        let values = steps
            .iter()
            .map(|s| {
                acc += (1.0 - floor * 0.3) * s / total;
                penalty * acc.min(1.0)
            })
            .collect();
        PriceFunctional::from_values(equidistant(-5.0, 5.0, 21), values, penalty).unwrap()
    })
}

fn functional_or_digital() -> impl Strategy<Value = PriceFunctional> {
    prop_oneof![
        3 => monotone_functional(),
        1 => (1.0f64..200.0).prop_map(PriceFunctional::digital),
    ]
}

fn noise() -> impl Strategy<Value = NoiseModel> {
    prop_oneof![
        (-1.0f64..1.0, 0.2f64..2.0).prop_map(|(m, s)| NoiseModel::normal(m, s).unwrap()),
        (0.1f64..2.0, 0.1f64..0.9).prop_map(|(x, p)| NoiseModel::discrete(vec![(x, p), (-x, 1.0 - p)]).unwrap()),
    ]
}

fn abatement() -> impl Strategy<Value = AbatementFunction> {
    prop_oneof![
        Just(AbatementFunction::zero()),
        (0.0f64..0.5, 0.25f64..2.0).prop_map(|(s, e)| AbatementFunction::power(s, e).unwrap()),
    ]
}

fn small_settings() -> SolverSettings {
    SolverSettings { tolerance: 1e-10, ..SolverSettings::with_grid(equidistant(-6.0, 6.0, 41)) }
}

/// One backward period maps a non-decreasing functional to a non-decreasing
/// one, and a pointwise larger successor gives a pointwise larger price.
pub fn monotone_propagation() -> Result<(), String> {
    check(48, (monotone_functional(), noise(), abatement(), 0.0f64..1.0), |(next, noise, abate, lift)| {
        let penalty = next.penalty();
        let settings = small_settings();
        let base = backward_recursion(&next, &abate, &noise, &settings, 1).unwrap();
        let curve = base[0].tabulate(&settings.grid);
        for w in curve.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * penalty, "decreasing step {} -> {}", w[0], w[1]);
        }
        let knots = next.curve().unwrap().knots().to_vec();
        let raised: Vec<f64> = next.tabulate(&knots).iter().map(|v| v + lift * (penalty - v)).collect();
        let raised = PriceFunctional::from_values(knots, raised, penalty).unwrap();
        let higher = backward_recursion(&raised, &abate, &noise, &settings, 1).unwrap();
        for (g, (lo, hi)) in settings.grid.iter().zip(curve.iter().zip(higher[0].tabulate(&settings.grid))) {
            prop_assert!(hi >= lo - 1e-9 * penalty, "order violated at g = {g}: {lo} > {hi}");
        }
        Ok(())
    })
}

/// Prices from the reference step, the least-squares step and simulated paths
/// stay inside `[0, penalty]`.
pub fn bound_preservation() -> Result<(), String> {
    check(32, (functional_or_digital(), noise(), abatement(), any::<u64>()), |(next, noise, abate, seed)| {
        let penalty = next.penalty();
        let abate = abate.in_units_of(1.0 / penalty);
        let settings = small_settings();
        let inside = |v: f64| (-1e-12 * penalty..=penalty * (1.0 + 1e-12)).contains(&v);
        let reference = backward_recursion(&next, &abate, &noise, &settings, 1).unwrap();
        for v in reference[0].tabulate(&settings.grid) {
            prop_assert!(inside(v), "reference value {v} outside [0, {penalty}]");
        }
        let engine = LsmcEngine::new(HutBasis::new(8, 1.0).unwrap(), &noise, 200, seed).unwrap();
        let inner = InnerSettings { max_iterations: 200, ..InnerSettings::default() };
        let step = engine.step(&next, &abate, &inner, 0).unwrap();
        for &q in &step.coefficients {
            prop_assert!((0.0..=penalty).contains(&q), "coefficient {q} outside [0, {penalty}]");
        }
        for w in step.coefficients.windows(2) {
            prop_assert!(w[1] >= w[0], "coefficients not sorted: {w:?}");
        }
        let alphas = [reference[0].clone(), next.clone()];
        let paths = simulate_paths_with(&alphas, &abate, &noise, 64, seed, 0.0, &Sequential).unwrap();
        for p in &paths {
            for &a in &p.prices {
                prop_assert!(inside(a), "path price {a} outside [0, {penalty}]");
            }
        }
        Ok(())
    })
}

fn design() -> impl Strategy<Value = (HutBasis, DesignMatrix, u64)> {
    (2usize..20, 0.25f64..2.0, 8usize..40, any::<u64>()).prop_map(|(count, spacing, per, seed)| {
        let basis = HutBasis::new(count, spacing).unwrap();
        let noise = NoiseModel::normal(0.0, 1.0).unwrap();
        let sample = build_sample(&basis, &noise, count * per, seed).unwrap();
        let matrix = DesignMatrix::new(&basis, &sample).unwrap();
        (basis, matrix, seed)
    })
}

/// Data already in the span of the basis is reproduced, and projecting a
/// fitted vector again changes nothing.
pub fn projection_idempotence() -> Result<(), String> {
    let cases = (design(), prop::collection::vec(-3.0f64..3.0, 20), prop::collection::vec(-3.0f64..3.0, 800));
    check(64, cases, |((basis, matrix, seed), q, noise_targets)| {
        let sample = build_sample(&basis, &NoiseModel::normal(0.0, 1.0).unwrap(), matrix.rows(), seed).unwrap();
        prop_assert!(!matrix.is_rank_deficient());
        let q = &q[..basis.len()];
        let fitted = matrix.fitted(q);
        let back = project(&sample, &matrix, &fitted).unwrap();
        for (a, b) in back.coefficients.iter().zip(q) {
            prop_assert!((a - b).abs() < 1e-8, "span element not reproduced: {a} vs {b}");
        }
        let targets: Vec<f64> = (0..matrix.rows()).map(|k| noise_targets[k % noise_targets.len()]).collect();
        let once = project(&sample, &matrix, &targets).unwrap();
        let twice = project(&sample, &matrix, &matrix.fitted(&once.coefficients)).unwrap();
        for (a, b) in once.coefficients.iter().zip(&twice.coefficients) {
            prop_assert!((a - b).abs() < 1e-8, "projection not idempotent: {a} vs {b}");
        }
        Ok(())
    })
}

/// Hut functions only overlap their neighbours, so `MᵀM` is symmetric
/// tridiagonal with a positive diagonal and each row of `M` has at most two
/// non-zero entries summing to one.
pub fn banded_gram() -> Result<(), String> {
    check(64, design(), |(basis, matrix, _)| {
        let n = basis.len();
        for i in 0..n {
            prop_assert!(matrix.gram(i, i) > 0.0);
            for j in 0..n {
                prop_assert_eq!(matrix.gram(i, j), matrix.gram(j, i));
                if i.abs_diff(j) > 1 {
                    prop_assert_eq!(matrix.gram(i, j), 0.0, "entry ({}, {}) off the band", i, j);
                }
            }
        }
        for k in 0..matrix.rows() {
            let row: Vec<f64> = (0..n).map(|j| matrix.entry(k, j)).collect();
            prop_assert!(row.iter().filter(|&&v| v != 0.0).count() <= 2);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        Ok(())
    })
}

/// Runs each index on its own scoped thread in reverse order of spawning.
struct Threads;

impl Executor for Threads {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        let chunks = 3usize;
        let size = n.div_ceil(chunks).max(1);
        let f = &f;
        let mut parts: Vec<(usize, Vec<T>)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..n)
                .step_by(size)
                .rev()
                .map(|lo| s.spawn(move || (lo, (lo..(lo + size).min(n)).map(f).collect::<Vec<T>>())))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        parts.sort_by_key(|p| p.0);
        parts.into_iter().flat_map(|p| p.1).collect()
    }
}

/// Same seed, same bits: reruns and a multi-threaded executor reproduce the
/// sequential output exactly.
pub fn determinism() -> Result<(), String> {
    check(16, (noise(), abatement(), any::<u64>()), |(noise, abate, seed)| {
        let terminal = PriceFunctional::digital(1.0);
        let inner = InnerSettings { max_iterations: 200, ..InnerSettings::default() };
        let run = || LsmcEngine::new(HutBasis::new(8, 1.0).unwrap(), &noise, 300, seed).unwrap().run(&terminal, 2, &abate, &inner);
        let (a, b) = (run(), run());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.steps.iter().zip(&b.steps) {
                    prop_assert_eq!(&x.coefficients, &y.coefficients);
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => return Err(TestCaseError::fail(format!("runs disagree: {:?} vs {:?}", a.is_ok(), b.is_ok()))),
        }
        let settings = small_settings();
        let seq = backward_recursion(&terminal, &abate, &noise, &settings, 2).unwrap();
        let par = backward_recursion_with(&terminal, &abate, &noise, &settings, 2, &Threads).unwrap();
        prop_assert_eq!(&seq, &par);
        let one = simulate_paths_with(&seq, &abate, &noise, 97, seed, 0.0, &Sequential).unwrap();
        let many = simulate_paths_with(&seq, &abate, &noise, 97, seed, 0.0, &Threads).unwrap();
        prop_assert_eq!(one, many);
        Ok(())
    })
}

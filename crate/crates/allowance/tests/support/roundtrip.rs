//! Serialising any valid configuration and parsing it back is the identity.

use allowance::config::{AbatementSection, BasisSection, ModelSection, NoiseSection, RunSection, SolverSection};
use allowance::Config;
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, RngAlgorithm, TestRng, TestRunner};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6f64..1e6, Just(0.0), Just(-0.0), Just(1e-300), Just(-1.0 / 3.0)]
}

fn config() -> impl Strategy<Value = Config> {
    let model = (0.1f64..1e4, 1usize..20, any::<bool>())
        .prop_map(|(penalty, horizon, normalize)| ModelSection { penalty, horizon, normalize });
    let noise = prop_oneof![
        (finite(), 0.01f64..10.0).prop_map(|(mean, stddev)| NoiseSection::Normal { mean, stddev }),
        prop::collection::vec((finite(), 0.01f64..1.0), 1..6).prop_map(|v| {
            let total: f64 = v.iter().map(|a| a.1).sum();
            NoiseSection::Discrete { atoms: v.into_iter().map(|(x, p)| [x, p / total]).collect() }
        }),
    ];
    let abatement = prop_oneof![
        Just(AbatementSection::None),
        (0.0f64..10.0, 0.1f64..3.0).prop_map(|(scale, exponent)| AbatementSection::Power { scale, exponent }),
        prop::collection::vec((0.01f64..100.0, 0.0f64..10.0), 1..6).prop_map(|v| {
            let (mut price, mut volume) = (0.0, 0.0);
            let (prices, volumes) = core::iter::once((0.0, 0.0))
                .chain(v)
                .map(|(dp, dv): (f64, f64)| {
                    price += dp;
                    volume += dv;
                    (price, volume)
                })
                .unzip();
            AbatementSection::Tabulated { prices, volumes }
        }),
    ];
    let basis = (2usize..64, 0.01f64..5.0).prop_map(|(count, spacing)| BasisSection { count, spacing });
    let solver = (
        (0usize..100_000, 1e-12f64..1.0, 1usize..1000, 0.5f64..=1.0, 1e-14f64..1e-2),
        (finite(), 1e-3f64..1e3, 2usize..10_000, prop_oneof![Just(0usize), 2usize..200]),
        (1usize..100_000, 3usize..10_000, finite(), 1e-3f64..1e3),
    )
        .prop_map(|(a, b, c)| SolverSection {
            samples: 64 + a.0,
            tolerance: a.1,
            max_iterations: a.2,
            damping: a.3,
            reference_tolerance: a.4,
            grid_min: b.0,
            grid_max: b.0 + b.1,
            grid_points: b.2,
            quadrature_nodes: b.3,
            pde_time_steps: c.0,
            pde_nodes: c.1,
            pde_min: c.2,
            pde_max: c.2 + c.3,
        });
    let run = (any::<u64>(), finite(), 0usize..10_000_000, 1usize..1000)
        .prop_map(|(seed, initial_state, paths, buckets)| RunSection { seed, initial_state, paths, buckets });
    (model, noise, abatement, basis, solver, run)
        .prop_map(|(model, noise, abatement, basis, solver, run)| Config { model, noise, abatement, basis, solver, run })
}

pub fn config_round_trip() -> Result<(), String> {
    let settings = RunnerConfig { cases: 256, failure_persistence: None, ..RunnerConfig::default() };
    let mut runner = TestRunner::new_with_rng(settings, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&config(), |cfg| {
            let text = cfg.to_toml();
            let back = Config::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_toml(), text);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

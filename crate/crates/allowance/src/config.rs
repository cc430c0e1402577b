//! Run configuration: a TOML file with sections `[model]`, `[noise]`,
//! `[abatement]`, `[basis]`, `[solver]` and `[run]`. The first three are
//! required; the rest fall back to the defaults below. Unknown keys are
//! rejected.

use std::path::Path;

use allowance_core::fixedpoint::{equidistant, SolverSettings};
use allowance_core::functional::Quadrature;
use allowance_core::lsmc::{HutBasis, InnerSettings};
use allowance_core::pde::{DiffusionSpec, PdeGrid, VolatilitySchedule};
use allowance_core::{AbatementFunction, NoiseModel, PricingConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelSection,
    pub noise: NoiseSection,
    pub abatement: AbatementSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Penalty π per missing allowance.
    pub penalty: f64,
    /// Number of periods T.
    pub horizon: usize,
    /// Report prices as fractions of π (default false: currency).
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseSection {
    Normal { mean: f64, stddev: f64 },
    /// `atoms = [[value, probability], ...]`
    Discrete { atoms: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AbatementSection {
    None,
    /// `c(a) = scale·(a⁺)^exponent`, `a` in currency.
    Power { scale: f64, exponent: f64 },
    /// Piecewise-linear through `(prices[i], volumes[i])`, starting at (0, 0).
    Tabulated { prices: Vec<f64>, volumes: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    /// Number of hut functions J (default 16).
    pub count: usize,
    /// Peak spacing h (default 1).
    pub spacing: f64,
}

impl Default for BasisSection {
    fn default() -> Self {
        BasisSection { count: 16, spacing: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Regression sample size K (default 1000).
    pub samples: usize,
    /// Inner iteration stops below `tolerance·π` (default 1e-4).
    pub tolerance: f64,
    /// Inner iteration cap (default 50).
    pub max_iterations: usize,
    /// Relaxation weight in [0.5, 1] (default 1).
    pub damping: f64,
    /// Bisection width, relative to π, for the reference solver (default 1e-8).
    pub reference_tolerance: f64,
    /// Reference state grid (default 601 points on [-7.5, 7.5]).
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Gauss–Hermite nodes for normal expectations; 0 means the exact
    /// piecewise-linear formula (default 0).
    pub quadrature_nodes: usize,
    /// PDE grid (defaults 2400 steps, 801 nodes on [-12, 12]).
    pub pde_time_steps: usize,
    pub pde_nodes: usize,
    pub pde_min: f64,
    pub pde_max: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            samples: 1000,
            tolerance: 1e-4,
            max_iterations: 50,
            damping: 1.0,
            reference_tolerance: 1e-8,
            grid_min: -7.5,
            grid_max: 7.5,
            grid_points: 601,
            quadrature_nodes: 0,
            pde_time_steps: 2400,
            pde_nodes: 801,
            pde_min: -12.0,
            pde_max: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Seed for the regression sample and simulated paths (default 2024).
    pub seed: u64,
    /// Initial state G_0 for simulations (default 0).
    pub initial_state: f64,
    /// Paths for `diagnose` (default 100000).
    pub paths: usize,
    /// Buckets per date in the martingale diagnostic (default 20).
    pub buckets: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { seed: 2024, initial_state: 0.0, paths: 100_000, buckets: 20 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid { field, message: message.to_string() }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pricing()?;
        self.noise()?;
        self.abatement()?;
        self.basis()?;
        self.inner()?;
        self.reference_settings()?;
        let s = &self.solver;
        if s.samples < self.basis.count {
            return Err(invalid("solver.samples", format!("need at least basis.count = {} samples", self.basis.count)));
        }
        if s.pde_time_steps == 0 {
            return Err(invalid("solver.pde_time_steps", "must be positive"));
        }
        if s.pde_nodes < 3 {
            return Err(invalid("solver.pde_nodes", "need at least 3 nodes"));
        }
        if !(s.pde_min < s.pde_max) {
            return Err(invalid("solver.pde_min", "must be below solver.pde_max"));
        }
        if self.run.buckets == 0 {
            return Err(invalid("run.buckets", "must be positive"));
        }
        if !self.run.initial_state.is_finite() {
            return Err(invalid("run.initial_state", "must be finite"));
        }
        Ok(())
    }

    pub fn pricing(&self) -> Result<PricingConfig, ConfigError> {
        let m = &self.model;
        if !(m.penalty.is_finite() && m.penalty > 0.0) {
            return Err(invalid("model.penalty", "must be positive"));
        }
        PricingConfig::new(m.penalty, m.horizon, m.normalize).map_err(|e| invalid("model.horizon", e))
    }

    pub fn noise(&self) -> Result<NoiseModel, ConfigError> {
        match &self.noise {
            NoiseSection::Normal { mean, stddev } => {
                NoiseModel::normal(*mean, *stddev).map_err(|e| invalid("noise.stddev", e))
            }
            NoiseSection::Discrete { atoms } => NoiseModel::discrete(atoms.iter().map(|a| (a[0], a[1])).collect())
                .map_err(|e| invalid("noise.atoms", e)),
        }
    }

    /// Abatement in currency units.
    pub fn abatement(&self) -> Result<AbatementFunction, ConfigError> {
        match &self.abatement {
            AbatementSection::None => Ok(AbatementFunction::zero()),
            AbatementSection::Power { scale, exponent } => {
                AbatementFunction::power(*scale, *exponent).map_err(|e| invalid("abatement.scale", e))
            }
            AbatementSection::Tabulated { prices, volumes } => {
                AbatementFunction::tabulated(prices.clone(), volumes.clone()).map_err(|e| invalid("abatement.prices", e))
            }
        }
    }

    /// Abatement taking prices as fractions of π, as the solvers do.
    pub fn normalized_abatement(&self) -> Result<AbatementFunction, ConfigError> {
        Ok(self.abatement()?.in_units_of(self.model.penalty))
    }

    pub fn basis(&self) -> Result<HutBasis, ConfigError> {
        HutBasis::new(self.basis.count, self.basis.spacing).map_err(|e| invalid("basis.count", e))
    }

    pub fn inner(&self) -> Result<InnerSettings, ConfigError> {
        let s = InnerSettings {
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            damping: self.solver.damping,
        };
        s.validate().map_err(|e| invalid("solver.damping", e))?;
        Ok(s)
    }

    pub fn quadrature(&self) -> Quadrature {
        match self.solver.quadrature_nodes {
            0 => Quadrature::Exact,
            n => Quadrature::gauss_hermite(n),
        }
    }

    pub fn reference_grid(&self) -> Vec<f64> {
        equidistant(self.solver.grid_min, self.solver.grid_max, self.solver.grid_points)
    }

    pub fn reference_settings(&self) -> Result<SolverSettings, ConfigError> {
        let s = &self.solver;
        if !(s.grid_min < s.grid_max) || s.grid_points < 2 {
            return Err(invalid("solver.grid_points", "need at least two points on a non-empty range"));
        }
        let settings = SolverSettings {
            tolerance: s.reference_tolerance,
            quadrature: self.quadrature(),
            ..SolverSettings::with_grid(self.reference_grid())
        };
        settings.validate().map_err(|e| invalid("solver.reference_tolerance", e))?;
        Ok(settings)
    }

    /// Continuous-time model with unit period length, σ² equal to the
    /// innovation variance, and prices as fractions of π.
    pub fn diffusion(&self) -> Result<DiffusionSpec, ConfigError> {
        let noise = self.noise()?;
        let sigma = noise.variance().sqrt();
        let vol = VolatilitySchedule::constant(sigma).map_err(|e| invalid("noise.stddev", e))?;
        DiffusionSpec::new(self.model.horizon as f64, vol, self.normalized_abatement()?)
            .map_err(|e| invalid("model.horizon", e))
    }

    pub fn pde_grid(&self) -> PdeGrid {
        let s = &self.solver;
        PdeGrid::new(s.pde_time_steps, s.pde_nodes, s.pde_min, s.pde_max)
    }
}

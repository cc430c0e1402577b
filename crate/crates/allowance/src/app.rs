//! The `solve`, `price` and `diagnose` commands, independent of argument
//! parsing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use allowance_core::fixedpoint::backward_recursion_with;
use allowance_core::lsmc::{LsmcEngine, LsmcSolution};
use allowance_core::pde::{grid_halving, solve_pde, Refinement, Surface};
use allowance_core::pricing::{
    martingale_diagnostic, price_european_call, simulate_paths_with, CallSpec, CallValuation,
    ConditionalExpectation, DiagnosticSettings, GridExpectation, MartingaleReport, MIN_DIAGNOSTIC_PATHS,
};
use allowance_core::{Error, PriceFunctional};

use crate::config::{Config, ConfigError};
use crate::exec::RayonExecutor;
use crate::io::{alpha_rows, csv_bytes, read_alphas, ArtifactWriter, Cell, RunInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Reference,
    Lsmc,
    Pde,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Reference => "reference",
            Method::Lsmc => "lsmc",
            Method::Pde => "pde",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    OutOfRange(String),
    #[error("{0}")]
    Flagged(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Convergence(_) => 3,
            Failure::OutOfRange(_) => 4,
            Failure::Flagged(_) => 5,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidInput(_) | Error::NonConvexCost(_) | Error::InsufficientPaths { .. } => Failure::Config(msg),
            Error::OutOfRange { .. } => Failure::OutOfRange(msg),
            Error::NotBracketing { .. }
            | Error::NoConvergence { .. }
            | Error::TreeTooLarge { .. }
            | Error::UnstableGrid { .. }
            | Error::Instability { .. } => Failure::Convergence(msg),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => Failure::Io(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub struct Context {
    pub config: Config,
    pub exec: RayonExecutor,
    started: Instant,
}

impl Context {
    pub fn new(config: Config, workers: usize) -> Result<Self, Failure> {
        let exec = RayonExecutor::new(workers).map_err(|e| Failure::Config(format!("--workers: {e}")))?;
        Ok(Context { config, exec, started: Instant::now() })
    }

    fn scale(&self) -> f64 {
        if self.config.model.normalize {
            1.0
        } else {
            self.config.model.penalty
        }
    }

    fn info(&self, command: &str) -> RunInfo {
        RunInfo {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: self.config.to_toml(),
            seed: self.config.run.seed,
            workers: self.exec.workers(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        }
    }

    pub fn reference(&self) -> Result<Vec<PriceFunctional>, Failure> {
        let c = &self.config;
        Ok(backward_recursion_with(
            &PriceFunctional::digital(1.0),
            &c.normalized_abatement()?,
            &c.noise()?,
            &c.reference_settings()?,
            c.model.horizon,
            &self.exec,
        )?)
    }

    pub fn engine(&self) -> Result<LsmcEngine, Failure> {
        let c = &self.config;
        Ok(LsmcEngine::new(c.basis()?, &c.noise()?, c.solver.samples, c.run.seed)?)
    }

    pub fn lsmc(&self) -> Result<LsmcSolution, Failure> {
        let c = &self.config;
        Ok(self.engine()?.run(&PriceFunctional::digital(1.0), c.model.horizon, &c.normalized_abatement()?, &c.inner()?)?)
    }

    pub fn pde(&self) -> Result<Surface, Failure> {
        Ok(solve_pde(&self.config.diffusion()?, &self.config.pde_grid(), 1.0)?)
    }

    /// Discrete-date functionals from the PDE surface, with the innovation
    /// mean absorbed as a deterministic shift of the state.
    pub fn pde_alphas(&self, surface: &Surface) -> Result<Vec<PriceFunctional>, Failure> {
        let horizon = self.config.model.horizon;
        let drift = self.config.noise()?.mean();
        let grid = self.config.reference_grid();
        let mut out = Vec::with_capacity(horizon + 1);
        for t in 0..horizon {
            let shift = drift * (horizon - t) as f64;
            let values = grid.iter().map(|&g| surface.eval(t as f64, g + shift)).collect();
            out.push(PriceFunctional::from_values(grid.clone(), values, 1.0)?);
        }
        out.push(PriceFunctional::digital(1.0));
        Ok(out)
    }

    fn alphas(&self, method: Method, file: Option<&Path>) -> Result<Vec<PriceFunctional>, Failure> {
        if let Some(path) = file {
            let alphas = read_alphas(path, self.scale()).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            if alphas.len() != self.config.model.horizon + 1 {
                return Err(Failure::Config(format!(
                    "{}: has {} dates, the model has horizon {}",
                    path.display(),
                    alphas.len() - 1,
                    self.config.model.horizon
                )));
            }
            return Ok(alphas);
        }
        match method {
            Method::Reference => self.reference(),
            Method::Lsmc => self.lsmc()?.functionals().map_err(Failure::from),
            Method::Pde => {
                let surface = self.pde()?;
                self.pde_alphas(&surface)
            }
        }
    }
}

/// Runs one solver and writes `alpha.csv` plus method-specific artifacts.
pub fn solve(ctx: &Context, method: Method, out: &Path) -> Result<String, Failure> {
    let mut files = ArtifactWriter::new(out)?;
    let scale = ctx.scale();
    let grid = ctx.config.reference_grid();
    let mut summary = String::new();
    let alphas = match method {
        Method::Reference => ctx.reference()?,
        Method::Lsmc => {
            let solution = ctx.lsmc()?;
            let engine = &solution.engine;
            let peaks = engine.basis().peaks();
            let mut coeffs = Vec::new();
            let mut residuals = Vec::new();
            let mut steps = Vec::new();
            for s in &solution.steps {
                for (j, (&q, &se)) in s.coefficients.iter().zip(&s.standard_errors).enumerate() {
                    coeffs.push(vec![s.t.into(), j.into(), peaks[j].into(), (scale * q).into(), (scale * se).into()]);
                }
                for (n, &r) in s.residuals.iter().enumerate() {
                    residuals.push(vec![s.t.into(), (n + 1).into(), (scale * r).into()]);
                }
                steps.push(vec![
                    s.t.into(),
                    s.iterations.into(),
                    (scale * s.residuals[s.residuals.len() - 1]).into(),
                    usize::from(s.conditional_targets).into(),
                    usize::from(s.rank_deficient).into(),
                ]);
                let _ = writeln!(summary, "t = {}: {} inner iterations", s.t, s.iterations);
            }
            files.write("coefficients.csv", &csv_bytes(&["t", "j", "peak", "coefficient", "std_error"], coeffs))?;
            files.write("residuals.csv", &csv_bytes(&["t", "iteration", "residual"], residuals))?;
            files.write(
                "steps.csv",
                &csv_bytes(&["t", "iterations", "final_residual", "conditional_targets", "rank_deficient"], steps),
            )?;
            solution.functionals()?
        }
        Method::Pde => {
            let surface = ctx.pde()?;
            let stride = (surface.times.len() - 1) / (4 * ctx.config.model.horizon).max(1);
            let mut rows = Vec::new();
            for k in (0..surface.times.len()).step_by(stride.max(1)) {
                for (i, &g) in surface.states.iter().enumerate() {
                    rows.push(vec![surface.times[k].into(), g.into(), (scale * surface.values[k][i]).into()]);
                }
            }
            files.write("surface.csv", &csv_bytes(&["t", "g", "alpha"], rows))?;
            let grid = ctx.config.pde_grid();
            let coarse = allowance_core::pde::PdeGrid {
                time_steps: (grid.time_steps / 4).max(1),
                nodes: (grid.nodes - 1) / 4 + 1,
                ..grid.clone()
            };
            let table = grid_halving(&ctx.config.diffusion()?, &coarse, 1.0, 3, Refinement::Both, (-3.0, 3.0))?;
            let rows = table.iter().map(|r| {
                vec![r.time_steps.into(), r.nodes.into(), (scale * r.difference).into(), r.order.into()]
            });
            files.write("convergence.csv", &csv_bytes(&["time_steps", "nodes", "difference", "order"], rows))?;
            ctx.pde_alphas(&surface)?
        }
    };
    files.write("alpha.csv", &csv_bytes(&["t", "g", "alpha"], alpha_rows(&alphas, &grid, scale)))?;
    if method != Method::Pde {
        let (lsmc, reference) = match method {
            Method::Lsmc => (alphas.clone(), ctx.reference()?),
            _ => (ctx.lsmc()?.functionals()?, alphas.clone()),
        };
        let mut worst = vec![0.0f64; alphas.len()];
        let mut rows = Vec::new();
        for t in 0..alphas.len() {
            for &g in &grid {
                let (a, b) = (scale * lsmc[t].evaluate(g), scale * reference[t].evaluate(g));
                worst[t] = worst[t].max((a - b).abs());
                rows.push(vec![t.into(), g.into(), a.into(), b.into(), (a - b).into()]);
            }
        }
        files.write("comparison.csv", &csv_bytes(&["t", "g", "alpha_lsmc", "alpha_reference", "difference"], rows))?;
        for (t, w) in worst.iter().enumerate().take(alphas.len() - 1) {
            let _ = writeln!(summary, "t = {t}: max |lsmc - reference| = {w:.6}");
        }
    }
    let artifacts = files.finish(&ctx.info(&format!("solve --method {}", method.name())))?;
    for a in artifacts {
        let _ = writeln!(summary, "wrote {} ({} bytes)", out.join(&a.name).display(), a.bytes);
    }
    Ok(summary)
}

pub struct PriceRequest {
    pub method: Method,
    pub alphas: Option<PathBuf>,
    pub maturity: usize,
    pub strike: f64,
    pub spot: f64,
    pub t_now: usize,
}

pub fn price(ctx: &Context, req: &PriceRequest, out: &Path) -> Result<(CallValuation, String), Failure> {
    let scale = ctx.scale();
    let alphas = ctx.alphas(req.method, req.alphas.as_deref())?;
    let spec = CallSpec { maturity: req.maturity, strike: req.strike / scale };
    let abate = ctx.config.normalized_abatement()?;
    let engine;
    let grid_op;
    let op: &dyn ConditionalExpectation = match req.method {
        Method::Lsmc => {
            engine = ctx.engine()?;
            &engine
        }
        _ => {
            grid_op = GridExpectation {
                grid: ctx.config.reference_grid(),
                noise: ctx.config.noise()?,
                quadrature: ctx.config.quadrature(),
            };
            &grid_op
        }
    };
    let value = price_european_call(&alphas, &abate, op, spec, req.t_now, req.spot / scale).map_err(|e| match e {
        Error::OutOfRange { value, min, max } => Failure::OutOfRange(format!(
            "spot {} outside the attainable range [{}, {}] at t = {}",
            scale * value,
            scale * min,
            scale * max,
            req.t_now
        )),
        e => e.into(),
    })?;
    let mut files = ArtifactWriter::new(out)?;
    let rows = value.surface.iter().flat_map(|(u, curve)| {
        curve.knots().iter().zip(curve.values()).map(move |(&g, &v)| vec![Cell::from(*u), g.into(), (scale * v).into()])
    });
    files.write("call_surface.csv", &csv_bytes(&["t", "g", "value"], rows.collect::<Vec<_>>()))?;
    files.finish(&ctx.info(&format!(
        "price --method {} --tau {} --strike {} --spot {} --t-now {}",
        req.method.name(),
        req.maturity,
        req.strike,
        req.spot,
        req.t_now
    )))?;
    let text = format!(
        "price {}\nstd_error {}\nstate {}\n",
        scale * value.price,
        scale * value.std_error,
        value.state
    );
    Ok((CallValuation { price: scale * value.price, std_error: scale * value.std_error, ..value }, text))
}

pub struct DiagnoseRequest {
    pub method: Method,
    pub alphas: Option<PathBuf>,
    pub paths: usize,
    pub export_paths: bool,
}

/// Simulates paths, runs the martingale diagnostic and writes
/// `diagnostic.csv`. A raised flag is reported as [`Failure::Flagged`]
/// carrying the full report.
pub fn diagnose(ctx: &Context, req: &DiagnoseRequest, out: &Path) -> Result<(MartingaleReport, String), Failure> {
    if req.paths < MIN_DIAGNOSTIC_PATHS {
        return Err(Error::InsufficientPaths { got: req.paths, required: MIN_DIAGNOSTIC_PATHS }.into());
    }
    let c = &ctx.config;
    let scale = ctx.scale();
    let alphas = ctx.alphas(req.method, req.alphas.as_deref())?;
    let paths = simulate_paths_with(
        &alphas,
        &c.normalized_abatement()?,
        &c.noise()?,
        req.paths,
        c.run.seed,
        c.run.initial_state,
        &ctx.exec,
    )?;
    let settings = DiagnosticSettings { buckets: c.run.buckets, ..Default::default() };
    let report = martingale_diagnostic(&paths, 1.0, &settings)?;

    let mut files = ArtifactWriter::new(out)?;
    let mut rows = Vec::new();
    for step in &report.steps {
        for (b, bucket) in step.buckets.iter().enumerate() {
            rows.push(vec![
                step.t.into(),
                b.into(),
                bucket.state_low.into(),
                bucket.state_high.into(),
                bucket.count.into(),
                (scale * bucket.mean_increment).into(),
                (scale * bucket.std_error).into(),
                usize::from(bucket.flagged).into(),
            ]);
        }
    }
    files.write(
        "diagnostic.csv",
        &csv_bytes(&["t", "bucket", "state_low", "state_high", "count", "mean_increment", "std_error", "flagged"], rows),
    )?;
    if req.export_paths {
        let rows = paths.iter().enumerate().flat_map(|(i, p)| {
            p.states
                .iter()
                .zip(&p.prices)
                .enumerate()
                .map(move |(t, (&g, &a))| vec![Cell::from(i), t.into(), g.into(), (scale * a).into()])
        });
        files.write("paths.csv", &csv_bytes(&["path_id", "t", "G", "A"], rows.collect::<Vec<_>>()))?;
    }
    files.finish(&ctx.info(&format!("diagnose --paths {}", req.paths)))?;

    let mut text = String::new();
    let _ = writeln!(text, "paths {}", req.paths);
    for step in &report.steps {
        let flagged = step.buckets.iter().filter(|b| b.flagged).count();
        let worst = step
            .buckets
            .iter()
            .map(|b| if b.std_error > 0.0 { (b.mean_increment / b.std_error).abs() } else { 0.0 })
            .fold(0.0, f64::max);
        let _ = writeln!(text, "t = {}: {flagged} of {} buckets flagged, max |z| = {worst:.2}", step.t, step.buckets.len());
    }
    let _ = writeln!(
        text,
        "mean A_0 = {:.6}, mean A_T = {:.6}, standard error {:.6}, z = {:.2}",
        scale * report.initial_mean,
        scale * report.terminal_mean,
        scale * report.terminal_std_error,
        report.terminal_z()
    );
    let _ = writeln!(
        text,
        "terminal prices digital: {}, shortage fraction {:.5}",
        report.terminal_digital, report.terminal_shortage_fraction
    );
    if report.any_flag() || report.terminal_z() > 3.0 || !report.terminal_digital {
        return Err(Failure::Flagged(text));
    }
    Ok((report, text))
}

use std::path::PathBuf;
use std::process::ExitCode;

use allowance::app::{self, Context, DiagnoseRequest, Failure, Method, PriceRequest};
use allowance::exec::resolve_workers;
use allowance::Config;
use clap::{Parser, Subcommand, ValueEnum};

/// Emission allowance prices: fixed-point reference solver, least-squares
/// Monte Carlo, PDE, path diagnostics and call valuation.
#[derive(Parser)]
#[command(name = "allowance", version)]
struct Cli {
    /// Worker threads; defaults to $ALLOWANCE_WORKERS, then one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Reference,
    Lsmc,
    Pde,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Reference => Method::Reference,
            MethodArg::Lsmc => Method::Lsmc,
            MethodArg::Pde => Method::Pde,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compute α_0..α_T and write alpha.csv and a manifest.
    Solve {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides run.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Value a European call on the allowance price.
    Price {
        config: PathBuf,
        /// Maturity date τ.
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        strike: f64,
        /// Current allowance price.
        #[arg(long)]
        spot: f64,
        #[arg(long)]
        t_now: usize,
        #[arg(long, value_enum, default_value = "lsmc")]
        method: MethodArg,
        /// Use price functionals from an alpha.csv instead of solving.
        #[arg(long)]
        alphas: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate paths and test the martingale property bucket by bucket.
    Diagnose {
        config: PathBuf,
        /// Number of simulated paths (at least 10000); defaults to run.paths.
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long, value_enum, default_value = "reference")]
        method: MethodArg,
        #[arg(long)]
        alphas: Option<PathBuf>,
        /// Also write every simulated path to paths.csv.
        #[arg(long)]
        export_paths: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn context(config: &PathBuf, seed: Option<u64>, workers: Option<usize>) -> Result<Context, Failure> {
    let mut cfg = Config::load(config).map_err(|e| match e {
        allowance::config::ConfigError::Read { .. } => Failure::Io(e.to_string()),
        _ => Failure::Config(format!("{}: {e}", config.display())),
    })?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    let workers = resolve_workers(workers).map_err(Failure::Config)?;
    Context::new(cfg, workers)
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Solve { config, method, out, seed } => {
            let ctx = context(&config, seed, cli.workers)?;
            app::solve(&ctx, method.into(), &out)
        }
        Command::Price { config, tau, strike, spot, t_now, method, alphas, out, seed } => {
            let ctx = context(&config, seed, cli.workers)?;
            let req = PriceRequest { method: method.into(), alphas, maturity: tau, strike, spot, t_now };
            app::price(&ctx, &req, &out).map(|(_, text)| text)
        }
        Command::Diagnose { config, paths, method, alphas, export_paths, out, seed } => {
            let ctx = context(&config, seed, cli.workers)?;
            let paths = paths.unwrap_or(ctx.config.run.paths);
            let req = DiagnoseRequest { method: method.into(), alphas, paths, export_paths };
            app::diagnose(&ctx, &req, &out).map(|(_, text)| text)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(Failure::Flagged(report)) => {
            print!("{report}");
            eprintln!("martingale diagnostic raised a flag");
            ExitCode::from(5)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

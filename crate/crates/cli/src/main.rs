use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod commands;
mod config;
mod error;

use artifacts::RunContext;
use config::RunConfig;
use error::CliError;

/// Permanental Cox process fitting, simulation and normal-approximation
/// diagnostics on lattices.
#[derive(Parser)]
#[command(name = "firecox", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `simulate.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `simulate.replicates`.
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long, short, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Bin `lat,lon,year` incident records into yearly lattice counts.
    Ingest {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit per-cell (l, sigma^2) and calibrate lambda_c from yearly counts.
    Fit {
        #[arg(long)]
        counts: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate replicate counts from a fitted spec.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// W1, Shapiro-Wilk and variance-rate diagnostics of a simulated run.
    Diagnose {
        /// Directory written by `simulate`.
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-simulate a spec at several lambda_c values and compare W1 curves.
    SweepLambda {
        #[arg(long)]
        spec: PathBuf,
        /// Comma-separated lambda_c values.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        lambdas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the explicit normal-approximation bound over a range of n.
    Bound {
        #[command(flatten)]
        params: BoundFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic incident dataset from a homogeneous model.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Print the default configuration as TOML.
    Config {
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct BoundFlags {
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    r_mu_nu: Option<f64>,
    #[arg(long)]
    n_min: Option<f64>,
    #[arg(long)]
    n_max: Option<f64>,
    #[arg(long)]
    n_points: Option<usize>,
}

fn context(common: &Common, name: &str, edit: impl FnOnce(&mut RunConfig)) -> Result<RunContext, CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.simulate.seed = s;
    }
    if let Some(r) = common.replicates {
        cfg.simulate.replicates = r;
    }
    edit(&mut cfg);
    RunContext::new(cfg, name, &common.out_dir)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Ingest { input, common } => commands::ingest(context(&common, "ingest", |_| {})?, &input),
        Command::Fit { counts, common } => commands::fit(context(&common, "fit", |_| {})?, &counts),
        Command::Simulate { spec, common } => commands::simulate(context(&common, "simulate", |_| {})?, &spec),
        Command::Diagnose { run, common } => commands::diagnose(context(&common, "diagnose", |_| {})?, &run),
        Command::SweepLambda { spec, lambdas, common } => {
            commands::sweep_lambda(context(&common, "sweep-lambda", |_| {})?, &spec, &lambdas)
        }
        Command::Bound { params: p, common } => {
            let ctx = context(&common, "bound", |c| {
                let b = &mut c.bound;
                b.d = p.d.unwrap_or(b.d);
                b.m = p.m.unwrap_or(b.m);
                b.kappa = p.kappa.unwrap_or(b.kappa);
                b.lambda = p.lambda.unwrap_or(b.lambda);
                b.gamma = p.gamma.unwrap_or(b.gamma);
                b.k = p.k.unwrap_or(b.k);
                b.r_mu_nu = p.r_mu_nu.unwrap_or(b.r_mu_nu);
                b.n_min = p.n_min.unwrap_or(b.n_min);
                b.n_max = p.n_max.unwrap_or(b.n_max);
                b.n_points = p.n_points.unwrap_or(b.n_points);
            })?;
            commands::bound(ctx)
        }
        Command::Synth { common } => commands::synth(context(&common, "synth", |_| {})?),
        Command::Config { out } => {
            let text = RunConfig::default().to_toml()?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::Output(p.display().to_string(), e))?,
                None => print!("{text}"),
            }
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! `frontlab`: batch driver for traveling-front computations.
//!
//! Exit codes: 0 success, 1 numerical or quality failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::GreensFlags;
use config::{FileConfig, GridFlags, RunConfig, DEFAULT_SEED};
use frontlab::Error;
use report::RunReport;

#[derive(Parser)]
#[command(name = "frontlab", version, about = "Traveling fronts of nonlocal bistable equations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output directory [default: frontlab-out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file with defaults for any of the flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit timings and run single-threaded so reports are byte-identical
    #[arg(long, global = true)]
    reproducible: bool,
    /// Continue past failed hypothesis checks
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Args, Clone)]
struct ModelArg {
    /// Built-in model name (neural, ising, phase) or path to a TOML model file
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Clone, Copy)]
struct GridArgs {
    /// Half-width L of the domain [-L, L]
    #[arg(long = "L", value_name = "L")]
    half_width: Option<f64>,
    /// Number of grid intervals
    #[arg(long = "n", value_name = "N")]
    intervals: Option<usize>,
}

impl From<GridArgs> for GridFlags {
    fn from(g: GridArgs) -> Self {
        GridFlags {
            half_width: g.half_width,
            intervals: g.intervals,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the model hypotheses
    Check {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Solve for the wave speed and profile
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Earlier wave profile used as the initial guess
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Compare fitted tail rates with the characteristic roots
    Rates {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Fit window in |ξ| [default: 0.3L 0.8L]
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        window: Option<Vec<f64>>,
        /// Use a saved wave instead of solving
        #[arg(long)]
        wave: Option<PathBuf>,
    },
    /// Spectrum of the linearization about the wave
    Spectrum {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Green's function of a constant-coefficient operator
    Greens {
        #[arg(long, allow_negative_numbers = true)]
        d: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        c: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        a: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        b: Option<f64>,
        /// Real spectral shift λ
        #[arg(long, allow_negative_numbers = true)]
        lambda: Option<f64>,
        /// gaussian:σ, laplace:β, bump:R or tabulated:<file> [default: gaussian:1]
        #[arg(long)]
        kernel: Option<String>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run every built-in model end to end
    Demo,
}

fn run_config(global: &Global, file: &FileConfig, model: Option<&ModelArg>) -> RunConfig {
    RunConfig {
        model: model.and_then(|m| m.model.clone()).or_else(|| file.model.clone()),
        out: global
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(commands::default_out),
        seed: global.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        reproducible: global.reproducible,
        force: global.force,
    }
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    let file = match &cli.global.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if cli.global.reproducible {
        faer::set_global_parallelism(faer::Par::Seq);
    }
    let g = &cli.global;
    let report: RunReport = match cli.command {
        Command::Check { ref model } => commands::run_check(commands::prepare_check(run_config(g, &file, Some(model)))?),
        Command::Solve { ref model, grid, ref init } => commands::run_solve(commands::prepare_solve(
            run_config(g, &file, Some(model)),
            &file,
            grid.into(),
            init.as_deref(),
        )?),
        Command::Rates {
            ref model,
            grid,
            ref window,
            ref wave,
        } => commands::run_rates(commands::prepare_rates(
            run_config(g, &file, Some(model)),
            &file,
            grid.into(),
            window.as_deref(),
            wave.as_deref(),
        )?),
        Command::Spectrum { ref model, grid } => {
            commands::run_spectrum(commands::prepare_spectrum(run_config(g, &file, Some(model)), &file, grid.into())?)
        }
        Command::Greens {
            d,
            c,
            a,
            b,
            lambda,
            ref kernel,
            grid,
        } => commands::run_greens(commands::prepare_greens(
            run_config(g, &file, None),
            &file,
            GreensFlags {
                d,
                c,
                a,
                b,
                lambda,
                kernel: kernel.clone(),
                half_width: grid.half_width,
                intervals: grid.intervals,
            },
        )?),
        Command::Demo => {
            let demo = commands::run_demo(run_config(g, &file, None), &file)?;
            for r in &demo.runs {
                summarize(r);
            }
            return Ok(demo.exit_code);
        }
    };
    summarize(&report);
    Ok(report.exit_code)
}

fn summarize(report: &RunReport) {
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!(
            "{}: check failed: {} = {:e} (required {} {:e})",
            report.command, c.name, c.value, c.relation, c.tolerance
        );
    }
    if let Some(e) = &report.error {
        eprintln!("{}: error: {e}", report.command);
    }
    let model = report.model.as_ref().map(|m| m.name.as_str()).unwrap_or("-");
    println!("{} [{model}]: {} (exit {})", report.command, report.status, report.exit_code);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    };
    ExitCode::from(code as u8)
}

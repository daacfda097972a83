//! `p2m`: fit pixel surrogates, simulate in-pixel layers, and estimate
//! system bandwidth, energy and delay.

mod commands;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use p2m_core::metrics::DelayMode;
use p2m_core::Error;

use commands::VerifyFailed;
use inputs::{Inputs, CONFIG_DIR_ENV};

#[derive(Parser)]
#[command(name = "p2m", version, about = "Processing-in-pixel front-end simulator and cost model")]
struct Cli {
    /// Directory searched for constants.toml, surrogate.toml and adc.toml
    /// when the matching flag is absent.
    #[arg(long, env = CONFIG_DIR_ENV, global = true, value_name = "DIR")]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sequential,
    Conservative,
}

impl From<Mode> for DelayMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sequential => DelayMode::Sequential,
            Mode::Conservative => DelayMode::Conservative,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a polynomial transfer-function surrogate to pixel samples.
    Fit {
        /// CSV with header `w_norm,i_norm,v_out`.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value_t = 3)]
        degree_w: usize,
        #[arg(long, default_value_t = 3)]
        degree_i: usize,
        /// Keep a fit that fails the monotonicity check (recorded as a warning).
        #[arg(long)]
        allow_non_monotone: bool,
        /// Mark the surrogate as fitted to synthetic data.
        #[arg(long)]
        synthetic: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run an image through the in-pixel layer and ADC.
    Simulate {
        /// Binary PGM/PPM or raw tensor.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        layer: PathBuf,
        /// Surrogate file, or `bundled` for the synthetic default. Ideal multiply when absent.
        #[arg(long)]
        surrogate: Option<PathBuf>,
        #[arg(long)]
        adc: Option<PathBuf>,
        /// Override the ADC full-scale value.
        #[arg(long)]
        full_scale: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Energy, delay and EDP of each model, with ratios and a normalized breakdown.
    Analyze {
        /// Architecture file (repeatable). The bundled models when absent.
        #[arg(long)]
        arch: Vec<PathBuf>,
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sequential")]
        mode: Mode,
        /// Activation bit depth of the in-pixel layer output.
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a grid of in-pixel layer shapes.
    Sweep {
        #[arg(long)]
        grid: PathBuf,
        /// Downstream network; its in-pixel layer is replaced at each point.
        #[arg(long)]
        arch: Option<PathBuf>,
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Randomized pipeline-vs-oracle and counter-vs-closed-form checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 20)]
        max_side: usize,
        #[arg(long, default_value_t = 8)]
        max_out_channels: usize,
        #[arg(long, default_value_t = 100_000)]
        counter_cases: u64,
        /// Flip one sign tag per channel in the pipeline (self-test of the checker).
        #[arg(long, hide = true)]
        corrupt_sign: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Long-format tables for plotting.
    PlotData {
        #[arg(long)]
        arch: Vec<PathBuf>,
        #[arg(long)]
        constants: Option<PathBuf>,
        /// Also emit the sweep over this grid.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let inputs = Inputs { config_dir: cli.config_dir };
    match cli.command {
        Command::Fit { samples, degree_w, degree_i, allow_non_monotone, synthetic, out } => {
            commands::fit(&commands::FitArgs { samples, degree_w, degree_i, allow_non_monotone, synthetic, out })
        }
        Command::Simulate { image, layer, surrogate, adc, full_scale, out } => {
            commands::simulate(&inputs, &commands::SimulateArgs { image, layer, surrogate, adc, full_scale, out })
        }
        Command::Analyze { arch, constants, mode, bits, out } => {
            commands::analyze_cmd(&inputs, &commands::AnalyzeArgs { arch, constants, mode: mode.into(), bits, out })
        }
        Command::Sweep { grid, arch, constants, out } => {
            commands::sweep(&inputs, &commands::SweepArgs { grid, arch, constants, out })
        }
        Command::Verify { seed, instances, max_side, max_out_channels, counter_cases, corrupt_sign, out } => {
            commands::verify(&commands::VerifyArgs {
                seed,
                instances,
                max_side,
                max_out_channels,
                counter_cases,
                corrupt_sign,
                out,
            })
        }
        Command::PlotData { arch, constants, grid, bits, out } => {
            commands::plot_data(&inputs, &commands::PlotArgs { arch, constants, grid, bits, out })
        }
    }
}

/// 1 verification failure, 2 usage, 3 I/O, 4 parse or config, 5 shape or
/// range, 6 rank, 7 monotonicity, 8 overflow, 9 model.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerifyFailed>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_) => 3,
                Error::Parse(_) | Error::Config(_) => 4,
                Error::Shape(_) | Error::Geometry(_) | Error::Index(_) | Error::Range(_) | Error::Domain { .. } => 5,
                Error::Rank { .. } => 6,
                Error::Monotonicity(_) => 7,
                Error::Overflow(_) => 8,
                Error::Model(_) => 9,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if e.downcast_ref::<VerifyFailed>().is_none() {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

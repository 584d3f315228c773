//! `lrcfm` command-line front end.
//!
//! Exit codes: 0 success, 2 input/config error, 3 numerical failure,
//! 4 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use lrcfm::designer::SweepVariable;
use lrcfm::pulse_fit::FitModel;

#[derive(Debug, Parser)]
#[command(name = "lrcfm", version, about = "Design and analysis toolkit for long-Rayleigh-length confocal microscopy")]
pub struct Cli {
    /// Run configuration (flat `key = value` file with unit suffixes).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps and per-pixel fits.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for synthetic data.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal Rayleigh length, focal length and catalog lens for the config.
    ///
    /// Writes report.json and sweep.csv. Plot `detected_signal` against
    /// `variable` from sweep.csv for the detected-signal curve; `volume_m3`,
    /// `icw`, `polarization` and `product` give the individual factors.
    Design,
    /// Sweep one design variable and write sweep.csv.
    ///
    /// With `--variable detection-proportion` the lens is fixed at the CFM
    /// focal length and cfm_ratio.csv (`ratio` against `proportion`) holds
    /// the LRCFM/CFM detected-signal ratio.
    Sweep {
        /// rayleigh | waist | detection-proportion
        #[arg(long)]
        variable: SweepVariable,
        #[arg(long)]
        points: Option<usize>,
        /// Lower grid bound, with units for lengths (e.g. `1 um`).
        #[arg(long)]
        min: Option<String>,
        #[arg(long)]
        max: Option<String>,
        /// Use linearly spaced points instead of log spacing.
        #[arg(long)]
        linear: bool,
        /// Focal length of the conventional reference lens (e.g. `3.6 mm`).
        #[arg(long)]
        cfm_focal: Option<String>,
    },
    /// Fit one pulse-sequence time series.
    Fit {
        /// rabi | t1 | t2
        #[arg(long)]
        model: FitModel,
        /// CSV with header `tau_s,signal[,sigma]`.
        #[arg(long)]
        input: PathBuf,
        /// Initial parameters a1,a2,..., in SI units.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        init: Option<Vec<f64>>,
    },
    /// Fit every pixel listed in a manifest and write map.csv, map.json and stats.json.
    Map {
        #[arg(long)]
        model: FitModel,
        /// CSV with header `x_um,y_um,file`; files resolve against its directory.
        #[arg(long)]
        manifest: PathBuf,
        /// Pixel pitch with units (e.g. `50 um`).
        #[arg(long)]
        pitch: String,
    },
    /// Generate per-pixel time series from a truth field, plus manifest.csv.
    Simulate {
        #[arg(long)]
        model: FitModel,
        /// CSV with header `x_um,y_um,a1,...,aN[,pi_true_s,pi_applied_s]`.
        #[arg(long)]
        truth: PathBuf,
        /// Standard deviation of the additive Gaussian noise, signal units.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value = "0 s")]
        tau_min: String,
        #[arg(long)]
        tau_max: String,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(4),
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}

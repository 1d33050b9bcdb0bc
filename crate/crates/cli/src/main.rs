//! `stgp` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 data or configuration error,
//! 3 numerical failure. `STGP_THREADS` caps the worker pool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stgp_core::dynamics::ModelKind;
use stgp_core::StgpError;

#[derive(Debug, Parser)]
#[command(name = "stgp", version, about = "Spatio-temporal state-space modelling, filtering and change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CubeFormat {
    /// Binary cube file.
    Bin,
    /// Directory with `meta.toml` and one `frame_NNNNN.csv` per frame.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Proposed,
    Baseline,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Proposed => ModelKind::Proposed,
            ModelArg::Baseline => ModelKind::Baseline,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the advection-diffusion scenario into a data cube.
    Simulate {
        /// Scenario TOML; the built-in scenario is used when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "bin")]
        format: CubeFormat,
        /// Directory for `proposed.toml` and `baseline.toml` model parameters
        /// matched to the scenario.
        #[arg(long)]
        params_out: Option<PathBuf>,
    },
    /// Maximum-likelihood fit of the proposed model.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Initial parameters plus optional `layout`, `remove_mean`, `freeze`
        /// and `[optimizer]` settings.
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Kalman filter; writes fields, coefficients and modal traces as CSV.
    Filter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum, default_value = "proposed")]
        model: ModelArg,
        #[arg(long)]
        out: PathBuf,
        /// Keep only wavenumbers with `max(|k1|,|k2|) <= N`.
        #[arg(long)]
        lowpass: Option<i64>,
        /// Also write RTS-smoothed traces.
        #[arg(long)]
        smooth: bool,
    },
    /// Tabulate the power spectrum on integer wavenumbers.
    Spectrum {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Largest `|k|` per axis.
        #[arg(long, default_value_t = 8)]
        kmax: i64,
        /// Temporal angular frequencies, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        v: Vec<f64>,
    },
    /// Change detection on β-traces written by `filter`.
    Detect {
        #[arg(long)]
        traces: PathBuf,
        /// Detection TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both models on the same data and tabulate fit and alarms.
    CompareBaseline {
        #[arg(long)]
        data: PathBuf,
        /// Proposed-model parameters.
        #[arg(long)]
        params: PathBuf,
        /// Baseline parameters; `--params` is reused when omitted.
        #[arg(long)]
        baseline_params: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &StgpError) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("STGP_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("STGP_THREADS must be a positive integer, got {v:?}"))?;
    if n == 0 {
        return Err("STGP_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match cli.command {
        Command::Simulate { scenario, out, seed, format, params_out } => {
            commands::simulate(scenario.as_deref(), &out, seed, format, params_out.as_deref())
        }
        Command::Fit { data, init, out } => commands::fit(&data, &init, &out),
        Command::Filter { data, params, model, out, lowpass, smooth } => {
            commands::filter(&data, &params, model.into(), &out, lowpass, smooth)
        }
        Command::Spectrum { params, out, kmax, v } => commands::spectrum(&params, &out, kmax, &v),
        Command::Detect { traces, config, out } => commands::detect(&traces, config.as_deref(), &out),
        Command::CompareBaseline { data, params, baseline_params, config, out } => {
            commands::compare(&data, &params, baseline_params.as_deref(), config.as_deref(), &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spinrelax_cli::{commands, pipeline, CliError, RunConfig};
use spinrelax_core::RescaleMode;

#[derive(Parser)]
#[command(name = "spinrelax", version, about = "Relaxation dynamics of disordered spin ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    FreqDifference,
    MaxMedian,
}

impl From<Mode> for RescaleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::FreqDifference => RescaleMode::FreqDifference,
            Mode::MaxMedian => RescaleMode::MaxMedian,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every realization and engine of a config.
    Run { config: PathBuf },
    /// Rescale traces by their median frequencies and measure the collapse.
    Compare {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "freq-difference")]
        mode: Mode,
        /// Output stem; `.json` and `.csv` are appended.
        #[arg(long, default_value = "collapse")]
        out: PathBuf,
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
    },
    /// Fit a stretched exponential to a trace and print the result as JSON.
    Fit {
        trace: PathBuf,
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
        /// Rescale time before fitting.
        #[arg(long, value_enum)]
        rescale: Option<Mode>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the positions of every realization without simulating.
    Positions {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = pipeline::run(&cfg)?;
            println!(
                "wrote {} files to {} in {:.1} s",
                outcome.manifest.outputs.len(),
                cfg.output_dir.display(),
                outcome.manifest.wall_seconds
            );
        }
        Command::Compare {
            traces,
            mode,
            out,
            tmin,
            tmax,
        } => {
            let window = match (tmin, tmax) {
                (None, None) => None,
                (a, b) => Some((a.unwrap_or(f64::MIN_POSITIVE), b.unwrap_or(f64::INFINITY))),
            };
            let report = commands::compare(&traces, mode.into(), window)?;
            commands::write_report(&report, &out)?;
            println!(
                "max_pairwise_deviation={} rms_spread={}",
                report.max_pairwise_deviation, report.rms_spread
            );
        }
        Command::Fit {
            trace,
            tmin,
            tmax,
            rescale,
            out,
        } => {
            let fit = commands::fit(&trace, tmin, tmax, rescale.map(Into::into))?;
            let json = serde_json::to_string_pretty(&fit).map_err(|e| CliError::Io(e.to_string()))?;
            match out {
                Some(p) => std::fs::write(&p, json + "\n")
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
                None => println!("{json}"),
            }
        }
        Command::Positions { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let written = commands::positions(&cfg, out.as_deref())?;
            println!("wrote {} position files", written.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spinrelax: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

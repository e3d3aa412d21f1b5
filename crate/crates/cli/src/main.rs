use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use vestbed_cli::{
    cmd_classify, cmd_gateway, cmd_gen_weights, cmd_latency, cmd_run, port_from_env, CliError,
    LatencyOptions, RunOptions,
};

#[derive(Parser)]
#[command(name = "vestbed", version, about = "Simulated sensor-vest robot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario in virtual time and print or save the report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Virtual seconds to simulate.
        #[arg(long, default_value_t = 30.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Event log (tab separated).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Transcript as a JSON array of {t, text}.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Dialogue database (`prompt => response` lines).
        #[arg(long)]
        dialogue: Option<PathBuf>,
        /// Pace virtual time against the wall clock.
        #[arg(long)]
        realtime: bool,
    },
    /// Serve the REST command gateway.
    Gateway {
        /// Defaults to $VESTBED_PORT, then 8080.
        #[arg(long)]
        port: Option<u16>,
        /// Extra seconds added on the way in and out of every request.
        #[arg(long, default_value_t = 0.0)]
        delay: f64,
        /// Directory for per-robot JSON-lines journals.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    /// Classify a hand image with the CNN.
    Classify {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        /// Also print the layer shape trace.
        #[arg(long)]
        verbose: bool,
    },
    /// Measure reaction and round-trip times per interaction category.
    Latency {
        /// Trials per category.
        #[arg(long, default_value_t = 20)]
        polls: usize,
        /// One-way network delay in seconds.
        #[arg(long, default_value_t = 0.0)]
        delay: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write seeded random CNN weights.
    GenWeights {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn seconds(s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s).map_err(|_| CliError::Usage(format!("not a delay: {s}")))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn emit(path: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            scenario,
            duration,
            seed,
            log,
            transcript,
            report,
            dialogue,
            realtime,
        } => {
            let out = cmd_run(&RunOptions {
                scenario,
                duration,
                seed,
                dialogue,
                realtime,
            })?;
            if let Some(p) = log {
                write(&p, &out.log)?;
            }
            if let Some(p) = transcript {
                let text = serde_json::to_string_pretty(&out.transcript).map_err(|e| CliError::Runtime(e.to_string()))?;
                write(&p, &(text + "\n"))?;
            }
            emit(report.as_deref(), &out.report.to_json())
        }
        Command::Gateway { port, delay, journal } => {
            let port = match port {
                Some(p) => p,
                None => port_from_env()?,
            };
            cmd_gateway(port, seconds(delay)?, journal)
        }
        Command::Classify { image, weights, verbose } => {
            print!("{}", cmd_classify(&image, &weights, verbose)?);
            Ok(())
        }
        Command::Latency { polls, delay, seed, report } => {
            let table = cmd_latency(&LatencyOptions {
                trials: polls,
                delay: seconds(delay)?,
                seed,
            })?;
            emit(report.as_deref(), &table)
        }
        Command::GenWeights { seed, out } => cmd_gen_weights(seed, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vestbed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Library half of the `vestbed` command line. Each `cmd_*` function does
//! the work of one subcommand and returns data; `main.rs` only parses flags
//! and writes files.

mod classify;
mod error;
mod gateway;
pub mod latency;
pub mod report;
mod run;

pub use classify::{cmd_classify, cmd_gen_weights};
pub use error::CliError;
pub use gateway::{cmd_gateway, port_from_env, DEFAULT_PORT};
pub use latency::{cmd_latency, Category, LatencyOptions, Sample};
pub use report::{LatencyStats, RunReport};
pub use run::{cmd_run, run_text, RunOptions, RunOutput};

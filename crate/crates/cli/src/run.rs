use std::path::PathBuf;

use vestbed_core::scenario::parse_scenario;
use vestbed_core::{build_vest, load_scenario, SimTime, VestConfig};
use vestbed_gateway::{GatewayStore, SharedStore};

use crate::report::RunReport;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub scenario: PathBuf,
    pub duration: f64,
    pub seed: u64,
    /// Replaces the built-in dialogue database.
    pub dialogue: Option<PathBuf>,
    /// Pace the run against the wall clock.
    pub realtime: bool,
}

pub struct RunOutput {
    pub report: RunReport,
    pub log: String,
    pub transcript: serde_json::Value,
}

pub fn cmd_run(opts: &RunOptions) -> Result<RunOutput, CliError> {
    let text = std::fs::read_to_string(&opts.scenario)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", opts.scenario.display())))?;
    let mut config = VestConfig {
        seed: opts.seed,
        ..VestConfig::default()
    };
    if let Some(p) = &opts.dialogue {
        config.dialogue = std::fs::read_to_string(p)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
    }
    let name = opts.scenario.display().to_string();
    run_text(&name, &text, opts.duration, config, opts.realtime)
}

/// Run scenario source `text` over virtual time `[0, duration)`. The robot
/// is wired to an in-process gateway so `remote` directives work.
pub fn run_text(
    name: &str,
    text: &str,
    duration: f64,
    config: VestConfig,
    realtime: bool,
) -> Result<RunOutput, CliError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(CliError::Usage(format!("duration must be positive, got {duration}")));
    }
    let events = parse_scenario(text).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    let store = SharedStore::new(GatewayStore::new());
    let mut rt = build_vest(config, Some(Box::new(store.clone())), Some(store))
        .map_err(CliError::runtime)?;
    load_scenario(&mut rt, &events).map_err(|e| CliError::Runtime(format!("{name}: {e}")))?;
    if realtime {
        rt.set_realtime(Some(1.0));
    }
    rt.run_before(SimTime::from_secs_f64(duration));
    Ok(RunOutput {
        report: RunReport::collect(&rt, name, duration, &events),
        log: rt.log_text(),
        transcript: rt.state.transcript_json(),
    })
}

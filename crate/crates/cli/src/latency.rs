//! Response-time harness. Every trial builds a fresh robot wired to an
//! in-process gateway, applies one stimulus at a chosen phase of the 1 Hz
//! cycle and measures, in virtual seconds, how long the reaction takes.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::json;
use vestbed_core::scenario::{Action, ScenarioEvent};
use vestbed_core::{build_vest, load_scenario, services, SimTime, VestConfig};
use vestbed_gateway::{GatewayStore, SharedStore};

use crate::report::LatencyStats;
use crate::CliError;

/// Stimuli start after the first publisher ticks have settled.
const WARMUP: f64 = 2.0;
/// How long a trial waits for its reaction before giving up.
const HORIZON: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Touch,
    Hug,
    ShakeHead,
    Temperature,
    Ultrasound,
    Tts,
    /// Reading the touch byte through the gateway.
    TouchRemote,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Touch,
        Category::Hug,
        Category::ShakeHead,
        Category::Temperature,
        Category::Ultrasound,
        Category::Tts,
        Category::TouchRemote,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Touch => "touch",
            Category::Hug => "hug",
            Category::ShakeHead => "shake_head",
            Category::Temperature => "temperature",
            Category::Ultrasound => "ultrasound",
            Category::Tts => "tts",
            Category::TouchRemote => "touch_remote",
        }
    }

    /// Gateway command code, for the categories driven remotely.
    pub fn remote_code(self) -> Option<u8> {
        match self {
            Category::Touch | Category::Hug => None,
            Category::ShakeHead => Some(7),
            Category::Temperature => Some(5),
            Category::Ultrasound => Some(4),
            Category::Tts => Some(3),
            Category::TouchRemote => Some(6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Virtual time of the stimulus.
    pub at: f64,
    pub latency: f64,
    /// Time spent inside `iot_srv`; zero for local reactions.
    pub service: f64,
}

#[derive(Debug, Clone)]
pub struct LatencyOptions {
    pub trials: usize,
    pub delay: Duration,
    pub seed: u64,
}

/// Stimulus time for trial `i`: golden-ratio phases spread the trials over
/// the publisher period without landing on a tick.
pub fn stimulus_time(i: usize) -> f64 {
    let frac = ((i as f64 + 0.5) * 0.618_033_988_749_895).fract();
    let frac = (frac * 1e6).round() / 1e6;
    WARMUP + frac.clamp(0.001, 0.999)
}

pub fn trial(cat: Category, at: f64, delay: Duration, seed: u64) -> Result<Sample, CliError> {
    let config = VestConfig {
        seed,
        network_delay: delay,
        ..VestConfig::default()
    };
    let thanks = config.thanks_phrase.clone();
    let hug = config.hug_phrase.clone();
    let robot = config.robot_id.clone();
    let store = SharedStore::new(GatewayStore::new());
    let mut rt = build_vest(config, Some(Box::new(store.clone())), Some(store.clone()))
        .map_err(CliError::runtime)?;

    let when = SimTime::from_secs_f64(at);
    let ev = |action| ScenarioEvent { at: when, line: 1, action };
    let events = match cat {
        Category::Touch => vec![ev(Action::Touch { pad: 0, on: true })],
        Category::Hug => vec![
            ev(Action::Force { left: true, newtons: 3.0 }),
            ev(Action::Force { left: false, newtons: 3.0 }),
        ],
        _ => {
            let code = cat.remote_code().expect("remote category");
            let args = (cat == Category::Tts).then(|| json!({"text": "hello"}));
            vec![ev(Action::Remote { code, args })]
        }
    };
    load_scenario(&mut rt, &events).map_err(CliError::runtime)?;
    let horizon = HORIZON + 4.0 * delay.as_secs_f64();
    rt.run_until(SimTime::from_secs_f64(at + horizon));

    let missing = || CliError::Runtime(format!("no {} reaction within {horizon} s", cat.name()));
    let reply_after = |phrase: &str| {
        rt.state
            .transcript
            .iter()
            .find(|u| u.text == phrase && u.t >= when)
            .map(|u| u.t.as_secs_f64() - at)
    };
    let (latency, service) = match cat {
        Category::Touch => (reply_after(&thanks).ok_or_else(missing)?, 0.0),
        Category::Hug => (reply_after(&hug).ok_or_else(missing)?, 0.0),
        _ => {
            let seq = rt.state.remote_issued.first().ok_or_else(missing)?.seq;
            let rtt = store.lock().round_trip(&robot, seq).ok_or_else(missing)?;
            let service = rt
                .service_stats()
                .get(services::IOT)
                .map(|s| s.total_latency.as_secs_f64())
                .unwrap_or(0.0);
            (rtt, service)
        }
    };
    Ok(Sample { at, latency, service })
}

/// Run every category `opts.trials` times.
pub fn measure(opts: &LatencyOptions) -> Result<BTreeMap<Category, Vec<Sample>>, CliError> {
    if opts.trials == 0 {
        return Err(CliError::Usage("need at least one trial".into()));
    }
    let mut out = BTreeMap::new();
    for cat in Category::ALL {
        let samples = (0..opts.trials)
            .map(|i| trial(cat, stimulus_time(i), opts.delay, opts.seed))
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(cat, samples);
    }
    Ok(out)
}

pub fn summarize(samples: &BTreeMap<Category, Vec<Sample>>) -> BTreeMap<String, LatencyStats> {
    samples
        .iter()
        .map(|(cat, v)| {
            let lat: Vec<f64> = v.iter().map(|s| s.latency).collect();
            (cat.name().to_string(), LatencyStats::from_samples(&lat))
        })
        .collect()
}

/// The `latency` subcommand: a key-sorted JSON table of median, p95 and max
/// per category.
pub fn cmd_latency(opts: &LatencyOptions) -> Result<String, CliError> {
    let table = summarize(&measure(opts)?);
    let doc = json!({
        "delay": opts.delay.as_secs_f64(),
        "trials": opts.trials,
        "latency": table,
    });
    let mut s = serde_json::to_string_pretty(&doc).map_err(CliError::runtime)?;
    s.push('\n');
    Ok(s)
}

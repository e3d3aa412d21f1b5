//! Run reports and latency summaries.
//!
//! Every struct here serializes with its keys in sorted order (fields are
//! declared alphabetically and maps are `BTreeMap`s) so two reports of the
//! same run compare byte for byte.

use std::collections::BTreeMap;

use serde::Serialize;
use vestbed_core::scenario::{Action, ScenarioEvent};
use vestbed_core::Vest;

use crate::latency::Category;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub max: Option<f64>,
    pub median: Option<f64>,
    pub n: usize,
    /// Nearest-rank 95th percentile.
    pub p95: Option<f64>,
}

impl LatencyStats {
    /// Samples are rounded to the simulator's nanosecond resolution first,
    /// which hides float noise from timestamp subtraction.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut v: Vec<f64> = samples.iter().map(|s| round_ns(*s)).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return Self::default();
        }
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        let rank = (0.95 * n as f64).ceil() as usize;
        Self {
            max: Some(v[n - 1]),
            median: Some(median),
            n,
            p95: Some(v[rank.max(1) - 1]),
        }
    }
}

pub fn round_ns(s: f64) -> f64 {
    (s * 1e9).round() / 1e9
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceSummary {
    pub calls: u64,
    pub failures: u64,
    /// Mean virtual seconds per call.
    pub mean_latency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Spoken {
    pub t: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub bus_transactions: usize,
    pub duration: f64,
    pub latency: BTreeMap<String, LatencyStats>,
    pub scenario: String,
    pub seed: u64,
    pub services: BTreeMap<String, ServiceSummary>,
    pub topics: BTreeMap<String, u64>,
    pub transcript: Vec<Spoken>,
}

impl RunReport {
    pub fn collect(rt: &Vest, scenario: &str, duration: f64, events: &[ScenarioEvent]) -> Self {
        let services = rt
            .service_stats()
            .into_iter()
            .map(|(name, s)| {
                let mean = if s.calls == 0 {
                    0.0
                } else {
                    round_ns(s.total_latency.as_secs_f64() / s.calls as f64)
                };
                let summary = ServiceSummary {
                    calls: s.calls,
                    failures: s.failures,
                    mean_latency: mean,
                };
                (name, summary)
            })
            .collect();
        Self {
            bus_transactions: rt.state.buses.completed_count(),
            duration,
            latency: run_latency(rt, events),
            scenario: scenario.to_string(),
            seed: rt.state.config.seed,
            services,
            topics: rt.publish_counts(),
            transcript: rt
                .state
                .transcript
                .iter()
                .map(|u| Spoken {
                    t: u.t.as_secs_f64(),
                    text: u.text.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report is plain data");
        let mut s = serde_json::to_string_pretty(&value).expect("serializable");
        s.push('\n');
        s
    }
}

/// Latencies observed in one scenario run. Reactions pair each reply with
/// the latest stimulus before it; remote categories use the gateway's own
/// issue-to-completion times.
fn run_latency(rt: &Vest, events: &[ScenarioEvent]) -> BTreeMap<String, LatencyStats> {
    let cfg = &rt.state.config;
    let stimuli = |pick: fn(&Action) -> bool| -> Vec<f64> {
        events
            .iter()
            .filter(|e| pick(&e.action))
            .map(|e| e.at.as_secs_f64())
            .collect()
    };
    let reactions = |starts: Vec<f64>, phrase: &str| -> Vec<f64> {
        rt.state
            .transcript
            .iter()
            .filter(|u| u.text == phrase)
            .filter_map(|u| {
                let t = u.t.as_secs_f64();
                starts.iter().rev().find(|s| **s <= t).map(|s| t - s)
            })
            .collect()
    };

    let mut samples: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    samples.insert(
        Category::Touch,
        reactions(stimuli(|a| matches!(a, Action::Touch { on: true, .. })), &cfg.thanks_phrase),
    );
    samples.insert(
        Category::Hug,
        reactions(stimuli(|a| matches!(a, Action::Force { .. })), &cfg.hug_phrase),
    );
    if let Some(store) = &rt.state.gateway {
        let store = store.lock();
        for issue in &rt.state.remote_issued {
            let cat = Category::ALL.iter().find(|c| c.remote_code() == Some(issue.code));
            let rtt = store.round_trip(&cfg.robot_id, issue.seq);
            if let (Some(cat), Some(rtt)) = (cat, rtt) {
                samples.entry(*cat).or_default().push(rtt);
            }
        }
    }
    Category::ALL
        .iter()
        .map(|c| {
            let v = samples.get(c).map(Vec::as_slice).unwrap_or(&[]);
            (c.name().to_string(), LatencyStats::from_samples(v))
        })
        .collect()
}

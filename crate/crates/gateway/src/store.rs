use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::{CommandCode, GatewayError};

/// One queued remote command and its lifecycle timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub robot: String,
    pub seq: u64,
    pub code: CommandCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Value>,
    pub issued_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub robot: String,
    pub seq: u64,
    pub data: Value,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataStatus {
    Pending(CommandEnvelope),
    Complete(CommandEnvelope, ResultRecord),
}

impl DataStatus {
    /// JSON body served by `GET /api/getdata`.
    pub fn to_json(&self) -> Value {
        match self {
            DataStatus::Pending(env) => json!({
                "status": "pending",
                "robot": env.robot,
                "seq": env.seq,
                "code": env.code,
                "fetched": env.fetched_at.is_some(),
                "issued_at": env.issued_at,
                "fetched_at": env.fetched_at,
            }),
            DataStatus::Complete(env, rec) => json!({
                "status": "complete",
                "robot": env.robot,
                "seq": env.seq,
                "code": env.code,
                "fetched": true,
                "data": rec.data,
                "issued_at": env.issued_at,
                "fetched_at": env.fetched_at,
                "completed_at": env.completed_at,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobotSummary {
    pub id: String,
    /// Commands issued but not yet fetched.
    pub queued: usize,
    /// Commands fetched but without a result.
    pub in_flight: usize,
    pub completed: usize,
    pub last_seen: Option<f64>,
}

#[derive(Debug, Default)]
struct RobotState {
    next_seq: u64,
    queue: VecDeque<u64>,
    commands: BTreeMap<u64, CommandEnvelope>,
    results: BTreeMap<u64, ResultRecord>,
    last_seen: Option<f64>,
}

/// Per-robot command FIFOs and result records.
#[derive(Debug, Default)]
pub struct GatewayStore {
    robots: BTreeMap<String, RobotState>,
    journal_dir: Option<PathBuf>,
}

fn check_robot(id: &str) -> Result<(), GatewayError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(GatewayError::InvalidRobot(id.to_string()))
    }
}

impl GatewayStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append every state change to `<dir>/<robot>.jsonl`.
    pub fn with_journal(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            robots: BTreeMap::new(),
            journal_dir: Some(dir),
        })
    }

    fn journal(&self, robot: &str, entry: Value) -> Result<(), GatewayError> {
        let Some(dir) = &self.journal_dir else {
            return Ok(());
        };
        let path = dir.join(format!("{robot}.jsonl"));
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Journal(e.to_string()))?;
        writeln!(f, "{entry}").map_err(|e| GatewayError::Journal(e.to_string()))
    }

    /// Queue a command by raw code; returns its sequence number.
    pub fn enqueue(
        &mut self,
        robot: &str,
        code: u64,
        args: Option<Value>,
        at: f64,
    ) -> Result<u64, GatewayError> {
        check_robot(robot)?;
        let code = u8::try_from(code)
            .ok()
            .and_then(|c| CommandCode::try_from(c).ok())
            .ok_or(GatewayError::UnknownCommand(code))?;
        let state = self.robots.entry(robot.to_string()).or_default();
        let seq = state.next_seq;
        state.next_seq += 1;
        let env = CommandEnvelope {
            robot: robot.to_string(),
            seq,
            code,
            args,
            issued_at: at,
            fetched_at: None,
            completed_at: None,
        };
        state.queue.push_back(seq);
        state.commands.insert(seq, env.clone());
        self.journal(robot, json!({"event": "issued", "command": env}))?;
        Ok(seq)
    }

    /// Queue a touch read; the HTTP layer answers with [`crate::ACK_BYTE`].
    pub fn read_touch(&mut self, robot: &str, at: f64) -> Result<u64, GatewayError> {
        self.enqueue(robot, CommandCode::ReadTouch as u64, None, at)
    }

    /// Pop the oldest unfetched command for `robot`, registering the robot on
    /// first contact.
    pub fn get_command(
        &mut self,
        robot: &str,
        at: f64,
    ) -> Result<Option<CommandEnvelope>, GatewayError> {
        check_robot(robot)?;
        let state = self.robots.entry(robot.to_string()).or_default();
        state.last_seen = Some(at);
        let Some(seq) = state.queue.pop_front() else {
            return Ok(None);
        };
        let env = state
            .commands
            .get_mut(&seq)
            .expect("queued seq has an envelope");
        env.fetched_at = Some(at.max(env.issued_at));
        let env = env.clone();
        self.journal(robot, json!({"event": "fetched", "seq": seq, "at": env.fetched_at}))?;
        Ok(Some(env))
    }

    pub fn set_data(
        &mut self,
        robot: &str,
        seq: u64,
        data: Value,
        at: f64,
    ) -> Result<(), GatewayError> {
        let not_found = || GatewayError::NotFound {
            robot: robot.to_string(),
            seq,
        };
        let state = self.robots.get_mut(robot).ok_or_else(not_found)?;
        let env = state.commands.get_mut(&seq).ok_or_else(not_found)?;
        let Some(fetched_at) = env.fetched_at else {
            return Err(GatewayError::NotFetched {
                robot: robot.to_string(),
                seq,
            });
        };
        if state.results.contains_key(&seq) {
            return Err(GatewayError::Duplicate {
                robot: robot.to_string(),
                seq,
            });
        }
        let at = at.max(fetched_at);
        env.completed_at = Some(at);
        state.last_seen = Some(at);
        let rec = ResultRecord {
            robot: robot.to_string(),
            seq,
            data,
            at,
        };
        state.results.insert(seq, rec.clone());
        self.journal(robot, json!({"event": "completed", "result": rec}))
    }

    pub fn get_data(&self, robot: &str, seq: u64) -> Result<DataStatus, GatewayError> {
        let not_found = || GatewayError::NotFound {
            robot: robot.to_string(),
            seq,
        };
        let state = self.robots.get(robot).ok_or_else(not_found)?;
        let env = state.commands.get(&seq).ok_or_else(not_found)?.clone();
        Ok(match state.results.get(&seq) {
            Some(rec) => DataStatus::Complete(env, rec.clone()),
            None => DataStatus::Pending(env),
        })
    }

    pub fn robots(&self) -> Vec<RobotSummary> {
        self.robots
            .iter()
            .map(|(id, s)| RobotSummary {
                id: id.clone(),
                queued: s.queue.len(),
                in_flight: s.commands.len() - s.queue.len() - s.results.len(),
                completed: s.results.len(),
                last_seen: s.last_seen,
            })
            .collect()
    }

    pub fn queue_len(&self, robot: &str) -> usize {
        self.robots.get(robot).map_or(0, |s| s.queue.len())
    }

    /// Completed-minus-issued time of a finished command.
    pub fn round_trip(&self, robot: &str, seq: u64) -> Option<f64> {
        let env = self.robots.get(robot)?.commands.get(&seq)?;
        Some(env.completed_at? - env.issued_at)
    }
}

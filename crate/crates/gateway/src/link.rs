use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use crate::{CommandEnvelope, GatewayStore};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    #[error("gateway rejected request: {0}")]
    Rejected(String),
}

/// Robot-side view of the gateway: fetch the next command, post a result.
pub trait CommandLink {
    fn fetch_command(&mut self, robot: &str, at: f64) -> Result<Option<CommandEnvelope>, LinkError>;
    fn post_result(&mut self, robot: &str, seq: u64, data: Value, at: f64)
        -> Result<(), LinkError>;
}

/// In-process handle on a store. Clones share state, so the same store can
/// be handed to the simulated robot, the operator side, and an HTTP server.
#[derive(Debug, Clone, Default)]
pub struct SharedStore {
    store: Arc<Mutex<GatewayStore>>,
    online: Arc<AtomicBool>,
}

impl SharedStore {
    pub fn new(store: GatewayStore) -> Self {
        Self {
            store: Arc::new(Mutex::new(store)),
            online: Arc::new(AtomicBool::new(true)),
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, GatewayStore> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Simulate an outage: while offline every link call fails.
    pub fn set_online(&self, online: bool) {
        self.online.store(online, Ordering::SeqCst);
    }

    pub fn is_online(&self) -> bool {
        self.online.load(Ordering::SeqCst)
    }

    fn check(&self) -> Result<(), LinkError> {
        if self.is_online() {
            Ok(())
        } else {
            Err(LinkError::Unreachable("gateway offline".into()))
        }
    }
}

impl CommandLink for SharedStore {
    fn fetch_command(&mut self, robot: &str, at: f64) -> Result<Option<CommandEnvelope>, LinkError> {
        self.check()?;
        self.lock()
            .get_command(robot, at)
            .map_err(|e| LinkError::Rejected(e.to_string()))
    }

    fn post_result(
        &mut self,
        robot: &str,
        seq: u64,
        data: Value,
        at: f64,
    ) -> Result<(), LinkError> {
        self.check()?;
        self.lock()
            .set_data(robot, seq, data, at)
            .map_err(|e| LinkError::Rejected(e.to_string()))
    }
}

/// Blocking HTTP client against a running gateway. The server stamps times,
/// so the `at` arguments are ignored.
pub struct HttpLink {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpLink {
    pub fn new(base_url: &str) -> Result<Self, LinkError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| LinkError::Unreachable(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl CommandLink for HttpLink {
    fn fetch_command(&mut self, robot: &str, _at: f64) -> Result<Option<CommandEnvelope>, LinkError> {
        let resp = self
            .client
            .get(format!("{}/api/getcommand", self.base))
            .query(&[("robot", robot)])
            .send()
            .map_err(|e| LinkError::Unreachable(e.to_string()))?;
        match resp.status().as_u16() {
            204 => Ok(None),
            200 => resp
                .json()
                .map(Some)
                .map_err(|e| LinkError::Rejected(e.to_string())),
            s => Err(LinkError::Rejected(format!(
                "status {s}: {}",
                resp.text().unwrap_or_default()
            ))),
        }
    }

    fn post_result(
        &mut self,
        robot: &str,
        seq: u64,
        data: Value,
        _at: f64,
    ) -> Result<(), LinkError> {
        let resp = self
            .client
            .post(format!("{}/api/setdata", self.base))
            .json(&json!({"robot": robot, "seq": seq, "data": data}))
            .send()
            .map_err(|e| LinkError::Unreachable(e.to_string()))?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(LinkError::Rejected(format!(
                "status {}: {}",
                resp.status(),
                resp.text().unwrap_or_default()
            )))
        }
    }
}

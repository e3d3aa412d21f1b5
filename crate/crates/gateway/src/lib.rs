//! Remote command gateway.
//!
//! Operators enqueue commands for a robot by ID; the robot polls for its next
//! command, executes it locally and posts the result back, where operators
//! can pick it up. [`GatewayStore`] holds all of that state and is
//! clock-agnostic: every mutating call takes the timestamp to record, so the
//! same store can be driven by wall-clock HTTP handlers ([`server`]) or by a
//! virtual-time simulation calling it in-process.

mod command;
mod error;
mod link;
pub mod server;
mod store;

pub use command::{CommandCode, ACK_BYTE};
pub use error::GatewayError;
pub use link::{CommandLink, HttpLink, LinkError, SharedStore};
pub use store::{CommandEnvelope, DataStatus, GatewayStore, ResultRecord, RobotSummary};

/// Robot used when a request names none.
pub const DEFAULT_ROBOT: &str = "hbs2";

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("unknown command code {0}")]
    UnknownCommand(u64),
    #[error("invalid robot id {0:?}")]
    InvalidRobot(String),
    #[error("robot {robot} has no command with seq {seq}")]
    NotFound { robot: String, seq: u64 },
    #[error("command {seq} for robot {robot} was never fetched")]
    NotFetched { robot: String, seq: u64 },
    #[error("result for robot {robot} seq {seq} already stored")]
    Duplicate { robot: String, seq: u64 },
    #[error("journal write failed: {0}")]
    Journal(String),
}

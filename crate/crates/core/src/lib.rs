//! Simulation core for a sensor-vest social robot: a deterministic node
//! runtime, brokered buses with virtual devices, and the robot's hardware,
//! speech and behavior nodes.

pub mod behaviors;
pub mod bus;
pub mod devices;
pub mod nodes;
pub mod runtime;
pub mod scenario;
pub mod speech;
mod time;
mod value;
pub mod vest;

pub use runtime::{Message, Publisher, Runtime, ServiceError, SubscriptionId, TimerId};
pub use time::SimTime;
pub use value::Value;
pub use vest::{build_vest, inject_speech, load_scenario, Vest, VestConfig, VestError, VestState};

pub mod topics {
    pub const TOUCH: &str = "tpc_touch";
    pub const GESTURE: &str = "tpc_gesture";
    pub const FORCE: &str = "tpc_force";
    pub const TRACK: &str = "tpc_track";
    pub const SPEECH: &str = "tpc_speech";
}

pub mod services {
    pub const SONAR: &str = "srv_sonar";
    pub const TEMP: &str = "srv_temp";
    pub const LED: &str = "srv_led";
    pub const SERVO: &str = "srv_servo";
    pub const TTS: &str = "srv_tts";
    pub const IOT: &str = "iot_srv";
}

//! The assembled robot: world, buses, devices and every node, wired into
//! one runtime.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;
use vestbed_gateway::{CommandLink, SharedStore};
use vestbed_vision::{CnnSpec, CnnWeights, VisionError};

use crate::bus::{BusError, BusHost, BusKind, BusManager, DEFAULT_I2C_HZ, DEFAULT_SPI_HZ};
use crate::devices::{self, addr, Servo};
use crate::runtime::{CoreError, Publisher, Runtime};
use crate::scenario::{Action, ScenarioError, ScenarioEvent, Sensor, Side, World};
use crate::speech::{DialogueDb, DialogueError, DEFAULT_DIALOGUE};
use crate::{behaviors, nodes, speech, topics, SimTime, Value};

pub type Vest = Runtime<VestState>;

pub const I2C_BUS: u8 = 0;
pub const SPI_BUS: u8 = 1;

#[derive(Debug, Error)]
pub enum VestError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Vision(#[from] VisionError),
    #[error("speech text must not be empty")]
    EmptySpeech,
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct VestConfig {
    pub seed: u64,
    pub touch_period: Duration,
    pub gesture_period: Duration,
    pub force_period: Duration,
    pub track_period: Duration,
    pub poll_period: Duration,
    /// One-way delay between robot and gateway.
    pub network_delay: Duration,
    pub robot_id: String,
    /// ADC code at or below which a force channel counts as squeezed.
    pub hug_threshold: i16,
    pub hug_phrase: String,
    pub hug_color: [u16; 3],
    pub thanks_phrase: String,
    pub greeting_phrase: String,
    pub tracker_step: f64,
    pub dialogue: String,
    pub weights: Option<PathBuf>,
    pub noise: BTreeMap<Sensor, f64>,
}

impl Default for VestConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            touch_period: Duration::from_secs(1),
            gesture_period: Duration::from_secs(1),
            force_period: Duration::from_secs(1),
            track_period: Duration::from_secs(1),
            poll_period: Duration::from_secs(1),
            network_delay: Duration::ZERO,
            robot_id: vestbed_gateway::DEFAULT_ROBOT.to_string(),
            hug_threshold: devices::fsr_code(2.0),
            hug_phrase: "Thank you for the hug".to_string(),
            hug_color: [0, 4095, 0],
            thanks_phrase: "thank you".to_string(),
            greeting_phrase: "Hello".to_string(),
            tracker_step: 10.0,
            dialogue: DEFAULT_DIALOGUE.to_string(),
            weights: None,
            noise: BTreeMap::new(),
        }
    }
}

impl VestConfig {
    fn validate(&self) -> Result<(), VestError> {
        let periods = [
            self.touch_period,
            self.gesture_period,
            self.force_period,
            self.track_period,
            self.poll_period,
        ];
        if periods.iter().any(Duration::is_zero) {
            return Err(VestError::Config("periods must be positive".into()));
        }
        if self.hug_threshold <= 0 {
            return Err(VestError::Config("hug threshold must be in (0, 32767)".into()));
        }
        if self.tracker_step.is_nan() || self.tracker_step <= 0.0 {
            return Err(VestError::Config("tracker step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub t: SimTime,
    pub text: String,
}

/// Operator command injected by a scenario `remote` directive.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteIssue {
    pub seq: u64,
    pub code: u8,
    /// When the operator sent it; the gateway sees it one delay later.
    pub at: SimTime,
}

pub struct VestState {
    pub config: VestConfig,
    pub world: World,
    pub buses: BusManager,
    pub servo: Servo,
    /// Every servo target change, in order.
    pub servo_targets: Vec<(SimTime, f64)>,
    pub(crate) servo_generation: u64,
    pub transcript: Vec<Utterance>,
    /// In-process gateway, when the robot is wired to one.
    pub gateway: Option<SharedStore>,
    pub remote_issued: Vec<RemoteIssue>,
    /// Vision classifications as (time, class).
    pub sightings: Vec<(SimTime, usize)>,
    pub(crate) weights: Option<CnnWeights>,
    pub(crate) speech_pub: Option<Publisher>,
}

impl BusHost for VestState {
    fn bus_parts(&mut self) -> (&mut BusManager, &mut World) {
        (&mut self.buses, &mut self.world)
    }
}

impl VestState {
    pub fn led_color(&self) -> [u16; 3] {
        self.buses
            .device::<devices::Pca9685>(I2C_BUS, addr::PCA9685)
            .map(|p| p.color())
            .unwrap_or([0; 3])
    }

    pub fn transcript_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.transcript
                .iter()
                .map(|u| serde_json::json!({"t": u.t.as_secs_f64(), "text": u.text}))
                .collect(),
        )
    }
}

/// Build the bus topology with every part at its default address.
pub fn default_buses() -> BusManager {
    let mut m = BusManager::new();
    let i2c = m.add_bus(BusKind::I2c, DEFAULT_I2C_HZ);
    let spi = m.add_bus(BusKind::Spi, DEFAULT_SPI_HZ);
    debug_assert_eq!((i2c, spi), (I2C_BUS, SPI_BUS));
    let parts: Vec<(u8, Box<dyn crate::bus::Device>)> = vec![
        (addr::MPR121, Box::new(devices::Mpr121)),
        (addr::ADS1115, Box::<devices::Ads1115>::default()),
        (addr::TOF_LEFT, Box::new(devices::Vl53l0x { side: Side::Left })),
        (addr::TOF_CENTER, Box::new(devices::Vl53l0x { side: Side::Center })),
        (addr::TOF_RIGHT, Box::new(devices::Vl53l0x { side: Side::Right })),
        (addr::SRF02, Box::<devices::Srf02>::default()),
        (addr::MCP9808, Box::new(devices::Mcp9808)),
        (addr::GESTURE, Box::new(devices::GestureSensor)),
        (addr::PCA9685, Box::<devices::Pca9685>::default()),
    ];
    for (a, dev) in parts {
        m.attach(I2C_BUS, a, dev).expect("distinct default addresses");
    }
    m.attach(SPI_BUS, addr::SPI_LOOPBACK, Box::<devices::SpiLoopback>::default())
        .expect("free chip select");
    m
}

/// Assemble the robot. With `link`, the IoT behavior polls that gateway;
/// `gateway` lets scenario `remote` directives queue commands in-process.
pub fn build_vest(
    config: VestConfig,
    link: Option<Box<dyn CommandLink>>,
    gateway: Option<SharedStore>,
) -> Result<Vest, VestError> {
    config.validate()?;
    let db = DialogueDb::parse(&config.dialogue)?;
    let world = World {
        seed: config.seed,
        noise: config.noise.clone(),
        ..World::default()
    };
    let weights = match &config.weights {
        Some(p) => Some(CnnWeights::load(CnnSpec::hand_gesture(), p)?),
        None => None,
    };
    let state = VestState {
        world,
        buses: default_buses(),
        servo: Servo::default(),
        servo_targets: Vec::new(),
        servo_generation: 0,
        transcript: Vec::new(),
        gateway,
        remote_issued: Vec::new(),
        sightings: Vec::new(),
        weights,
        speech_pub: None,
        config: config.clone(),
    };
    let mut rt = Runtime::new(state);
    rt.set_param("robot_id", config.robot_id.clone());
    rt.set_param("seed", config.seed.to_string());

    nodes::install(&mut rt)?;
    let speech_pub = rt.advertise("stt_node", topics::SPEECH, 10)?;
    rt.state.speech_pub = Some(speech_pub);
    speech::install_s2s(&mut rt, db)?;
    behaviors::install(&mut rt, link)?;
    Ok(rt)
}

/// Publish recognized text on the speech topic.
pub fn inject_speech(rt: &mut Vest, text: &str) -> Result<(), VestError> {
    if text.trim().is_empty() {
        return Err(VestError::EmptySpeech);
    }
    let handle = rt.state.speech_pub.clone().expect("speech publisher");
    rt.publish(&handle, Value::text(text))?;
    Ok(())
}

/// Schedule every scenario event on the runtime.
pub fn load_scenario(rt: &mut Vest, events: &[ScenarioEvent]) -> Result<(), VestError> {
    crate::scenario::validate(events)?;
    for ev in events.iter().cloned() {
        rt.schedule_at(ev.at, "", move |rt| apply_event(rt, &ev));
    }
    Ok(())
}

fn apply_event(rt: &mut Vest, ev: &ScenarioEvent) {
    rt.record("SCENARIO", &format!("line {}", ev.line), ev.action.to_string());
    if let Err(e) = rt.state.world.apply(&ev.action) {
        rt.record("WARN", "scenario", e.to_string());
        return;
    }
    match &ev.action {
        Action::Say(text) => {
            rt.state.world.pending_speech.pop_front();
            if let Err(e) = inject_speech(rt, text) {
                rt.record("WARN", "stt_node", e.to_string());
            }
        }
        Action::ShowHand(path) => behaviors::see_hand(rt, path),
        Action::Remote { code, args } => {
            // the operator's request reaches the gateway one network hop later
            let (code, args, issued) = (*code, args.clone(), rt.now());
            let delay = rt.state.config.network_delay;
            if delay.is_zero() {
                enqueue_remote(rt, code, args, issued);
            } else {
                rt.schedule_in(delay, "", move |rt| enqueue_remote(rt, code, args, issued));
            }
        }
        _ => {}
    }
}

fn enqueue_remote(rt: &mut Vest, code: u8, args: Option<serde_json::Value>, issued: SimTime) {
    let Some(store) = rt.state.gateway.clone() else {
        rt.record("WARN", "scenario", "remote command without a gateway");
        return;
    };
    let robot = rt.state.config.robot_id.clone();
    let arrived = rt.now().as_secs_f64();
    let queued = store.lock().enqueue(&robot, u64::from(code), args, arrived);
    match queued {
        Ok(seq) => {
            rt.state.remote_issued.push(RemoteIssue { seq, code, at: issued });
            rt.record("REMOTE", &robot, format!("seq {seq} code {code}"));
        }
        Err(e) => rt.record("WARN", "scenario", e.to_string()),
    }
}

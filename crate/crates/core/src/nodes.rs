//! Hardware nodes: periodic sensor publishers and the actuator/sensor
//! services. These are the only nodes that talk to the bus manager.

use std::time::Duration;

use crate::bus::{submit_batch, transact, BusError, JobKind, JobRequest};
use crate::devices::{self, addr, reg, TOF_MAX_MM};
use crate::runtime::{CoreError, ServiceResult};
use crate::scenario::Side;
use crate::vest::{Vest, I2C_BUS};
use crate::{services, topics, SimTime, Value};

/// Shake-head pattern: ±20° around 90° at 2 Hz for three cycles.
pub const SHAKE_CENTER: f64 = 90.0;
pub const SHAKE_AMPLITUDE: f64 = 20.0;
pub const SHAKE_HALF_PERIOD: Duration = Duration::from_millis(250);
pub const SHAKE_CYCLES: u32 = 3;

pub(crate) fn install(rt: &mut Vest) -> Result<(), CoreError> {
    let cfg = rt.state.config.clone();

    // Publishers queue their bus jobs and publish from the completion
    // callback, so a tick never holds up other nodes.
    let touch = rt.advertise("touch_node", topics::TOUCH, 1)?;
    rt.add_timer("touch_node", SimTime::ZERO, cfg.touch_period, move |rt| {
        let touch = touch.clone();
        let jobs = vec![JobRequest::read(addr::MPR121, reg::MPR121_STATUS, 2)];
        submit_batch(rt, I2C_BUS, jobs, move |rt, mut res| match res.remove(0) {
            Ok(b) => {
                let _ = rt.publish(&touch, Value::U8(b[0]));
            }
            Err(e) => warn(rt, "touch_node", &e),
        });
    })?;

    let gesture = rt.advertise("gesture_node", topics::GESTURE, 1)?;
    rt.add_timer("gesture_node", SimTime::ZERO, cfg.gesture_period, move |rt| {
        let gesture = gesture.clone();
        let jobs = vec![JobRequest::read(addr::GESTURE, reg::GESTURE_FLAG, 1)];
        submit_batch(rt, I2C_BUS, jobs, move |rt, mut res| match res.remove(0) {
            Ok(b) => {
                let _ = rt.publish(&gesture, Value::U8(b[0]));
            }
            Err(e) => warn(rt, "gesture_node", &e),
        });
    })?;

    let force = rt.advertise("force_node", topics::FORCE, 1)?;
    rt.add_timer("force_node", SimTime::ZERO, cfg.force_period, move |rt| {
        let force = force.clone();
        let mut jobs = Vec::new();
        for ch in [0u8, 1] {
            let word = devices::ads1115_config_word(ch).to_be_bytes();
            jobs.push(JobRequest::write(addr::ADS1115, reg::ADS1115_CONFIG, &word));
            jobs.push(JobRequest::read(addr::ADS1115, reg::ADS1115_CONVERSION, 2));
        }
        submit_batch(rt, I2C_BUS, jobs, move |rt, res| {
            let mut codes = Vec::with_capacity(2);
            for r in res {
                match r {
                    Ok(b) if b.len() == 2 => codes.push(i16::from_be_bytes([b[0], b[1]]).max(0) as u16),
                    Ok(_) => {}
                    Err(e) => return warn(rt, "force_node", &e),
                }
            }
            let _ = rt.publish(&force, Value::U16s(codes));
        });
    })?;

    let track = rt.advertise("range_node", topics::TRACK, 1)?;
    rt.add_timer("range_node", SimTime::ZERO, cfg.track_period, move |rt| {
        let track = track.clone();
        let jobs = Side::ALL
            .iter()
            .map(|s| JobRequest::read(addr::tof(*s), reg::TOF_RESULT, 3))
            .collect();
        submit_batch(rt, I2C_BUS, jobs, move |rt, res| {
            let mut mm = Vec::with_capacity(3);
            for r in res {
                match r {
                    Ok(b) => mm.push(u16::from_be_bytes([b[1], b[2]])),
                    Err(e) => {
                        // substitute an out-of-range reading for the faulty sensor
                        warn(rt, "range_node", &e);
                        mm.push(TOF_MAX_MM);
                    }
                }
            }
            let _ = rt.publish(&track, Value::U16s(mm));
        });
    })?;

    rt.advertise_service("sonar_node", services::SONAR, |rt, _| sonar(rt))?;
    rt.advertise_service("temp_node", services::TEMP, |rt, _| {
        fahrenheit(rt).map(Value::Float)
    })?;
    rt.advertise_service("led_node", services::LED, led)?;
    rt.advertise_service("servo_node", services::SERVO, servo)?;
    rt.advertise_service("tts_node", services::TTS, |rt, req| {
        let text = match req {
            Value::Text(s) => s,
            Value::Empty => String::new(),
            other => other.to_string(),
        };
        if text.is_empty() {
            log::warn!("tts: empty utterance");
        }
        let t = rt.now();
        rt.state.transcript.push(crate::vest::Utterance { t, text });
        Ok(Value::Empty)
    })?;
    Ok(())
}

fn warn(rt: &mut Vest, node: &str, e: &BusError) {
    log::warn!("{node}: {e}");
    rt.record("WARN", node, e.to_string());
}

fn sonar(rt: &mut Vest) -> ServiceResult {
    let fault = |e: BusError| format!("SensorFault: {e}");
    transact(rt, I2C_BUS, addr::SRF02, JobKind::Write, reg::SRF02_COMMAND, &[devices::SRF02_RANGE_CM], 0)
        .map_err(fault)?;
    rt.sleep(devices::SRF02_RANGING);
    let b = transact(rt, I2C_BUS, addr::SRF02, JobKind::WriteThenRead, reg::SRF02_RANGE, &[], 2)
        .map_err(fault)?;
    Ok(Value::Int(i64::from(u16::from_be_bytes([b[0], b[1]]))))
}

/// Ambient temperature in °F with one decimal.
fn fahrenheit(rt: &mut Vest) -> Result<f64, String> {
    let b = transact(rt, I2C_BUS, addr::MCP9808, JobKind::WriteThenRead, reg::MCP9808_AMBIENT, &[], 2)
        .map_err(|e| format!("SensorFault: {e}"))?;
    let c = devices::mcp9808_decode(u16::from_be_bytes([b[0], b[1]]));
    Ok(celsius_to_tenths_f(c))
}

pub fn celsius_to_tenths_f(c: f64) -> f64 {
    ((c * 9.0 / 5.0 + 32.0) * 10.0).round() / 10.0
}

/// Request `[r, g, b]` (12-bit duties) to set the color; anything else
/// just reports it.
fn led(rt: &mut Vest, req: Value) -> ServiceResult {
    if let Value::U16s(rgb) = &req {
        let rgb: [u16; 3] = rgb
            .as_slice()
            .try_into()
            .map_err(|_| format!("RangeError: expected 3 duties, got {}", rgb.len()))?;
        for (ch, duty) in devices::LED_CHANNELS.iter().zip(rgb) {
            devices::check_pwm(*ch, duty).map_err(|e| format!("RangeError: {e}"))?;
        }
        for (ch, duty) in devices::LED_CHANNELS.iter().zip(rgb) {
            transact(
                rt,
                I2C_BUS,
                addr::PCA9685,
                JobKind::Write,
                reg::PCA9685_LED0 + 4 * ch,
                &devices::pca9685_frame(duty),
                0,
            )
            .map_err(|e| format!("SensorFault: {e}"))?;
        }
    } else if req != Value::Empty {
        return Err(format!("RangeError: unsupported LED request {req}"));
    }
    Ok(Value::U16s(rt.state.led_color().to_vec()))
}

/// Requests: `{op: "set_angle", deg}`, `{op: "shake_head"}` (or the bare
/// text `shake_head`), `{op: "get"}` / empty. Replies `{angle, target}`.
fn servo(rt: &mut Vest, req: Value) -> ServiceResult {
    let op = match &req {
        Value::Empty => "get",
        Value::Text(s) => s.as_str(),
        Value::Record(_) => req.get("op").and_then(Value::as_str).unwrap_or("get"),
        _ => return Err(format!("unsupported servo request {req}")),
    };
    match op {
        "get" => {}
        "set_angle" => {
            let deg = req
                .get("deg")
                .and_then(Value::as_f64)
                .ok_or("set_angle needs a numeric deg")?;
            rt.state.servo_generation += 1;
            set_servo(rt, deg)?;
        }
        "shake_head" => shake_head(rt),
        other => return Err(format!("unknown servo op {other:?}")),
    }
    let now = rt.now();
    Ok(Value::record([
        ("angle", Value::Float(rt.state.servo.angle_at(now))),
        ("target", Value::Float(rt.state.servo.target())),
    ]))
}

fn set_servo(rt: &mut Vest, deg: f64) -> Result<(), String> {
    let now = rt.now();
    rt.state
        .servo
        .set_target(deg, now)
        .map_err(|e| format!("RangeError: {e}"))?;
    rt.state.servo_targets.push((now, deg));
    Ok(())
}

/// Queue the oscillation and return at once. A later `set_angle` or shake
/// supersedes whatever is still queued.
fn shake_head(rt: &mut Vest) {
    rt.state.servo_generation += 1;
    let generation = rt.state.servo_generation;
    let steps = 2 * SHAKE_CYCLES;
    for i in 0..=steps {
        let target = if i == steps {
            SHAKE_CENTER
        } else if i % 2 == 0 {
            SHAKE_CENTER + SHAKE_AMPLITUDE
        } else {
            SHAKE_CENTER - SHAKE_AMPLITUDE
        };
        rt.schedule_in(SHAKE_HALF_PERIOD * i, "", move |rt| {
            if rt.state.servo_generation == generation {
                let _ = set_servo(rt, target);
            }
        });
    }
}

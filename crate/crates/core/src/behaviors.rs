//! Behavior nodes. They only use topics and services, never the buses.

use std::cell::Cell;
use std::path::Path;
use std::rc::Rc;

use serde_json::json;
use vestbed_gateway::{CommandCode, CommandLink};
use vestbed_vision::{classify_hand, read_pnm_file, CnnSpec, CnnWeights, PreprocessConfig};

use crate::devices::{SERVO_MAX_DEG, SERVO_MIN_DEG};
use crate::runtime::{CoreError, ServiceResult};
use crate::scenario::Side;
use crate::vest::Vest;
use crate::{services, topics, SimTime, Value};

pub const NUMBER_WORDS: [&str; 6] = ["zero", "one", "two", "three", "four", "five"];

/// Both channels at or below the threshold in one sample. FSR codes fall
/// as force rises, so "at or below" means "squeezed at least this hard".
pub fn hug_pressed(left: u16, right: u16, threshold: i16) -> bool {
    let t = threshold.max(0) as u16;
    left <= t && right <= t
}

/// Which way the tracker should turn, if at all. Ties prefer center, then
/// left.
pub fn track_direction(left: u16, center: u16, right: u16) -> Option<Side> {
    let min = left.min(center).min(right);
    if center == min {
        None
    } else if left == min {
        Some(Side::Left)
    } else {
        Some(Side::Right)
    }
}

pub(crate) fn install(rt: &mut Vest, link: Option<Box<dyn CommandLink>>) -> Result<(), CoreError> {
    let cfg = rt.state.config.clone();

    let thanks = cfg.thanks_phrase.clone();
    let mut prev_touch = 0u8;
    rt.subscribe("touch_thanks", topics::TOUCH, 1, move |rt, msg| {
        let cur = msg.payload.as_u8().unwrap_or(0);
        if prev_touch == 0 && cur != 0 {
            say(rt, &thanks);
        }
        prev_touch = cur;
    })?;

    let greeting = cfg.greeting_phrase.clone();
    rt.subscribe("wave_greeting", topics::GESTURE, 1, move |rt, msg| {
        if msg.payload.as_u8() == Some(crate::scenario::Gesture::Wave.code()) {
            say(rt, &greeting);
        }
    })?;

    let mut hugging = false;
    rt.subscribe("hug", topics::FORCE, 1, move |rt, msg| {
        let pressed = match msg.payload.as_u16s() {
            Some([l, r]) => hug_pressed(*l, *r, cfg.hug_threshold),
            _ => false,
        };
        if pressed && !hugging {
            let color = Value::U16s(cfg.hug_color.to_vec());
            if let Err(e) = rt.call_service(services::LED, color) {
                log::warn!("hug: {e}");
            }
            say(rt, &cfg.hug_phrase);
        }
        hugging = pressed;
    })?;

    let step = rt.state.config.tracker_step;
    rt.subscribe("tracker", topics::TRACK, 1, move |rt, msg| {
        let Some(&[l, c, r]) = msg.payload.as_u16s() else {
            return;
        };
        let Some(side) = track_direction(l, c, r) else {
            return;
        };
        let Ok(state) = rt.call_service(services::SERVO, Value::Empty) else {
            return;
        };
        let current = state.get("target").and_then(Value::as_f64).unwrap_or(90.0);
        let delta = if side == Side::Left { step } else { -step };
        let next = (current + delta).clamp(SERVO_MIN_DEG, SERVO_MAX_DEG);
        if next != current {
            let req = Value::record([("op", Value::text("set_angle")), ("deg", Value::Float(next))]);
            if let Err(e) = rt.call_service(services::SERVO, req) {
                log::warn!("tracker: {e}");
            }
        }
    })?;

    let touch_cache = Rc::new(Cell::new(0u8));
    let sink = touch_cache.clone();
    rt.subscribe("iort_service", topics::TOUCH, 1, move |_, msg| {
        sink.set(msg.payload.as_u8().unwrap_or(0));
    })?;
    rt.advertise_service("iort_service", services::IOT, move |rt, req| {
        let code = req.get("code").and_then(Value::as_f64).ok_or("missing command code")?;
        let args = req.get("args").cloned().unwrap_or_default();
        iot_dispatch(rt, code as i64, args, touch_cache.get())
    })?;

    if let Some(link) = link {
        install_poller(rt, link)?;
    }
    Ok(())
}

fn say(rt: &mut Vest, text: &str) {
    if let Err(e) = rt.call_service(services::TTS, Value::text(text)) {
        log::warn!("tts: {e}");
    }
}

/// Execute one command code. Code 6 answers from the cached touch byte.
fn iot_dispatch(rt: &mut Vest, code: i64, args: Value, touch: u8) -> ServiceResult {
    let cmd = u8::try_from(code)
        .ok()
        .and_then(|c| CommandCode::try_from(c).ok())
        .ok_or_else(|| format!("UnknownCommand: {code}"))?;
    let call = |rt: &mut Vest, name: &str, req: Value| {
        rt.call_service(name, req).map_err(|e| e.to_string())
    };
    match cmd {
        CommandCode::SetServo => {
            let deg = args
                .as_f64()
                .or_else(|| args.get("deg").and_then(Value::as_f64))
                .ok_or("set servo needs deg")?;
            let req = Value::record([("op", Value::text("set_angle")), ("deg", Value::Float(deg))]);
            call(rt, services::SERVO, req)
        }
        CommandCode::SetLed => {
            let rgb = match &args {
                Value::U16s(v) => Value::U16s(v.clone()),
                Value::Record(_) => {
                    let ch = |k: &str| args.get(k).and_then(Value::as_f64).unwrap_or(0.0);
                    let duty = |v: f64| if (0.0..=65535.0).contains(&v) { v as u16 } else { u16::MAX };
                    Value::U16s(vec![duty(ch("r")), duty(ch("g")), duty(ch("b"))])
                }
                _ => return Err("set LED needs [r, g, b]".into()),
            };
            call(rt, services::LED, rgb)
        }
        CommandCode::Say => {
            let text = match &args {
                Value::Text(s) => s.clone(),
                _ => args
                    .get("text")
                    .and_then(Value::as_str)
                    .ok_or("say needs text")?
                    .to_string(),
            };
            call(rt, services::TTS, Value::Text(text.clone()))?;
            Ok(Value::Text(text))
        }
        CommandCode::ReadSonar => call(rt, services::SONAR, Value::Empty),
        CommandCode::ReadTemperature => {
            let f = call(rt, services::TEMP, Value::Empty)?
                .as_f64()
                .ok_or("non-numeric temperature")?;
            Ok(Value::Text(format!("{f:.1}")))
        }
        CommandCode::ReadTouch => Ok(Value::U8(touch)),
        CommandCode::ShakeHead => {
            call(rt, services::SERVO, Value::record([("op", Value::text("shake_head"))]))
        }
    }
}

/// The IoT behavior: every poll period, fetch one command from the
/// gateway, run it through `iot_srv`, post the result. Each hop costs the
/// configured one-way delay. An unreachable gateway is logged and retried
/// on the next tick.
fn install_poller(rt: &mut Vest, mut link: Box<dyn CommandLink>) -> Result<(), CoreError> {
    let period = rt.state.config.poll_period;
    let delay = rt.state.config.network_delay;
    let robot = rt.state.config.robot_id.clone();
    rt.add_timer("iort_node", SimTime::ZERO, period, move |rt| {
        rt.sleep(delay);
        let fetched = link.fetch_command(&robot, rt.now().as_secs_f64());
        rt.sleep(delay);
        let env = match fetched {
            Ok(Some(env)) => env,
            Ok(None) => return,
            Err(e) => {
                log::warn!("iort: {e}");
                rt.record("WARN", "iort_node", e.to_string());
                return;
            }
        };
        let mut req = vec![("code", Value::Int(i64::from(env.code as u8)))];
        if let Some(a) = &env.args {
            req.push(("args", Value::from_json(a)));
        }
        let data = match rt.call_service(services::IOT, Value::record(req)) {
            Ok(v) => v.to_json(),
            Err(e) => json!({ "error": e.to_string() }),
        };
        rt.sleep(delay);
        // a failed post is not retried: the gateway may already hold it
        if let Err(e) = link.post_result(&robot, env.seq, data, rt.now().as_secs_f64()) {
            log::warn!("iort: {e}");
            rt.record("WARN", "iort_node", e.to_string());
        }
        rt.sleep(delay);
    })?;
    Ok(())
}

/// Classify a hand image and announce the count.
pub(crate) fn see_hand(rt: &mut Vest, path: &Path) {
    let result = (|| {
        if rt.state.weights.is_none() {
            rt.state.weights = Some(CnnWeights::seeded(CnnSpec::hand_gesture(), rt.state.config.seed)?);
        }
        let img = read_pnm_file(path)?;
        let weights = rt.state.weights.as_ref().expect("weights loaded");
        classify_hand(&img, weights, &PreprocessConfig::default())
    })();
    match result {
        Ok(c) => {
            let now = rt.now();
            rt.state.sightings.push((now, c.class));
            say(rt, &format!("I see {}", NUMBER_WORDS[c.class]));
        }
        Err(e) => {
            log::warn!("vision: {e}");
            rt.record("WARN", "vision_node", e.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hug_polarity() {
        let t = crate::devices::fsr_code(2.0);
        let code = |f| crate::devices::fsr_code(f) as u16;
        assert!(hug_pressed(code(3.0), code(3.0), t));
        assert!(!hug_pressed(code(3.0), code(0.3), t));
        assert!(!hug_pressed(code(0.0), code(0.0), t));
        assert_eq!(hug_pressed(code(3.0), code(1.0), t), hug_pressed(code(1.0), code(3.0), t));
    }

    #[test]
    fn tracker_rules() {
        assert_eq!(track_direction(100, 200, 300), Some(Side::Left));
        assert_eq!(track_direction(300, 100, 200), None);
        assert_eq!(track_direction(100, 100, 300), None);
        assert_eq!(track_direction(300, 200, 100), Some(Side::Right));
        assert_eq!(track_direction(100, 200, 100), Some(Side::Left));
    }
}

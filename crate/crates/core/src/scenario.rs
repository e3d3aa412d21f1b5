//! Scripted physical ground truth.
//!
//! A scenario file is a list of timestamped directives, one per line:
//!
//! ```text
//! # comments and blank lines are ignored
//! at 1.0 touch on 3
//! at 2   say "what is your name"
//! at 5   force left 3.0
//! at 6   object center 0.4
//! at 7   remote 7                      # operator command through the gateway
//! at 8   remote 3 {"text": "hello"}
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::SimTime;

pub const TOUCH_PADS: u8 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Range(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Center,
    Right,
}

impl Side {
    pub const ALL: [Side; 3] = [Side::Left, Side::Center, Side::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    fn parse(s: &str) -> Option<Side> {
        match s {
            "left" => Some(Side::Left),
            "center" => Some(Side::Center),
            "right" => Some(Side::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(u8)]
pub enum Gesture {
    #[default]
    None = 0,
    Swipe = 1,
    AirPush = 2,
    Hover = 3,
    Circle = 4,
    Wave = 5,
}

impl Gesture {
    pub fn code(self) -> u8 {
        self as u8
    }

    fn parse(s: &str) -> Option<Gesture> {
        match s {
            "swipe" => Some(Gesture::Swipe),
            "air_push" => Some(Gesture::AirPush),
            "hover" => Some(Gesture::Hover),
            "circle" => Some(Gesture::Circle),
            "wave" => Some(Gesture::Wave),
            _ => None,
        }
    }
}

/// Continuous quantities that devices sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sensor {
    ForceLeft,
    ForceRight,
    Object(Side),
    Sonar,
    Ambient,
}

impl Sensor {
    fn stream_id(self) -> u64 {
        match self {
            Sensor::ForceLeft => 1,
            Sensor::ForceRight => 2,
            Sensor::Object(s) => 3 + s as u64,
            Sensor::Sonar => 6,
            Sensor::Ambient => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub touch: BTreeSet<u8>,
    pub force_left: f64,
    pub force_right: f64,
    /// Meters, indexed by [`Side::index`].
    pub obj_dist: [f64; 3],
    pub sonar_dist: f64,
    pub ambient_c: f64,
    pub gesture: Gesture,
    pub pending_speech: VecDeque<String>,
    pub hand_image: Option<PathBuf>,
    /// Per-sensor noise σ; absent means exact.
    pub noise: BTreeMap<Sensor, f64>,
    pub seed: u64,
}

impl Default for World {
    fn default() -> Self {
        Self {
            touch: BTreeSet::new(),
            force_left: 0.0,
            force_right: 0.0,
            obj_dist: [2.0; 3],
            sonar_dist: 3.0,
            ambient_c: 22.0,
            gesture: Gesture::None,
            pending_speech: VecDeque::new(),
            hand_image: None,
            noise: BTreeMap::new(),
            seed: 0,
        }
    }
}

impl World {
    pub fn truth(&self, sensor: Sensor) -> f64 {
        match sensor {
            Sensor::ForceLeft => self.force_left,
            Sensor::ForceRight => self.force_right,
            Sensor::Object(s) => self.obj_dist[s.index()],
            Sensor::Sonar => self.sonar_dist,
            Sensor::Ambient => self.ambient_c,
        }
    }

    /// Ground truth plus zero-mean Gaussian noise. The noise draw depends
    /// only on `(seed, sensor, t)`, so replays are identical.
    pub fn sample(&self, sensor: Sensor, t: SimTime) -> f64 {
        sample(self, sensor, self.seed, t)
    }

    /// Read and clear the latest gesture.
    pub fn take_gesture(&mut self) -> Gesture {
        std::mem::take(&mut self.gesture)
    }

    pub fn apply(&mut self, action: &Action) -> Result<(), ScenarioError> {
        match action {
            Action::SetTemp(c) => self.ambient_c = *c,
            Action::Touch { pad, on } => {
                if *pad >= TOUCH_PADS {
                    return Err(ScenarioError::Range(format!(
                        "touch pad {pad} out of range 0-{}",
                        TOUCH_PADS - 1
                    )));
                }
                if *on {
                    self.touch.insert(*pad);
                } else {
                    self.touch.remove(pad);
                }
            }
            Action::Force { left, newtons } => {
                if *left {
                    self.force_left = *newtons
                } else {
                    self.force_right = *newtons
                }
            }
            Action::Object { side, meters } => self.obj_dist[side.index()] = *meters,
            Action::Sonar(m) => self.sonar_dist = *m,
            Action::Gesture(g) => self.gesture = *g,
            Action::Say(text) => self.pending_speech.push_back(text.clone()),
            Action::ShowHand(p) => self.hand_image = Some(p.clone()),
            Action::Remote { .. } => {}
        }
        Ok(())
    }
}

pub fn sample(world: &World, sensor: Sensor, seed: u64, t: SimTime) -> f64 {
    let truth = world.truth(sensor);
    let sigma = world.noise.get(&sensor).copied().unwrap_or(0.0);
    if sigma <= 0.0 {
        return truth;
    }
    let key = splitmix(seed ^ splitmix(sensor.stream_id() ^ splitmix(t.as_nanos())));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let noisy = truth + Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng);
    match sensor {
        Sensor::Ambient => noisy,
        _ => noisy.max(0.0),
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    SetTemp(f64),
    Touch { pad: u8, on: bool },
    Force { left: bool, newtons: f64 },
    Object { side: Side, meters: f64 },
    Sonar(f64),
    Gesture(Gesture),
    Say(String),
    ShowHand(PathBuf),
    /// Operator command queued at the gateway (code plus optional JSON args).
    Remote { code: u8, args: Option<serde_json::Value> },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SetTemp(c) => write!(f, "set_temp {c}"),
            Action::Touch { pad, on } => {
                write!(f, "touch {} {pad}", if *on { "on" } else { "off" })
            }
            Action::Force { left, newtons } => {
                write!(f, "force {} {newtons}", if *left { "left" } else { "right" })
            }
            Action::Object { side, meters } => {
                write!(f, "object {} {meters}", format!("{side:?}").to_lowercase())
            }
            Action::Sonar(m) => write!(f, "sonar {m}"),
            Action::Gesture(g) => write!(f, "gesture {}", format!("{g:?}").to_lowercase()),
            Action::Say(t) => write!(f, "say {t:?}"),
            Action::ShowHand(p) => write!(f, "show_hand {}", p.display()),
            Action::Remote { code, args } => match args {
                Some(a) => write!(f, "remote {code} {a}"),
                None => write!(f, "remote {code}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvent {
    pub at: SimTime,
    /// 1-based source line.
    pub line: usize,
    pub action: Action,
}

/// Parse a scenario file. Events come back sorted by time, ties in file
/// order.
pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioEvent>, ScenarioError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| ScenarioError::Parse { line, message };
        let body = strip_comment(raw).trim();
        if body.is_empty() {
            continue;
        }
        let mut words = body.split_whitespace();
        if words.next() != Some("at") {
            return Err(err("expected `at <seconds> <action>`".into()));
        }
        let t_str = words.next().ok_or_else(|| err("missing time".into()))?;
        let t: f64 = t_str
            .parse()
            .map_err(|_| err(format!("invalid time {t_str:?}")))?;
        if !t.is_finite() || t < 0.0 {
            return Err(err(format!("time must be non-negative, got {t_str}")));
        }
        let verb = words.next().ok_or_else(|| err("missing action".into()))?;
        let rest: Vec<&str> = words.collect();
        let action = parse_action(verb, &rest, body).map_err(err)?;
        events.push(ScenarioEvent {
            at: SimTime::from_secs_f64(t),
            line,
            action,
        });
    }
    events.sort_by_key(|e| (e.at, e.line));
    Ok(events)
}

/// Check every event against world limits without running anything.
pub fn validate(events: &[ScenarioEvent]) -> Result<(), ScenarioError> {
    let mut w = World::default();
    for e in events {
        w.apply(&e.action).map_err(|err| match err {
            ScenarioError::Range(m) => ScenarioError::Parse {
                line: e.line,
                message: m,
            },
            other => other,
        })?;
    }
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    // a '#' inside a quoted string is text, not a comment
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn non_negative(s: Option<&&str>, what: &str) -> Result<f64, String> {
    let s = s.ok_or_else(|| format!("missing {what}"))?;
    let v: f64 = s.parse().map_err(|_| format!("invalid {what} {s:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("{what} must be non-negative, got {s}"));
    }
    Ok(v)
}

fn exact_args(rest: &[&str], n: usize, verb: &str) -> Result<(), String> {
    if rest.len() != n {
        return Err(format!("{verb} takes {n} argument(s), got {}", rest.len()));
    }
    Ok(())
}

fn parse_action(verb: &str, rest: &[&str], body: &str) -> Result<Action, String> {
    match verb {
        "set_temp" => {
            exact_args(rest, 1, verb)?;
            let c: f64 = rest[0]
                .parse()
                .map_err(|_| format!("invalid temperature {:?}", rest[0]))?;
            if !c.is_finite() {
                return Err("temperature must be finite".into());
            }
            Ok(Action::SetTemp(c))
        }
        "touch" => {
            exact_args(rest, 2, verb)?;
            let on = match rest[0] {
                "on" => true,
                "off" => false,
                other => return Err(format!("touch expects on|off, got {other:?}")),
            };
            let pad: u8 = rest[1]
                .parse()
                .map_err(|_| format!("invalid pad {:?}", rest[1]))?;
            Ok(Action::Touch { pad, on })
        }
        "force" => {
            exact_args(rest, 2, verb)?;
            let left = match rest[0] {
                "left" => true,
                "right" => false,
                other => return Err(format!("force expects left|right, got {other:?}")),
            };
            Ok(Action::Force {
                left,
                newtons: non_negative(rest.get(1), "force")?,
            })
        }
        "object" => {
            exact_args(rest, 2, verb)?;
            let side = Side::parse(rest[0])
                .ok_or_else(|| format!("object expects left|center|right, got {:?}", rest[0]))?;
            Ok(Action::Object {
                side,
                meters: non_negative(rest.get(1), "distance")?,
            })
        }
        "sonar" => {
            exact_args(rest, 1, verb)?;
            Ok(Action::Sonar(non_negative(rest.first(), "distance")?))
        }
        "gesture" => {
            exact_args(rest, 1, verb)?;
            Gesture::parse(rest[0])
                .map(Action::Gesture)
                .ok_or_else(|| format!("unknown gesture {:?}", rest[0]))
        }
        "say" => {
            let start = body.find('"').ok_or("say expects a quoted string")?;
            let end = body.rfind('"').filter(|&e| e > start).ok_or("unterminated string")?;
            if !body[end + 1..].trim().is_empty() {
                return Err("trailing text after quoted string".into());
            }
            Ok(Action::Say(body[start + 1..end].to_string()))
        }
        "show_hand" => {
            exact_args(rest, 1, verb)?;
            Ok(Action::ShowHand(PathBuf::from(rest[0])))
        }
        "remote" => {
            let code_str = rest.first().ok_or("remote expects a command code")?;
            let code: u8 = code_str
                .parse()
                .map_err(|_| format!("invalid command code {code_str:?}"))?;
            let args = match body.find('{').or_else(|| body.find('[')) {
                Some(i) => Some(
                    serde_json::from_str(&body[i..]).map_err(|e| format!("bad JSON args: {e}"))?,
                ),
                None if rest.len() == 1 => None,
                None => Some(serde_json::Value::String(rest[1..].join(" "))),
            };
            Ok(Action::Remote { code, args })
        }
        other => Err(format!("unknown action {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_directive() {
        let evs = parse_scenario(
            "# demo\n\nat 1.0 touch on 3\nat 2 say \"what is your name\"\n\
             at 0.5 set_temp 22.2\nat 3 force left 3.0\nat 3 object center 0.5\n\
             at 4 sonar 1.5\nat 4 gesture air_push\nat 5 show_hand img/hand.pgm\n\
             at 6 remote 3 {\"text\": \"hi\"}\nat 6 remote 7",
        )
        .unwrap();
        assert_eq!(evs.len(), 10);
        assert_eq!(evs[0].action, Action::SetTemp(22.2));
        assert_eq!(evs[1].action, Action::Touch { pad: 3, on: true });
        assert_eq!(evs[1].at, SimTime::from_secs(1));
        assert_eq!(evs[2].action, Action::Say("what is your name".into()));
        assert_eq!(evs[6].action, Action::Gesture(Gesture::AirPush));
        assert_eq!(
            evs[8].action,
            Action::Remote {
                code: 3,
                args: Some(serde_json::json!({"text": "hi"}))
            }
        );
        assert_eq!(evs[9].action, Action::Remote { code: 7, args: None });
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scenario("at 1 touch on 3\nat -1 gesture wave").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 2, .. }), "{e}");
        let e = parse_scenario("hello").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 1, .. }));
        assert!(parse_scenario("at 1 gesture moonwalk").is_err());
        assert!(parse_scenario("at 1 force up 2").is_err());
        assert!(parse_scenario("at 1 say unquoted").is_err());
        assert!(parse_scenario("at 1 sonar -2").is_err());
    }

    #[test]
    fn sorted_by_time_then_file_order() {
        let evs = parse_scenario("at 2 sonar 1\nat 1 sonar 2\nat 1 sonar 3").unwrap();
        let lines: Vec<usize> = evs.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3, 1]);
    }

    #[test]
    fn hash_inside_quotes_is_text() {
        let evs = parse_scenario("at 1 say \"pad #3\" # note").unwrap();
        assert_eq!(evs[0].action, Action::Say("pad #3".into()));
    }

    #[test]
    fn apply_touch_set_semantics_and_range() {
        let mut w = World::default();
        w.apply(&Action::Touch { pad: 3, on: true }).unwrap();
        w.apply(&Action::Touch { pad: 0, on: true }).unwrap();
        assert_eq!(w.touch, BTreeSet::from([0, 3]));
        w.apply(&Action::Force {
            left: true,
            newtons: 3.0,
        })
        .unwrap();
        assert_eq!(w.force_left, 3.0);
        assert!(matches!(
            w.apply(&Action::Touch { pad: 12, on: true }),
            Err(ScenarioError::Range(_))
        ));
        let evs = parse_scenario("at 1 touch on 12").unwrap();
        assert!(matches!(validate(&evs), Err(ScenarioError::Parse { line: 1, .. })));
    }

    #[test]
    fn apply_changes_only_named_fields() {
        let base = World::default();
        let mut w = base.clone();
        w.apply(&Action::Sonar(1.5)).unwrap();
        assert_eq!(World { sonar_dist: base.sonar_dist, ..w }, base);
    }

    #[test]
    fn gesture_is_consumed_once() {
        let mut w = World::default();
        w.apply(&Action::Gesture(Gesture::Wave)).unwrap();
        assert_eq!(w.take_gesture(), Gesture::Wave);
        assert_eq!(w.take_gesture(), Gesture::None);
    }

    #[test]
    fn zero_noise_is_exact_and_noise_is_replayable() {
        let mut w = World::default();
        w.obj_dist[Side::Center.index()] = 0.5;
        let s = Sensor::Object(Side::Center);
        assert_eq!(w.sample(s, SimTime::from_secs(3)), 0.5);
        w.noise.insert(s, 0.01);
        let t = SimTime::from_millis(1234);
        assert_eq!(sample(&w, s, 7, t), sample(&w, s, 7, t));
        assert_ne!(sample(&w, s, 7, t), sample(&w, s, 8, t));
    }

    #[test]
    fn noise_mean_converges() {
        let mut w = World::default();
        let s = Sensor::Object(Side::Center);
        w.obj_dist[1] = 0.5;
        let sigma = 0.01;
        w.noise.insert(s, sigma);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| sample(&w, s, 1, SimTime::from_millis(i)))
            .sum::<f64>()
            / n as f64;
        // standard error is σ/100; allow four of them
        assert!((mean - 0.5).abs() <= 4.0 * sigma / 100.0, "mean {mean}");
    }
}

//! Register-level models of the vest's peripherals.
//!
//! Each model answers bus transactions by sampling the scenario world
//! through a transfer function. The pure conversion functions are exposed
//! separately so tests can check them without a bus.

use std::any::Any;
use std::time::Duration;

use thiserror::Error;

use crate::bus::{BusFault, Device, JobKind, Transaction};
use crate::scenario::{Gesture, Sensor, Side, World};
use crate::SimTime;

/// Default 7-bit addresses on bus 0.
pub mod addr {
    pub const MPR121: u8 = 0x5A;
    pub const ADS1115: u8 = 0x48;
    pub const TOF_LEFT: u8 = 0x29;
    pub const TOF_CENTER: u8 = 0x2A;
    pub const TOF_RIGHT: u8 = 0x2B;
    pub const SRF02: u8 = 0x70;
    pub const MCP9808: u8 = 0x18;
    pub const GESTURE: u8 = 0x39;
    pub const PCA9685: u8 = 0x40;
    /// Chip-select id of the loopback part on the SPI bus.
    pub const SPI_LOOPBACK: u8 = 0;

    pub const fn tof(side: crate::scenario::Side) -> u8 {
        match side {
            crate::scenario::Side::Left => TOF_LEFT,
            crate::scenario::Side::Center => TOF_CENTER,
            crate::scenario::Side::Right => TOF_RIGHT,
        }
    }
}

/// Register numbers the hardware nodes use.
pub mod reg {
    pub const MPR121_STATUS: u8 = 0x00;
    pub const ADS1115_CONVERSION: u8 = 0x00;
    pub const ADS1115_CONFIG: u8 = 0x01;
    pub const TOF_RESULT: u8 = 0x14;
    pub const SRF02_COMMAND: u8 = 0x00;
    pub const SRF02_RANGE: u8 = 0x02;
    pub const MCP9808_AMBIENT: u8 = 0x05;
    pub const GESTURE_FLAG: u8 = 0x43;
    pub const PCA9685_LED0: u8 = 0x06;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("{0}")]
    Range(String),
}

// ---- FSR divider + ADS1115 ----------------------------------------------

pub const FSR_VCC: f64 = 3.3;
pub const FSR_R_FIXED: f64 = 10_000.0;
/// R_FSR = FSR_R0 / F, in ohm·newton.
pub const FSR_R0: f64 = 10_000.0;
pub const FSR_MIN_FORCE: f64 = 0.25;
pub const FSR_OPEN_OHMS: f64 = 10_000_000.0;
/// ADS1115 LSB at the ±4.096 V range.
pub const ADS_LSB_VOLTS: f64 = 125e-6;

pub fn fsr_resistance(force_n: f64) -> f64 {
    if force_n < FSR_MIN_FORCE {
        FSR_OPEN_OHMS
    } else {
        (FSR_R0 / force_n).min(FSR_OPEN_OHMS)
    }
}

/// Voltage across the FSR in a divider with a fixed resistor to Vcc.
pub fn fsr_voltage(force_n: f64) -> f64 {
    let r = fsr_resistance(force_n);
    FSR_VCC * r / (r + FSR_R_FIXED)
}

pub fn ads_code(volts: f64) -> i16 {
    (volts / ADS_LSB_VOLTS).round().clamp(0.0, 32767.0) as i16
}

/// ADC code of one FSR channel given the applied force.
pub fn fsr_code(force_n: f64) -> i16 {
    ads_code(fsr_voltage(force_n))
}

/// Single-ended conversion: channel 0 is the left FSR, 1 the right; 2 and 3
/// are unconnected and read 0.
pub fn ads1115_convert(channel: u8, world: &World, t: SimTime) -> Result<i16, DeviceError> {
    match channel {
        0 => Ok(fsr_code(world.sample(Sensor::ForceLeft, t))),
        1 => Ok(fsr_code(world.sample(Sensor::ForceRight, t))),
        2 | 3 => Ok(0),
        c => Err(DeviceError::Range(format!("ADS1115 channel {c} out of range 0-3"))),
    }
}

/// Config word selecting single-ended `channel` at ±4.096 V, single shot.
pub fn ads1115_config_word(channel: u8) -> u16 {
    0x8000 | ((0b100 | u16::from(channel & 3)) << 12) | (0b001 << 9) | 0x0183
}

#[derive(Debug, Default)]
pub struct Ads1115 {
    channel: u8,
}

impl Device for Ads1115 {
    fn name(&self) -> &'static str {
        "ADS1115"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, t: SimTime)
        -> Result<Vec<u8>, BusFault> {
        match (tx.kind, tx.reg) {
            (JobKind::Write, reg::ADS1115_CONFIG) => {
                let [hi, _lo] = <[u8; 2]>::try_from(tx.out).map_err(|_| BusFault::Nack)?;
                let mux = (hi >> 4) & 0b111;
                if mux < 0b100 {
                    // differential modes are not wired on the vest
                    return Err(BusFault::Nack);
                }
                self.channel = mux - 0b100;
                Ok(Vec::new())
            }
            (JobKind::Write, _) => Ok(Vec::new()),
            (_, reg::ADS1115_CONVERSION) => {
                let code = ads1115_convert(self.channel, world, t).map_err(|_| BusFault::Nack)?;
                Ok(code.to_be_bytes().to_vec())
            }
            (_, reg::ADS1115_CONFIG) => {
                Ok(ads1115_config_word(self.channel).to_be_bytes().to_vec())
            }
            _ => Ok(vec![0; tx.read_len]),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- MPR121 --------------------------------------------------------------

/// Touch status word: bit i set iff pad i is touched.
pub fn mpr121_status(world: &World) -> u16 {
    world
        .touch
        .iter()
        .filter(|&&p| p < 12)
        .fold(0u16, |acc, &p| acc | (1 << p))
}

#[derive(Debug, Default)]
pub struct Mpr121;

impl Device for Mpr121 {
    fn name(&self) -> &'static str {
        "MPR121"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, _: SimTime)
        -> Result<Vec<u8>, BusFault> {
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        let status = mpr121_status(world).to_le_bytes();
        Ok(register_window(&status, tx.reg, tx.read_len))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Bytes `reg..reg+len` of a small register image, zero past its end.
fn register_window(image: &[u8], reg: u8, len: usize) -> Vec<u8> {
    (0..len)
        .map(|i| image.get(reg as usize + i).copied().unwrap_or(0))
        .collect()
}

// ---- VL53L0X ---------------------------------------------------------------

pub const TOF_MIN_MM: u16 = 30;
pub const TOF_MAX_MM: u16 = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum RangeStatus {
    Valid = 0,
    UnderRange = 1,
    OutOfRange = 2,
}

impl RangeStatus {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(RangeStatus::Valid),
            1 => Some(RangeStatus::UnderRange),
            2 => Some(RangeStatus::OutOfRange),
            _ => None,
        }
    }
}

pub fn tof_reading(meters: f64) -> (u16, RangeStatus) {
    let mm = (meters * 1000.0).round();
    if mm < f64::from(TOF_MIN_MM) {
        (TOF_MIN_MM, RangeStatus::UnderRange)
    } else if mm > f64::from(TOF_MAX_MM) {
        (TOF_MAX_MM, RangeStatus::OutOfRange)
    } else {
        (mm as u16, RangeStatus::Valid)
    }
}

pub fn vl53l0x_read(world: &World, which: Side, t: SimTime) -> (u16, RangeStatus) {
    tof_reading(world.sample(Sensor::Object(which), t))
}

/// Result block at [`reg::TOF_RESULT`]: status byte, then range in mm
/// (big-endian).
#[derive(Debug)]
pub struct Vl53l0x {
    pub side: Side,
}

impl Device for Vl53l0x {
    fn name(&self) -> &'static str {
        "VL53L0X"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, t: SimTime)
        -> Result<Vec<u8>, BusFault> {
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        let (mm, status) = vl53l0x_read(world, self.side, t);
        let [hi, lo] = mm.to_be_bytes();
        let image = [status as u8, hi, lo];
        let offset = tx.reg.wrapping_sub(reg::TOF_RESULT);
        Ok(register_window(&image, offset, tx.read_len))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- SRF02 -----------------------------------------------------------------

pub const SRF02_RANGING: Duration = Duration::from_millis(65);
pub const SRF02_MIN_M: f64 = 0.18;
pub const SRF02_MAX_M: f64 = 6.0;
pub const SRF02_RANGE_CM: u8 = 0x51;

/// Echo distance in cm; 0 when the target is too close or beyond range.
pub fn srf02_cm(meters: f64) -> u16 {
    if !(SRF02_MIN_M..=SRF02_MAX_M).contains(&meters) {
        0
    } else {
        (meters * 100.0).round() as u16
    }
}

#[derive(Debug, Default)]
pub struct Srf02 {
    last_cm: u16,
    in_flight: Option<(SimTime, u16)>,
}

impl Srf02 {
    fn settle(&mut self, t: SimTime) {
        if let Some((ready, cm)) = self.in_flight {
            if ready <= t {
                self.last_cm = cm;
                self.in_flight = None;
            }
        }
    }
}

impl Device for Srf02 {
    fn name(&self) -> &'static str {
        "SRF02"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, t: SimTime)
        -> Result<Vec<u8>, BusFault> {
        self.settle(t);
        if tx.kind != JobKind::Read && tx.reg == reg::SRF02_COMMAND && !tx.out.is_empty() {
            if tx.out[0] == SRF02_RANGE_CM {
                let cm = srf02_cm(world.sample(Sensor::Sonar, t));
                self.in_flight = Some((t + SRF02_RANGING, cm));
            }
            if tx.kind == JobKind::Write {
                return Ok(Vec::new());
            }
        }
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        // 0: software revision, 1: unused, 2-3: range, 4-5: minimum range
        let [hi, lo] = self.last_cm.to_be_bytes();
        let [mhi, mlo] = ((SRF02_MIN_M * 100.0) as u16).to_be_bytes();
        let image = [6, 0x80, hi, lo, mhi, mlo];
        Ok(register_window(&image, tx.reg, tx.read_len))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- MCP9808 ---------------------------------------------------------------

pub const MCP9808_LSB_C: f64 = 0.0625;

pub fn mcp9808_encode(celsius: f64) -> u16 {
    let counts = (celsius / MCP9808_LSB_C).round().clamp(i16::MIN as f64, i16::MAX as f64);
    counts as i16 as u16
}

pub fn mcp9808_decode(raw: u16) -> f64 {
    f64::from(raw as i16) * MCP9808_LSB_C
}

pub fn mcp9808_read(world: &World, t: SimTime) -> u16 {
    mcp9808_encode(world.sample(Sensor::Ambient, t))
}

#[derive(Debug, Default)]
pub struct Mcp9808;

impl Device for Mcp9808 {
    fn name(&self) -> &'static str {
        "MCP9808"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, t: SimTime)
        -> Result<Vec<u8>, BusFault> {
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        match tx.reg {
            reg::MCP9808_AMBIENT => Ok(register_window(
                &mcp9808_read(world, t).to_be_bytes(),
                0,
                tx.read_len,
            )),
            // manufacturer id
            0x06 => Ok(register_window(&[0x00, 0x54], 0, tx.read_len)),
            _ => Ok(vec![0; tx.read_len]),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- gesture sensor ----------------------------------------------------------

/// Latest gesture code; reading consumes it.
pub fn gesture_read(world: &mut World) -> u8 {
    world.take_gesture().code()
}

#[derive(Debug, Default)]
pub struct GestureSensor;

impl Device for GestureSensor {
    fn name(&self) -> &'static str {
        "gesture"
    }

    fn transact(&mut self, tx: Transaction<'_>, world: &mut World, _: SimTime)
        -> Result<Vec<u8>, BusFault> {
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        if tx.reg != reg::GESTURE_FLAG {
            return Ok(vec![0; tx.read_len]);
        }
        let mut out = vec![0; tx.read_len];
        out[0] = gesture_read(world);
        Ok(out)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

impl From<u8> for Gesture {
    fn from(code: u8) -> Self {
        match code {
            1 => Gesture::Swipe,
            2 => Gesture::AirPush,
            3 => Gesture::Hover,
            4 => Gesture::Circle,
            5 => Gesture::Wave,
            _ => Gesture::None,
        }
    }
}

// ---- PCA9685 -----------------------------------------------------------------

pub const PWM_CHANNELS: u8 = 16;
pub const PWM_MAX: u16 = 4095;
/// Channels driving the LED's red, green and blue legs.
pub const LED_CHANNELS: [u8; 3] = [0, 1, 2];

#[derive(Debug, Default)]
pub struct Pca9685 {
    duty: [u16; PWM_CHANNELS as usize],
}

impl Pca9685 {
    pub fn set(&mut self, channel: u8, duty: u16) -> Result<(), DeviceError> {
        check_pwm(channel, duty)?;
        self.duty[channel as usize] = duty;
        Ok(())
    }

    pub fn duty(&self, channel: u8) -> u16 {
        self.duty.get(channel as usize).copied().unwrap_or(0)
    }

    pub fn color(&self) -> [u16; 3] {
        LED_CHANNELS.map(|c| self.duty(c))
    }
}

pub fn check_pwm(channel: u8, duty: u16) -> Result<(), DeviceError> {
    if channel >= PWM_CHANNELS {
        return Err(DeviceError::Range(format!("PWM channel {channel} out of range 0-15")));
    }
    if duty > PWM_MAX {
        return Err(DeviceError::Range(format!("PWM duty {duty} exceeds 12 bits")));
    }
    Ok(())
}

/// The four LEDn_ON/OFF bytes that produce `duty` with the pulse starting
/// at count 0.
pub fn pca9685_frame(duty: u16) -> [u8; 4] {
    let [lo, hi] = duty.to_le_bytes();
    [0, 0, lo, hi]
}

impl Device for Pca9685 {
    fn name(&self) -> &'static str {
        "PCA9685"
    }

    fn transact(&mut self, tx: Transaction<'_>, _: &mut World, _: SimTime)
        -> Result<Vec<u8>, BusFault> {
        let first = reg::PCA9685_LED0;
        let last = first + 4 * PWM_CHANNELS;
        let in_leds = (first..last).contains(&tx.reg);
        if tx.kind == JobKind::Write || tx.kind == JobKind::WriteThenRead {
            if in_leds && !tx.out.is_empty() {
                let off = tx.reg - first;
                if !off.is_multiple_of(4) || tx.out.len() != 4 {
                    // only whole-channel writes are modelled
                    return Err(BusFault::Nack);
                }
                let ch = off / 4;
                let duty = if tx.out[3] & 0x10 != 0 {
                    0
                } else if tx.out[1] & 0x10 != 0 {
                    PWM_MAX
                } else {
                    u16::from_le_bytes([tx.out[2], tx.out[3] & 0x0F])
                };
                self.duty[ch as usize] = duty;
            }
            if tx.kind == JobKind::Write {
                return Ok(Vec::new());
            }
        }
        if in_leds {
            let image: Vec<u8> = self.duty.iter().flat_map(|d| pca9685_frame(*d)).collect();
            Ok(register_window(&image, tx.reg - first, tx.read_len))
        } else {
            Ok(vec![0; tx.read_len])
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- SPI loopback --------------------------------------------------------------

/// Reads back whatever was last written.
#[derive(Debug, Default)]
pub struct SpiLoopback {
    last: Vec<u8>,
}

impl Device for SpiLoopback {
    fn name(&self) -> &'static str {
        "loopback"
    }

    fn transact(&mut self, tx: Transaction<'_>, _: &mut World, _: SimTime)
        -> Result<Vec<u8>, BusFault> {
        if !tx.out.is_empty() {
            self.last = tx.out.to_vec();
        }
        if !tx.kind.reads() {
            return Ok(Vec::new());
        }
        Ok(register_window(&self.last, 0, tx.read_len))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

// ---- servo -----------------------------------------------------------------------

pub const SERVO_SLEW_DEG_S: f64 = 300.0;
pub const SERVO_MIN_DEG: f64 = 0.0;
pub const SERVO_MAX_DEG: f64 = 180.0;

pub fn check_angle(deg: f64) -> Result<(), DeviceError> {
    if !(SERVO_MIN_DEG..=SERVO_MAX_DEG).contains(&deg) {
        return Err(DeviceError::Range(format!("servo angle {deg} outside 0-180")));
    }
    Ok(())
}

/// Move `angle` toward `target` at the slew rate for `dt` seconds.
pub fn servo_step(angle: f64, target: f64, dt: f64) -> Result<f64, DeviceError> {
    check_angle(target)?;
    let max = SERVO_SLEW_DEG_S * dt.max(0.0);
    let delta = target - angle;
    Ok(if delta.abs() <= max {
        target
    } else {
        angle + max.copysign(delta)
    })
}

/// Head servo on the Maestro controller (serial, not on the I²C bus).
/// The angle is integrated lazily between target changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Servo {
    angle: f64,
    target: f64,
    since: SimTime,
}

impl Default for Servo {
    fn default() -> Self {
        Servo::new(90.0)
    }
}

impl Servo {
    pub fn new(angle: f64) -> Self {
        Self {
            angle,
            target: angle,
            since: SimTime::ZERO,
        }
    }

    pub fn angle_at(&self, t: SimTime) -> f64 {
        servo_step(self.angle, self.target, (t - self.since).as_secs_f64())
            .unwrap_or(self.target)
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn set_target(&mut self, deg: f64, now: SimTime) -> Result<(), DeviceError> {
        check_angle(deg)?;
        self.angle = self.angle_at(now);
        self.since = now.max(self.since);
        self.target = deg;
        Ok(())
    }
}

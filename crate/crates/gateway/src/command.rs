use serde::{Deserialize, Serialize};

/// Single-byte reply of `/api/readtouch`.
pub const ACK_BYTE: u8 = 0xFF;

/// Remote command registry. `ReadTouch` (6) is the byte the original
/// prototype writes for a touch read; the others extend it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum CommandCode {
    SetServo = 1,
    SetLed = 2,
    Say = 3,
    ReadSonar = 4,
    ReadTemperature = 5,
    ReadTouch = 6,
    ShakeHead = 7,
}

impl CommandCode {
    pub const ALL: [CommandCode; 7] = [
        CommandCode::SetServo,
        CommandCode::SetLed,
        CommandCode::Say,
        CommandCode::ReadSonar,
        CommandCode::ReadTemperature,
        CommandCode::ReadTouch,
        CommandCode::ShakeHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandCode::SetServo => "set_servo",
            CommandCode::SetLed => "set_led",
            CommandCode::Say => "say",
            CommandCode::ReadSonar => "read_sonar",
            CommandCode::ReadTemperature => "read_temperature",
            CommandCode::ReadTouch => "read_touch",
            CommandCode::ShakeHead => "shake_head",
        }
    }
}

impl TryFrom<u8> for CommandCode {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        CommandCode::ALL
            .into_iter()
            .find(|c| *c as u8 == v)
            .ok_or_else(|| format!("unknown command code {v}"))
    }
}

impl From<CommandCode> for u8 {
    fn from(c: CommandCode) -> u8 {
        c as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trips() {
        for c in CommandCode::ALL {
            assert_eq!(CommandCode::try_from(c as u8), Ok(c));
        }
        assert_eq!(CommandCode::ReadTouch as u8, 0x06);
        assert!(CommandCode::try_from(0).is_err());
        assert!(CommandCode::try_from(99).is_err());
    }
}

//! Text-level speech: the dialogue database and the speech-to-speech node.
//!
//! Dialogue files hold one `prompt => response` pair per line. Prompts are
//! matched after normalization (lowercase, punctuation removed, whitespace
//! collapsed). A response may contain `{temp_f}`, filled from `srv_temp`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::runtime::{CoreError, Runtime};
use crate::Value;

pub const TEMP_PLACEHOLDER: &str = "{temp_f}";
pub const TEMP_FAILURE: &str = "I cannot read the temperature";

pub const DEFAULT_DIALOGUE: &str = "\
# prompt => response
what is your name => My name is H B S 2
what is your favorite color => My favorite color is blue. My vest is blue.
what is the temperature => The temperature is {temp_f} degrees
";

#[derive(Debug, Error, Clone, PartialEq)]
#[error("dialogue line {line}: {message}")]
pub struct DialogueError {
    pub line: usize,
    pub message: String,
}

pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c.to_lowercase().next().unwrap_or(c)
            } else if c == '\'' || c == '\u{2019}' {
                '\0'
            } else {
                ' '
            }
        })
        .filter(|&c| c != '\0')
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DialogueDb {
    entries: BTreeMap<String, String>,
}

impl DialogueDb {
    pub fn parse(text: &str) -> Result<Self, DialogueError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| DialogueError {
                line: i + 1,
                message: message.to_string(),
            };
            let (prompt, response) = line.split_once("=>").ok_or_else(|| err("expected `prompt => response`"))?;
            let prompt = normalize(prompt);
            if prompt.is_empty() {
                return Err(err("empty prompt"));
            }
            entries.insert(prompt, response.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn lookup(&self, heard: &str) -> Option<&str> {
        self.entries.get(&normalize(heard)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prompts(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Round half away from zero to a whole degree, for speaking.
pub fn spoken_degrees(fahrenheit: f64) -> i64 {
    fahrenheit.round() as i64
}

/// Fill a response template. `temp` is only called when the template needs
/// it; `Err` yields the fixed failure sentence.
pub fn render(template: &str, temp: impl FnOnce() -> Result<f64, String>) -> String {
    if !template.contains(TEMP_PLACEHOLDER) {
        return template.to_string();
    }
    match temp() {
        Ok(f) => template.replace(TEMP_PLACEHOLDER, &spoken_degrees(f).to_string()),
        Err(_) => TEMP_FAILURE.to_string(),
    }
}

/// Subscribe the speech-to-speech node to `tpc_speech`.
pub fn install_s2s<S: 'static>(rt: &mut Runtime<S>, db: DialogueDb) -> Result<(), CoreError> {
    rt.subscribe("s2s_node", crate::topics::SPEECH, 10, move |rt, msg| {
        let Some(heard) = msg.payload.as_str() else {
            return;
        };
        let Some(template) = db.lookup(heard) else {
            return;
        };
        let reply = render(template, || {
            rt.call_service(crate::services::TEMP, Value::Empty)
                .map_err(|e| e.to_string())?
                .as_f64()
                .ok_or_else(|| "non-numeric temperature".to_string())
        });
        if let Err(e) = rt.call_service(crate::services::TTS, Value::Text(reply)) {
            log::warn!("s2s: {e}");
        }
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize("What is your NAME?"), "what is your name");
        assert_eq!(normalize("  what   is\tyour name "), "what is your name");
        assert_eq!(normalize("What's up?"), "whats up");
        let once = normalize("Hello, World!!");
        assert_eq!(normalize(&once), once);
    }

    #[test]
    fn parse_and_lookup() {
        let db = DialogueDb::parse(
            "what is your name => My name is H B S 2\n# note\n\nhi => one\nHI! => two",
        )
        .unwrap();
        assert_eq!(db.len(), 2);
        assert_eq!(db.lookup("What is your name?"), Some("My name is H B S 2"));
        assert_eq!(db.lookup("hi"), Some("two"));
        assert_eq!(db.lookup("unknown phrase"), None);
        let e = DialogueDb::parse("ok => fine\nbad line").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn default_db_has_three_dialogues() {
        let db = DialogueDb::parse(DEFAULT_DIALOGUE).unwrap();
        assert_eq!(
            db.lookup("What is your favorite color?"),
            Some("My favorite color is blue. My vest is blue.")
        );
        assert_eq!(db.len(), 3);
    }

    #[test]
    fn template_rendering() {
        assert_eq!(render("The temperature is {temp_f} degrees", || Ok(71.9)), "The temperature is 72 degrees");
        assert_eq!(render("The temperature is {temp_f} degrees", || Err("x".into())), TEMP_FAILURE);
        assert_eq!(render("plain", || panic!("not needed")), "plain");
        assert_eq!(spoken_degrees(71.5), 72);
    }
}

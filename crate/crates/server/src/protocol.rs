//! JSON text frames exchanged on `/ws`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use swarmlink_core::sim::{TimedEvent, WorldCommand, WorldSnapshot};

pub const SCHEMA_VERSION: u32 = 1;

/// Server to client: the world at one tick plus the events logged since the
/// previous snapshot was published.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMessage {
    pub schema_version: u32,
    #[serde(flatten)]
    pub world: WorldSnapshot,
    pub paused: bool,
    pub speed: f64,
    pub events: Vec<TimedEvent>,
}

/// Commands that steer the stepping loop rather than the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlCommand {
    Pause {},
    Resume {},
    SetSpeed { factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandMessage {
    World(WorldCommand),
    Control(ControlCommand),
}

/// Server to client, sent only to the connection whose command failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub error: String,
    pub detail: String,
}

impl ErrorFrame {
    pub fn malformed(detail: impl Into<String>) -> Self {
        Self { error: "malformed_command".into(), detail: detail.into() }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Self { error: "invalid_command".into(), detail: detail.into() }
    }
}

impl CommandMessage {
    /// Parses and validates one text frame.
    pub fn parse(text: &str) -> Result<Self, ErrorFrame> {
        let value: Value = serde_json::from_str(text).map_err(|e| ErrorFrame::malformed(e.to_string()))?;
        let kind = value
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| ErrorFrame::malformed("missing string field \"type\""))?;
        let msg = match kind {
            "pause" | "resume" | "set_speed" => CommandMessage::Control(
                serde_json::from_value(value).map_err(|e| ErrorFrame::malformed(e.to_string()))?,
            ),
            _ => {
                CommandMessage::World(serde_json::from_value(value).map_err(|e| ErrorFrame::malformed(e.to_string()))?)
            }
        };
        match &msg {
            CommandMessage::World(c) => c.validate().map_err(|e| ErrorFrame::invalid(e.to_string()))?,
            CommandMessage::Control(ControlCommand::SetSpeed { factor }) if !(*factor > 0.0 && factor.is_finite()) => {
                return Err(ErrorFrame::invalid(format!("speed factor must be positive, got {factor}")));
            }
            CommandMessage::Control(_) => {}
        }
        Ok(msg)
    }
}

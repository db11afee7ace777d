//! JSON messages exchanged with console clients. One document per
//! WebSocket text message.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::catalog::PhysicalValue;
use crate::cluster::ClusterState;
use crate::frame::CanFrame;
use crate::hex;
use crate::rogue::{AttackRule, RogueStatus};
use crate::testbed::Topology;
use crate::vehicle::VehicleState;
use crate::Micros;

pub const PROTOCOL_VERSION: u32 = 1;

/// Verbs accepted over the network.
pub const WIRE_VERBS: [&str; 10] = [
    "set_speed_override",
    "set_rpm_override",
    "set_airbag_disabled",
    "set_abs_disabled",
    "clear_overrides",
    "set_flood",
    "vehicle_set",
    "sim_pause",
    "sim_resume",
    "set_time_scale",
];

/// Additional verbs available to scenario files only.
pub const SCENARIO_VERBS: [&str; 2] = ["configure_rules", "inject"];

/// Something that changes the running simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    /// `None` removes the override.
    SetSpeedOverride {
        value: Option<f64>,
    },
    SetRpmOverride {
        value: Option<f64>,
    },
    SetAirbagDisabled {
        value: bool,
    },
    SetAbsDisabled {
        value: bool,
    },
    ClearOverrides,
    SetFlood {
        active: bool,
        #[serde(default, with = "hex::opt_id", skip_serializing_if = "Option::is_none")]
        id: Option<u32>,
        #[serde(default, with = "hex::opt_bytes", skip_serializing_if = "Option::is_none")]
        payload: Option<Vec<u8>>,
    },
    /// Sets a vehicle field. The pseudo-field `mode` takes `"manual"` or
    /// `"demo"`.
    VehicleSet {
        field: String,
        value: PhysicalValue,
    },
    SimPause,
    SimResume,
    SetTimeScale {
        value: f64,
    },
    ConfigureRules {
        rules: Vec<AttackRule>,
    },
    /// One frame sent downstream by the rogue device. `counter_offset`
    /// replaces the alive counter with the expected value plus the offset.
    Inject {
        #[serde(with = "hex::id")]
        id: u32,
        #[serde(with = "hex::bytes")]
        payload: Vec<u8>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        counter_offset: Option<u8>,
    },
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Self::SetSpeedOverride { .. } => "set_speed_override",
            Self::SetRpmOverride { .. } => "set_rpm_override",
            Self::SetAirbagDisabled { .. } => "set_airbag_disabled",
            Self::SetAbsDisabled { .. } => "set_abs_disabled",
            Self::ClearOverrides => "clear_overrides",
            Self::SetFlood { .. } => "set_flood",
            Self::VehicleSet { .. } => "vehicle_set",
            Self::SimPause => "sim_pause",
            Self::SimResume => "sim_resume",
            Self::SetTimeScale { .. } => "set_time_scale",
            Self::ConfigureRules { .. } => "configure_rules",
            Self::Inject { .. } => "inject",
        }
    }

    /// The flood frame requested by a `set_flood`, if any part was given.
    pub fn flood_frame(id: Option<u32>, payload: &Option<Vec<u8>>) -> Result<Option<CanFrame>, CommandError> {
        if id.is_none() && payload.is_none() {
            return Ok(None);
        }
        let data = payload.clone().unwrap_or_else(|| vec![0; 8]);
        CanFrame::new(id.unwrap_or(0), &data)
            .map(Some)
            .map_err(|e| CommandError::new(ErrorCode::InvalidArgument, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedVersion,
    UnknownVerb,
    InvalidArgument,
    OutOfRange,
    StaleSeq,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct CommandError {
    pub code: ErrorCode,
    pub message: String,
}

impl CommandError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub seq: u64,
    pub action: Action,
}

/// Parses a client document. On failure the seq is returned when it could
/// be read, so the reply can still be correlated.
pub fn parse_command(text: &str) -> Result<Command, (Option<u64>, CommandError)> {
    let malformed = |seq, msg: &str| (seq, CommandError::new(ErrorCode::Malformed, msg));
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(None, &format!("not JSON: {e}")))?;
    let Value::Object(mut map) = value else {
        return Err(malformed(None, "expected a JSON object"));
    };
    let seq = match map.remove("seq") {
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| malformed(None, "seq must be a non-negative integer"))?,
        Some(_) => return Err(malformed(None, "seq must be a non-negative integer")),
        None => return Err(malformed(None, "missing seq")),
    };
    match map.remove("protocol_version") {
        None => {}
        Some(v) if v.as_u64() == Some(u64::from(PROTOCOL_VERSION)) => {}
        Some(v) => {
            return Err((
                Some(seq),
                CommandError::new(ErrorCode::UnsupportedVersion, format!("protocol_version {v} (server speaks {PROTOCOL_VERSION})")),
            ))
        }
    }
    let verb = match map.get("verb") {
        Some(Value::String(v)) => v.clone(),
        _ => return Err(malformed(Some(seq), "missing verb")),
    };
    if !WIRE_VERBS.contains(&verb.as_str()) {
        return Err((Some(seq), CommandError::new(ErrorCode::UnknownVerb, format!("unknown verb `{verb}`"))));
    }
    let action = parse_action(map).map_err(|e| (Some(seq), e))?;
    Ok(Command { seq, action })
}

/// Parses the verb and arguments of an action object.
pub fn parse_action(map: Map<String, Value>) -> Result<Action, CommandError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| CommandError::new(ErrorCode::InvalidArgument, e.to_string()))
}

/// Server to client messages.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Reply(Reply),
    Telemetry(Box<Telemetry>),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reply {
    pub seq: Option<u64>,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<CommandError>,
}

impl Reply {
    pub fn ack(seq: u64) -> Self {
        Self {
            seq: Some(seq),
            ok: true,
            error: None,
        }
    }

    pub fn error(seq: Option<u64>, error: CommandError) -> Self {
        Self {
            seq,
            ok: false,
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusTelemetry {
    pub bitrate: u32,
    /// Busy fraction over the last second.
    pub upstream_utilization: f64,
    pub downstream_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Telemetry {
    pub protocol_version: u32,
    pub sim_time_us: Micros,
    pub paused: bool,
    pub time_scale: f64,
    pub topology: Topology,
    pub vehicle_mode: &'static str,
    pub vehicle: VehicleState,
    pub cluster: ClusterState,
    pub rogue: Option<RogueStatus>,
    pub bus: BusTelemetry,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(text: &str) -> ErrorCode {
        parse_command(text).unwrap_err().1.code
    }

    #[test]
    fn accepted_commands() {
        let c = parse_command(r#"{"seq":1,"verb":"set_abs_disabled","value":true}"#).unwrap();
        assert_eq!(c, Command { seq: 1, action: Action::SetAbsDisabled { value: true } });
        let c = parse_command(r#"{"protocol_version":1,"seq":2,"verb":"set_flood","active":true,"id":"000"}"#).unwrap();
        assert_eq!(c.action, Action::SetFlood { active: true, id: Some(0), payload: None });
        let c = parse_command(r#"{"seq":3,"verb":"set_speed_override","value":null}"#).unwrap();
        assert_eq!(c.action, Action::SetSpeedOverride { value: None });
        let c = parse_command(r#"{"seq":4,"verb":"vehicle_set","field":"handbrake","value":true}"#).unwrap();
        assert_eq!(c.action, Action::VehicleSet { field: "handbrake".into(), value: true.into() });
        assert_eq!(parse_command(r#"{"seq":5,"verb":"sim_pause"}"#).unwrap().action, Action::SimPause);
    }

    #[test]
    fn error_codes_are_distinct() {
        assert_eq!(code("not json"), ErrorCode::Malformed);
        assert_eq!(code("[1]"), ErrorCode::Malformed);
        assert_eq!(code(r#"{"verb":"sim_pause"}"#), ErrorCode::Malformed);
        assert_eq!(code(r#"{"seq":-1,"verb":"sim_pause"}"#), ErrorCode::Malformed);
        assert_eq!(code(r#"{"seq":1,"verb":"self_destruct"}"#), ErrorCode::UnknownVerb);
        assert_eq!(code(r#"{"seq":1,"verb":"inject","id":"0C0","payload":"00"}"#), ErrorCode::UnknownVerb);
        assert_eq!(code(r#"{"seq":1,"verb":"set_abs_disabled","value":"yes"}"#), ErrorCode::InvalidArgument);
        assert_eq!(code(r#"{"seq":1,"verb":"set_abs_disabled","value":true,"x":1}"#), ErrorCode::InvalidArgument);
        assert_eq!(code(r#"{"protocol_version":9,"seq":1,"verb":"sim_pause"}"#), ErrorCode::UnsupportedVersion);
        assert_eq!(parse_command(r#"{"seq":7,"verb":"nope"}"#).unwrap_err().0, Some(7));
    }

    #[test]
    fn reply_shape() {
        let ok = ServerMessage::Reply(Reply::ack(3)).to_json();
        assert_eq!(ok, r#"{"type":"reply","seq":3,"ok":true}"#);
        let err = ServerMessage::Reply(Reply::error(None, CommandError::new(ErrorCode::Malformed, "x"))).to_json();
        assert_eq!(err, r#"{"type":"reply","seq":null,"ok":false,"error":{"code":"malformed","message":"x"}}"#);
    }
}

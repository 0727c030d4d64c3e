//! Newline-delimited JSON messages exchanged with teleoperation clients.
//!
//! Every message is one JSON object on one line, tagged by its `type` field.
//! Fields not named here are ignored on decode, so newer clients can talk to
//! older servers. Decoding is purely syntactic: [`decode`] does not normalize
//! quaternions or check vector lengths, which keeps `decode(encode(m)) == m`.

use std::fmt;

use compliant_core::geometry::GeometryError;
use compliant_core::Pose;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Every value of the `type` field, in protocol order.
pub const MESSAGE_TYPES: [&str; 7] = [
    "state",
    "target_pose",
    "target_joint",
    "target_wrench",
    "set_params",
    "params_reply",
    "error",
];

/// Position in meters and orientation as a `(w, x, y, z)` quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub pos: [f64; 3],
    pub quat: [f64; 4],
}

impl WirePose {
    /// The quaternion is normalized; a zero or non-finite one is rejected.
    pub fn to_pose(&self) -> Result<Pose, GeometryError> {
        Pose::from_wire(self.pos, self.quat)
    }
}

impl From<&Pose> for WirePose {
    fn from(p: &Pose) -> Self {
        Self {
            pos: p.position.into(),
            quat: p.rotation.to_wxyz(),
        }
    }
}

/// Robot state as broadcast by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    /// Simulation time of the snapshot.
    pub t: f64,
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    pub ee_pose: WirePose,
    /// Error to the most recent pose target, base frame.
    pub e_pos: [f64; 3],
    pub e_rot: [f64; 3],
    /// Last commanded torque.
    pub tau: Vec<f64>,
    /// Wrench the tip exerts on the environment, as measured.
    pub wrench: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamStatus {
    Applied,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamResult {
    pub key: String,
    pub status: ParamStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not JSON, not an object, or a field has the wrong shape.
    MalformedMessage,
    /// The `type` field names no known message.
    UnknownType,
    /// A well-formed message the server does not accept from clients.
    UnexpectedType,
    /// A well-formed command whose content is invalid for the robot.
    InvalidCommand,
    /// The simulation stopped; no further state will be sent.
    SimFault,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    State(StateMessage),
    TargetPose {
        pose: WirePose,
        stamp: f64,
    },
    TargetJoint {
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dq: Option<Vec<f64>>,
        stamp: f64,
    },
    TargetWrench {
        wrench: [f64; 6],
        stamp: f64,
    },
    /// Runtime parameter updates, keyed like the parameter file.
    SetParams {
        params: Map<String, Value>,
        stamp: f64,
    },
    /// One result per key of the `set_params` being answered.
    ParamsReply {
        results: Vec<ParamResult>,
    },
    Error {
        code: ErrorCode,
        message: String,
        /// Byte offset into the offending line, for decode failures.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<usize>,
    },
}

impl Message {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Message::Error {
            code,
            message: message.into(),
            offset: None,
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::State(_) => "state",
            Message::TargetPose { .. } => "target_pose",
            Message::TargetJoint { .. } => "target_joint",
            Message::TargetWrench { .. } => "target_wrench",
            Message::SetParams { .. } => "set_params",
            Message::ParamsReply { .. } => "params_reply",
            Message::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("malformed message at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("unknown message type `{0}`")]
    UnknownType(String),
}

impl DecodeError {
    /// The reply a server sends for this failure.
    pub fn to_reply(&self) -> Message {
        match self {
            DecodeError::Malformed { offset, reason } => Message::Error {
                code: ErrorCode::MalformedMessage,
                message: reason.clone(),
                offset: Some(*offset),
            },
            DecodeError::UnknownType(_) => Message::error(ErrorCode::UnknownType, self.to_string()),
        }
    }
}

/// One line, including the trailing newline.
pub fn encode(msg: &Message) -> String {
    let mut line = serde_json::to_string(msg).expect("messages serialize to JSON");
    line.push('\n');
    line
}

/// Decodes one line; a trailing `\n` or `\r\n` is allowed.
pub fn decode(line: &str) -> Result<Message, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    serde_json::from_str::<Message>(line).map_err(|e| classify(line, &e))
}

fn classify(line: &str, err: &serde_json::Error) -> DecodeError {
    // a line that is a JSON object with a string `type` failed on content only
    if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(line) {
        if let Some(Value::String(t)) = obj.get("type") {
            if !MESSAGE_TYPES.contains(&t.as_str()) {
                return DecodeError::UnknownType(t.clone());
            }
        }
    }
    DecodeError::Malformed {
        offset: byte_offset(line, err),
        reason: Reason(err).to_string(),
    }
}

/// serde_json reports 1-based line and column; lines never contain a newline here.
/// Field-shape errors in a tagged message carry no position and map to offset 0.
fn byte_offset(line: &str, err: &serde_json::Error) -> usize {
    err.column().saturating_sub(1).min(line.len())
}

/// The error text without serde_json's position suffix, which the offset replaces.
struct Reason<'a>(&'a serde_json::Error);

impl fmt::Display for Reason<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let full = self.0.to_string();
        match full.rfind(" at line ") {
            Some(i) => f.write_str(&full[..i]),
            None => f.write_str(&full),
        }
    }
}

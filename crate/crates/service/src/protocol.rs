//! Wire format: one JSON text frame per message, discriminated by `type` and
//! stamped with `session_time`. Mesh arrays travel as base64 of little-endian
//! 32-bit values.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use relicdig_core::catalog::{SessionParams, ToolSpec};
use relicdig_core::voxel::GridParams;
use relicdig_core::{Event, MeshChunk, Pose, SessionStatus};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ClientMessage {
    CreateSession {
        relic_name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<SessionParams>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// `t` is the client's own clock; the server stamps strokes on receipt.
    ApplyStroke {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t: Option<f64>,
        pose: Pose,
    },
    SelectTool {
        name: String,
    },
    SubscribeMesh,
    Ping {
        t: f64,
    },
}

/// A mesh chunk with base64 payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireChunk {
    pub chunk_coord: [usize; 3],
    pub version: u64,
    pub vertices: String,
    pub normals: String,
    pub indices: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ServerMessage {
    SessionCreated {
        session_id: String,
        relic_name: String,
        artifact_mesh: Vec<WireChunk>,
        grid_params: GridParams,
        tools: Vec<ToolSpec>,
        session_params: SessionParams,
    },
    MeshDelta {
        chunks: Vec<WireChunk>,
    },
    Event {
        event: Event,
    },
    State {
        status: SessionStatus,
        health: u32,
        max_health: u32,
        clock_remaining: f64,
        exposure: f64,
        active_tool: String,
    },
    Error {
        code: String,
        message: String,
    },
    Pong {
        t: f64,
    },
}

impl ServerMessage {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// A decoded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<M> {
    pub session_time: f64,
    pub message: M,
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame is not a JSON object: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame must be a JSON object")]
    NotObject,
    #[error("frame has no numeric session_time")]
    SessionTime,
    #[error("bad mesh payload: {0}")]
    Mesh(String),
}

pub fn encode<M: Serialize>(session_time: f64, message: &M) -> String {
    let mut value = serde_json::to_value(message).expect("messages serialize");
    let map = value.as_object_mut().expect("messages are tagged objects");
    // serde_json maps sort their keys, so the header is written by hand
    let tag = map.remove("type").expect("messages are tagged");
    let mut out = format!(r#"{{"type":{tag},"session_time":{}"#, Value::from(session_time));
    for (k, v) in map.iter() {
        out.push(',');
        out.push_str(&Value::from(k.as_str()).to_string());
        out.push(':');
        out.push_str(&v.to_string());
    }
    out.push('}');
    out
}

pub fn decode<M: DeserializeOwned>(text: &str) -> Result<Frame<M>, FrameError> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(mut map) = value else {
        return Err(FrameError::NotObject);
    };
    let session_time = map
        .remove("session_time")
        .and_then(|v| v.as_f64())
        .ok_or(FrameError::SessionTime)?;
    let message = serde_json::from_value(Value::Object(map))?;
    Ok(Frame {
        session_time,
        message,
    })
}

fn pack<T: Copy, const N: usize>(values: &[T], bytes: impl Fn(T) -> [u8; N]) -> String {
    let mut buf = Vec::with_capacity(values.len() * N);
    for v in values {
        buf.extend_from_slice(&bytes(*v));
    }
    B64.encode(buf)
}

fn unpack<T, const N: usize>(text: &str, from: impl Fn([u8; N]) -> T) -> Result<Vec<T>, FrameError> {
    let buf = B64
        .decode(text)
        .map_err(|e| FrameError::Mesh(e.to_string()))?;
    if buf.len() % N != 0 {
        return Err(FrameError::Mesh(format!(
            "{} bytes is not a whole number of {N}-byte values",
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(N)
        .map(|c| from(c.try_into().expect("exact chunk")))
        .collect())
}

impl From<&MeshChunk> for WireChunk {
    fn from(m: &MeshChunk) -> Self {
        let flat = |v: &[[f32; 3]]| -> Vec<f32> { v.iter().flatten().copied().collect() };
        WireChunk {
            chunk_coord: m.chunk_coord,
            version: m.version,
            vertices: pack(&flat(&m.vertices), f32::to_le_bytes),
            normals: pack(&flat(&m.normals), f32::to_le_bytes),
            indices: pack(&m.indices, u32::to_le_bytes),
        }
    }
}

impl TryFrom<&WireChunk> for MeshChunk {
    type Error = FrameError;

    fn try_from(w: &WireChunk) -> Result<Self, FrameError> {
        let triples = |text: &str, what: &str| -> Result<Vec<[f32; 3]>, FrameError> {
            let flat = unpack(text, f32::from_le_bytes)?;
            if flat.len() % 3 != 0 {
                return Err(FrameError::Mesh(format!("{what} length {} is not xyz", flat.len())));
            }
            Ok(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        };
        let vertices = triples(&w.vertices, "vertices")?;
        let normals = triples(&w.normals, "normals")?;
        let indices = unpack(&w.indices, u32::from_le_bytes)?;
        if normals.len() != vertices.len() {
            return Err(FrameError::Mesh("normal and vertex counts differ".into()));
        }
        if indices.len() % 3 != 0 || indices.iter().any(|&i| i as usize >= vertices.len()) {
            return Err(FrameError::Mesh("indices do not form triangles".into()));
        }
        Ok(MeshChunk {
            chunk_coord: w.chunk_coord,
            version: w.version,
            vertices,
            normals,
            indices,
        })
    }
}

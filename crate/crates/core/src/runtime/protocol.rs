//! Wire protocol between the simulation server and an operator console.
//!
//! Every message is a JSON object preceded by its byte length as a 4-byte
//! big-endian unsigned integer. Both directions tag messages with `type`.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::record::{CandidateSummary, RleMask, Telemetry};
use crate::attention::GazeSample;
use crate::control::ControlParams;
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_MESSAGE_BYTES: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello { schema_version: u32 },
    Gaze { samples: Vec<GazeSample> },
    Command { command: Command },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Command {
    Start,
    Pause,
    Reset,
    ToggleCorrection,
    SetParams { control: ControlParams },
    /// Replace the running scenario with a TOML document.
    LoadScenario { toml: String },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Start => "start",
            Command::Pause => "pause",
            Command::Reset => "reset",
            Command::ToggleCorrection => "toggle_correction",
            Command::SetParams { .. } => "set_params",
            Command::LoadScenario { .. } => "load_scenario",
        }
    }
}

/// One published tick. Images are base64 PNG, 8-bit grayscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub running: bool,
    pub telemetry: Telemetry,
    pub frame_png: String,
    pub attention_png: String,
    pub confidence_png: String,
    pub candidates: Vec<CandidateSummary>,
    pub selected: Option<usize>,
    pub selected_mask: Option<RleMask>,
    /// Gaze samples discarded because they arrived while paused.
    pub dropped_gaze: u64,
    /// Gaze samples discarded because they were more than one tick old.
    pub late_gaze: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        schema_version: u32,
        scenario: String,
        tick_rate_hz: f64,
        width_px: usize,
        depth_px: usize,
        pixel_pitch: f64,
    },
    State(Box<StateMessage>),
    Ack { command: String, tick: u64 },
    Error { message: String },
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_MESSAGE_BYTES {
        return Err(Error::Domain(format!("message of {} bytes is too large", payload.len())));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_MESSAGE_BYTES {
        return Err(Error::Corrupt(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(Some(buf))
}

pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    serde_json::to_vec(msg).expect("protocol messages serialize")
}

pub fn decode<T: DeserializeOwned>(payload: &[u8]) -> Result<T> {
    serde_json::from_slice(payload).map_err(|e| Error::Parse(format!("message: {e}")))
}

pub fn send<W: Write, T: Serialize>(w: &mut W, msg: &T) -> Result<()> {
    write_frame(w, &encode(msg))
}

pub fn recv<R: Read, T: DeserializeOwned>(r: &mut R) -> Result<Option<T>> {
    read_frame(r)?.map(|b| decode(&b)).transpose()
}

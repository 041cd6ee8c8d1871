//! Producer packets and push-channel events.

use std::collections::BTreeMap;

use gazelab::ingest::gaze_from_fields;
use gazelab::model::GazeSample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One gaze packet, sent by the producer as a single JSON line.
///
/// Every field must be present; `pupil_mm` and `eyelid` may be `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePacket {
    pub t_ms: u64,
    pub ox: f64,
    pub oy: f64,
    pub oz: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    #[serde(deserialize_with = "Option::deserialize")]
    pub pupil_mm: Option<f64>,
    #[serde(deserialize_with = "Option::deserialize")]
    pub eyelid: Option<f64>,
    pub q: f64,
}

#[derive(Debug, Error)]
pub enum PacketError {
    #[error("not a valid packet: {0}")]
    Json(#[from] serde_json::Error),
    #[error("gaze direction is not a finite non-zero vector")]
    BadDirection,
    #[error("non-finite value")]
    NonFinite,
}

impl WirePacket {
    pub fn from_sample(s: &GazeSample) -> Self {
        Self {
            t_ms: s.t_ms,
            ox: s.origin[0],
            oy: s.origin[1],
            oz: s.origin[2],
            dx: s.dir[0],
            dy: s.dir[1],
            dz: s.dir[2],
            pupil_mm: s.pupil_mm,
            eyelid: s.eyelid_open,
            q: s.quality,
        }
    }

    /// JSON text with a trailing newline.
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("packet serializes");
        s.push('\n');
        s
    }

    /// Validates the packet with the same rules as the CSV reader.
    pub fn into_sample(self, quality_floor: f64) -> Result<GazeSample, PacketError> {
        let origin = [self.ox, self.oy, self.oz];
        if origin.iter().any(|v| !v.is_finite()) || !self.q.is_finite() {
            return Err(PacketError::NonFinite);
        }
        gaze_from_fields(
            self.t_ms,
            origin,
            [self.dx, self.dy, self.dz],
            self.pupil_mm.filter(|p| p.is_finite()),
            self.eyelid.filter(|e| e.is_finite()),
            self.q,
            quality_floor,
        )
        .ok_or(PacketError::BadDirection)
    }
}

pub fn parse_packet(line: &str, quality_floor: f64) -> Result<GazeSample, PacketError> {
    serde_json::from_str::<WirePacket>(line)?.into_sample(quality_floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Running,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub received: u64,
    pub dropped: u64,
    pub classified_oth: u64,
    pub recorded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeEvent {
    pub t_ms: u64,
    pub aoi: String,
    pub surface: Option<String>,
    pub uv: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    pub lf_mean: f64,
    pub hf_mean: f64,
    pub ratio: f64,
}

/// Rolling analytics for the second ending at `t_ms` (exclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFrame {
    pub t_ms: u64,
    pub window_start_ms: u64,
    pub median_pupil_mm: Option<f64>,
    pub aoi: Option<String>,
    pub pdt: BTreeMap<String, f64>,
    pub lf_hf: Option<BandPower>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub t_ms: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub session_id: Option<String>,
    pub status: SessionStatus,
    /// Wall-clock start, milliseconds since the Unix epoch.
    pub t_start_unix_ms: Option<u64>,
    pub counters: Counters,
    pub observed_rate_hz: Option<f64>,
    pub producer_connected: bool,
    pub annotations: usize,
    pub error: Option<String>,
}

/// Event on the push channel, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PushEvent {
    Gaze(GazeEvent),
    Metrics(MetricsFrame),
    Annotation(Annotation),
    Status(StatusSnapshot),
}

impl PushEvent {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

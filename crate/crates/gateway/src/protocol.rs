//! Wire messages. Every message is a JSON object with a `type` tag; see
//! `PROTOCOL.md` for the full schema with examples.

use dband_core::Activity;
use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Scene command sent by a client. Applied at the next frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    SetActivity {
        activity: Activity,
    },
    SetRange {
        range_m: f64,
    },
    /// Signed radial walking speed, positive = receding.
    SetSpeed {
        speed_mps: f64,
    },
    SetSnr {
        snr_db: f64,
    },
    Pause,
    Resume,
}

/// Limits on control values, announced in the metadata message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub range_min_m: f64,
    pub range_max_m: f64,
    pub speed_max_mps: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            range_min_m: 1.0,
            range_max_m: 10.0,
            speed_max_mps: 1.5,
            snr_min_db: -20.0,
            snr_max_db: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field} = {value} is outside [{min}, {max}]")]
pub struct ControlError {
    pub field: &'static str,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl ControlBounds {
    pub fn check(&self, control: &ControlMessage) -> Result<(), ControlError> {
        let within = |field, value: f64, min: f64, max: f64| {
            if value.is_finite() && (min..=max).contains(&value) {
                Ok(())
            } else {
                Err(ControlError {
                    field,
                    value,
                    min,
                    max,
                })
            }
        };
        match *control {
            ControlMessage::SetRange { range_m } => {
                within("range_m", range_m, self.range_min_m, self.range_max_m)
            }
            ControlMessage::SetSpeed { speed_mps } => within(
                "speed_mps",
                speed_mps,
                -self.speed_max_mps,
                self.speed_max_mps,
            ),
            ControlMessage::SetSnr { snr_db } => {
                within("snr_db", snr_db, self.snr_min_db, self.snr_max_db)
            }
            ControlMessage::SetActivity { .. } | ControlMessage::Pause | ControlMessage::Resume => {
                Ok(())
            }
        }
    }
}

/// Commanded scene parameters in effect for a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub activity: Activity,
    /// Torso range at the frame center (the commanded range when not walking).
    pub range_m: f64,
    pub speed_mps: f64,
    pub snr_db: f64,
}

impl Default for SceneState {
    fn default() -> Self {
        Self {
            activity: Activity::Standing,
            range_m: 3.0,
            speed_mps: 0.5,
            snr_db: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    /// Coordinate of the first source bin of cell 0.
    pub start: f64,
    /// Coordinate step between adjacent thumbnail cells.
    pub step: f64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailSpec {
    pub rows: usize,
    pub cols: usize,
    pub row_decimation: usize,
    pub col_decimation: usize,
    /// dB mapped to code 0.
    pub db_min: f64,
    /// dB mapped to code 255.
    pub db_max: f64,
    pub encoding: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub noise_floor_db: f64,
    pub upper_db: f64,
    pub lower_db: f64,
    pub drift_threshold_m: f64,
    pub wave_enter_mps: f64,
    pub wave_exit_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub protocol_version: u32,
    pub precision: String,
    pub frame_period_s: f64,
    pub heartbeat_period_s: f64,
    pub range_bin_m: f64,
    pub velocity_bin_mps: f64,
    pub max_velocity_mps: f64,
    /// Thumbnail columns.
    pub range_axis: Axis,
    /// Thumbnail rows.
    pub velocity_axis: Axis,
    pub thumbnail: ThumbnailSpec,
    pub thresholds: Thresholds,
    pub controls: ControlBounds,
    pub activities: Vec<Activity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackInfo {
    pub range_m: f64,
    pub velocity_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdThumbnail {
    pub rows: usize,
    pub cols: usize,
    /// Base64 of `rows × cols` bytes, row-major.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMessage {
    pub frame_index: u64,
    pub frame_time: f64,
    pub detected: bool,
    pub power_db: f64,
    pub track: Option<TrackInfo>,
    pub state: Activity,
    pub v_md: f64,
    pub drift: f64,
    pub ground_truth: Option<Activity>,
    pub compute_time: f64,
    /// Sequence number of the last control applied before this frame.
    pub applied_seq: u64,
    pub scene: SceneState,
    pub rd_thumbnail: RdThumbnail,
}

/// Any message sent by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Metadata(Metadata),
    Frame(FrameMessage),
    /// A control was validated and queued as number `seq`.
    Ack {
        seq: u64,
        control: ControlMessage,
    },
    Heartbeat {
        server_time_s: f64,
        last_frame_index: Option<u64>,
        clients: usize,
    },
    Error {
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

//! Scripted scenes: a human target following timed activity segments, plus
//! static clutter. The script is the ground truth for the classifier.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::activity::Activity;
use crate::error::{Error, Result};
use crate::params::DerivedParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub start_time: f64,
    /// End of the segment. Defaults to the next segment's start (or the end of
    /// the script); a gap before the next segment is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_time: Option<f64>,
    pub activity: Activity,
    /// Torso range at `start_time`, in meters. Ignored for `absent`.
    #[serde(default)]
    pub start_range: f64,
    /// Signed radial speed while walking (positive = receding), in m/s.
    #[serde(default)]
    pub walk_speed: f64,
    #[serde(default = "default_wave_amplitude")]
    pub wave_amplitude: f64,
    #[serde(default = "default_wave_frequency")]
    pub wave_frequency: f64,
}

fn default_wave_amplitude() -> f64 {
    0.15
}

fn default_wave_frequency() -> f64 {
    1.5
}

impl Segment {
    pub fn new(start_time: f64, activity: Activity, start_range: f64) -> Self {
        Self {
            start_time,
            end_time: None,
            activity,
            start_range,
            walk_speed: 0.0,
            wave_amplitude: default_wave_amplitude(),
            wave_frequency: default_wave_frequency(),
        }
    }

    pub fn walking(start_time: f64, start_range: f64, walk_speed: f64) -> Self {
        Self {
            walk_speed,
            ..Self::new(start_time, Activity::Walking, start_range)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSpec {
    pub range: f64,
    pub amplitude: f64,
}

/// Point-scatterer body model shared by all segments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanModel {
    pub torso_amplitude: f64,
    /// Limb amplitude as a fraction of the torso amplitude.
    pub limb_ratio: f64,
    /// Torso sway while standing or waving, in meters.
    pub sway_amplitude: f64,
    pub sway_frequency: f64,
    /// Scale amplitudes by `(reference_range / range)²`.
    pub range_falloff: bool,
    pub falloff_reference_range: f64,
}

impl Default for HumanModel {
    fn default() -> Self {
        Self {
            torso_amplitude: 1.0,
            limb_ratio: 0.25,
            sway_amplitude: 0.005,
            sway_frequency: 0.3,
            range_falloff: false,
            falloff_reference_range: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    /// Total scene length in seconds.
    pub duration: f64,
    /// Per-sample SNR of a unit-amplitude scatterer, dB. `null` disables noise.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clutter: Vec<ClutterSpec>,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub human: HumanModel,
}

/// Point scatterer at one instant (stop-and-hop: constant within a pulse).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererState {
    pub range: f64,
    pub radial_velocity: f64,
    pub amplitude: f64,
}

impl ScenarioScript {
    /// The segment covering `t`, if any.
    pub fn segment_at(&self, t: f64) -> Option<(usize, &Segment)> {
        let idx = self.segments.iter().rposition(|s| s.start_time <= t)?;
        let seg = &self.segments[idx];
        let end = self.segment_end(idx);
        (t < end).then_some((idx, seg))
    }

    /// Effective end time of segment `idx`.
    pub fn segment_end(&self, idx: usize) -> f64 {
        let seg = &self.segments[idx];
        seg.end_time.unwrap_or_else(|| {
            self.segments
                .get(idx + 1)
                .map(|next| next.start_time)
                .unwrap_or(f64::INFINITY)
        })
    }

    /// Ground-truth activity at `t`. Times outside every segment are absent.
    pub fn activity_at(&self, t: f64) -> Activity {
        self.segment_at(t)
            .map(|(_, s)| s.activity)
            .unwrap_or(Activity::Absent)
    }

    /// Times at which the ground-truth activity changes, excluding `t = 0`.
    pub fn transition_times(&self) -> Vec<f64> {
        let mut times = Vec::new();
        let mut prev = self.activity_at(0.0);
        let mut candidates: Vec<f64> = self
            .segments
            .iter()
            .enumerate()
            .flat_map(|(i, s)| [s.start_time, self.segment_end(i)])
            .filter(|t| t.is_finite() && *t > 0.0 && *t < self.duration)
            .collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        for t in candidates {
            let now = self.activity_at(t);
            if now != prev {
                times.push(t);
                prev = now;
            }
        }
        times
    }

    /// Torso scatterer at `t`, if a target is present.
    pub fn torso_at(&self, t: f64) -> Option<ScattererState> {
        let (_, seg) = self.segment_at(t)?;
        let elapsed = t - seg.start_time;
        let h = &self.human;
        let (range, radial_velocity) = match seg.activity {
            Activity::Absent => return None,
            Activity::Walking => (seg.start_range + seg.walk_speed * elapsed, seg.walk_speed),
            Activity::Standing | Activity::Waving => {
                let w = TAU * h.sway_frequency;
                (
                    seg.start_range + h.sway_amplitude * (w * elapsed).sin(),
                    h.sway_amplitude * w * (w * elapsed).cos(),
                )
            }
        };
        Some(ScattererState {
            range,
            radial_velocity,
            amplitude: self.scaled_amplitude(h.torso_amplitude, range),
        })
    }

    fn scaled_amplitude(&self, amplitude: f64, range: f64) -> f64 {
        let h = &self.human;
        if h.range_falloff && range > 0.0 {
            amplitude * (h.falloff_reference_range / range).powi(2)
        } else {
            amplitude
        }
    }

    /// All scatterers at time `t`: human scatterers first, then clutter.
    pub fn scatterers_at(&self, t: f64) -> Vec<ScattererState> {
        let mut out = Vec::with_capacity(2 + self.clutter.len());
        if let Some(torso) = self.torso_at(t) {
            out.push(torso);
            if let Some((_, seg)) = self.segment_at(t) {
                if seg.activity == Activity::Waving {
                    let elapsed = t - seg.start_time;
                    let w = TAU * seg.wave_frequency;
                    let range = torso.range + seg.wave_amplitude * (w * elapsed).sin();
                    let limb = self.human.torso_amplitude * self.human.limb_ratio;
                    out.push(ScattererState {
                        range,
                        radial_velocity: torso.radial_velocity
                            + seg.wave_amplitude * w * (w * elapsed).cos(),
                        amplitude: self.scaled_amplitude(limb, range),
                    });
                }
            }
        }
        out.extend(self.clutter.iter().map(|c| ScattererState {
            range: c.range,
            radial_velocity: 0.0,
            amplitude: c.amplitude,
        }));
        out
    }

    /// Check every scene invariant against the radar's ambiguity limits.
    pub fn validate(&self, params: &DerivedParams) -> Result<()> {
        let r_max = params.max_unambiguous_range;
        let v_max = params.max_unambiguous_velocity;
        let in_range = |r: f64| r.is_finite() && r > 0.0 && r < r_max;

        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::scenario("duration", "must be positive"));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::scenario("snr_db", "must be finite or null"));
            }
        }
        let h = &self.human;
        if !(h.torso_amplitude >= 0.0 && h.limb_ratio >= 0.0) {
            return Err(Error::scenario("human", "amplitudes must be non-negative"));
        }
        if !(h.sway_amplitude >= 0.0 && h.sway_frequency >= 0.0) {
            return Err(Error::scenario(
                "human",
                "sway parameters must be non-negative",
            ));
        }
        if TAU * h.sway_frequency * h.sway_amplitude >= v_max {
            return Err(Error::scenario(
                "human.sway_amplitude",
                format!("peak sway speed exceeds the {v_max:.4} m/s ambiguity limit"),
            ));
        }
        if h.range_falloff && !(h.falloff_reference_range > 0.0) {
            return Err(Error::scenario(
                "human.falloff_reference_range",
                "must be positive",
            ));
        }
        for (i, c) in self.clutter.iter().enumerate() {
            if !in_range(c.range) {
                return Err(Error::scenario(
                    format!("clutter[{i}].range"),
                    format!("{} m is outside (0, {r_max:.3}) m", c.range),
                ));
            }
            if !(c.amplitude.is_finite() && c.amplitude >= 0.0) {
                return Err(Error::scenario(
                    format!("clutter[{i}].amplitude"),
                    "must be non-negative",
                ));
            }
        }

        for (i, seg) in self.segments.iter().enumerate() {
            let at = |field: &str| format!("segments[{i}].{field}");
            if !(seg.start_time.is_finite() && seg.start_time >= 0.0) {
                return Err(Error::scenario(at("start_time"), "must be non-negative"));
            }
            if let Some(prev) = i.checked_sub(1).map(|j| &self.segments[j]) {
                if seg.start_time <= prev.start_time {
                    return Err(Error::scenario(
                        format!("segments[{}] and segments[{i}]", i - 1),
                        "segments overlap: start times must be strictly increasing",
                    ));
                }
                if let Some(end) = prev.end_time {
                    if end > seg.start_time {
                        return Err(Error::scenario(
                            format!("segments[{}] and segments[{i}]", i - 1),
                            format!(
                                "segments overlap: end_time {end} is after the next start_time {}",
                                seg.start_time
                            ),
                        ));
                    }
                }
            }
            if let Some(end) = seg.end_time {
                if !(end > seg.start_time) {
                    return Err(Error::scenario(at("end_time"), "must be after start_time"));
                }
            }
            if seg.activity == Activity::Absent {
                continue;
            }
            if !in_range(seg.start_range) {
                return Err(Error::scenario(
                    at("start_range"),
                    format!("{} m is outside (0, {r_max:.3}) m", seg.start_range),
                ));
            }
            match seg.activity {
                Activity::Walking => {
                    if !(seg.walk_speed.abs() < v_max) {
                        return Err(Error::scenario(
                            at("walk_speed"),
                            format!(
                                "|{}| m/s exceeds the maximum unambiguous velocity {v_max:.4} m/s",
                                seg.walk_speed
                            ),
                        ));
                    }
                    let end = self.segment_end(i).min(self.duration);
                    let final_range = seg.start_range + seg.walk_speed * (end - seg.start_time);
                    if end > seg.start_time && !in_range(final_range) {
                        return Err(Error::scenario(
                            at("walk_speed"),
                            format!("target leaves (0, {r_max:.3}) m, reaching {final_range:.3} m"),
                        ));
                    }
                }
                Activity::Waving => {
                    if !(seg.wave_amplitude >= 0.0 && seg.wave_frequency >= 0.0) {
                        return Err(Error::scenario(
                            at("wave_amplitude"),
                            "wave amplitude and frequency must be non-negative",
                        ));
                    }
                    let peak = TAU * seg.wave_frequency * seg.wave_amplitude
                        + TAU * h.sway_frequency * h.sway_amplitude;
                    if peak >= v_max {
                        return Err(Error::scenario(
                            at("wave_frequency"),
                            format!(
                                "peak limb speed {peak:.4} m/s exceeds the maximum unambiguous velocity {v_max:.4} m/s"
                            ),
                        ));
                    }
                    let reach = seg.wave_amplitude + h.sway_amplitude;
                    if !in_range(seg.start_range - reach) || !in_range(seg.start_range + reach) {
                        return Err(Error::scenario(
                            at("wave_amplitude"),
                            "limb leaves the unambiguous range",
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Parse and validate a scenario from JSON text.
    pub fn from_json(text: &str, params: &DerivedParams) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let script: ScenarioScript = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::scenario(
                if path == "." {
                    "document".to_string()
                } else {
                    path
                },
                format!(
                    "{} (line {}, column {})",
                    strip_position(&inner.to_string()),
                    inner.line(),
                    inner.column()
                ),
            )
        })?;
        script.validate(params)?;
        Ok(script)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// serde_json appends " at line L column C"; the position is re-added explicitly.
fn strip_position(message: &str) -> &str {
    message
        .rfind(" at line ")
        .map(|i| &message[..i])
        .unwrap_or(message)
}

pub fn load_scenario(path: impl AsRef<Path>, params: &DerivedParams) -> Result<ScenarioScript> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ScenarioScript::from_json(&text, params).map_err(|e| match e {
        Error::Scenario { location, message } => Error::Scenario {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn save_scenario(script: &ScenarioScript, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, script.to_json()? + "\n")?;
    Ok(())
}

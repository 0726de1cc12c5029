//! Micro-Doppler feature: the largest absolute velocity carrying significant
//! power near the tracked target, smoothed over a short time window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rd::RangeDopplerMap;
use crate::scalar::Real;
use crate::track::TargetTrack;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Threshold is relative to the strongest ROI cell.
    Relative,
    /// Threshold is an absolute map level in dB.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiSpec {
    /// Range bins on each side of the track.
    pub range_halfwidth: usize,
    pub threshold_db: f64,
    pub mode: ThresholdMode,
    pub zero_doppler_guard: usize,
    /// Moving-average length in seconds.
    pub smoothing_window_s: f64,
    /// In the pipeline, cells must also clear the detector's release threshold.
    pub noise_gate: bool,
}

impl Default for RoiSpec {
    fn default() -> Self {
        Self {
            range_halfwidth: 8,
            threshold_db: -15.0,
            mode: ThresholdMode::Relative,
            zero_doppler_guard: 3,
            smoothing_window_s: 0.5,
            noise_gate: true,
        }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<()> {
        if self.range_halfwidth < 1 {
            return Err(Error::Config(
                "ROI half-width must be at least 1 bin".into(),
            ));
        }
        if self.mode == ThresholdMode::Relative && !(self.threshold_db < 0.0) {
            return Err(Error::Config(format!(
                "relative ROI threshold must be negative, got {} dB",
                self.threshold_db
            )));
        }
        if !(self.smoothing_window_s > 0.0) {
            return Err(Error::Config("smoothing window must be positive".into()));
        }
        Ok(())
    }
}

/// Maximum `|velocity|` over ROI cells whose power clears the threshold.
///
/// The ROI spans `range_halfwidth` bins around the track's range bin (clipped to
/// the map) and the full Doppler axis except the zero-Doppler guard rows.
/// Returns 0 when no cell qualifies.
pub fn microdoppler_velocity<T: Real>(
    map: &RangeDopplerMap<T>,
    track: &TargetTrack,
    roi: &RoiSpec,
) -> Result<f64> {
    microdoppler_velocity_at(map, track.range(), roi)
}

/// As [`microdoppler_velocity`], centered on an explicit range in meters.
pub fn microdoppler_velocity_at<T: Real>(
    map: &RangeDopplerMap<T>,
    range_m: f64,
    roi: &RoiSpec,
) -> Result<f64> {
    microdoppler_velocity_gated(map, range_m, roi, f64::NEG_INFINITY)
}

/// As [`microdoppler_velocity_at`], but cells must also exceed `min_power_db`.
/// With a weak ROI peak the relative threshold alone would admit noise cells.
pub fn microdoppler_velocity_gated<T: Real>(
    map: &RangeDopplerMap<T>,
    range_m: f64,
    roi: &RoiSpec,
    min_power_db: f64,
) -> Result<f64> {
    roi.validate()?;
    if !range_m.is_finite() {
        return Err(Error::EmptyRoi);
    }
    let center = (range_m / map.range_step).round().max(0.0) as usize;
    let lo = center.saturating_sub(roi.range_halfwidth);
    let hi = (center + roi.range_halfwidth + 1).min(map.range_bins());
    let zero = map.zero_doppler_row();
    let rows = map.doppler_bins();
    if lo >= hi || 2 * roi.zero_doppler_guard + 1 >= rows {
        return Err(Error::EmptyRoi);
    }
    let eligible = |d: usize| d.abs_diff(zero) > roi.zero_doppler_guard;

    let threshold = match roi.mode {
        ThresholdMode::Absolute => roi.threshold_db,
        ThresholdMode::Relative => {
            let peak = (lo..hi)
                .flat_map(|r| {
                    map.column(r)
                        .iter()
                        .enumerate()
                        .filter(|(d, _)| eligible(*d))
                        .map(|(_, v)| v.to_real())
                })
                .fold(f64::NEG_INFINITY, f64::max);
            peak + roi.threshold_db
        }
    }
    .max(min_power_db);

    let mut v_max = 0.0f64;
    for r in lo..hi {
        for (d, v) in map.column(r).iter().enumerate() {
            if eligible(d) && v.to_real() > threshold {
                v_max = v_max.max(map.velocity_of(d).abs());
            }
        }
    }
    Ok(v_max)
}

/// Moving average over the last `window` seconds of micro-Doppler samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroDopplerTrace {
    window: f64,
    capacity: usize,
    samples: VecDeque<(f64, f64)>,
    pub smoothed: f64,
}

impl MicroDopplerTrace {
    /// Trace holding at most `ceil(window / frame_interval)` samples.
    pub fn new(window: f64, frame_interval: f64) -> Self {
        let capacity = ((window / frame_interval).ceil() as usize).max(1);
        Self {
            window,
            capacity,
            samples: VecDeque::with_capacity(capacity),
            smoothed: 0.0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.samples.iter()
    }

    /// Push `(time, v_abs_max)` and evict samples older than the window.
    pub fn push(mut self, time: f64, sample: f64) -> Self {
        self.samples.push_back((time, sample));
        while self.samples.len() > self.capacity
            || self
                .samples
                .front()
                .is_some_and(|(t, _)| time - t > self.window)
        {
            self.samples.pop_front();
        }
        self.smoothed =
            self.samples.iter().map(|(_, v)| v).sum::<f64>() / self.samples.len() as f64;
        self
    }
}

pub fn smooth(trace: MicroDopplerTrace, time: f64, sample: f64) -> MicroDopplerTrace {
    trace.push(time, sample)
}

/// Range change over the last `window` seconds of a `(time, range)` history,
/// measured against the newest entry at or before `now - window`. Zero when the
/// history does not reach back that far.
pub fn drift<'a>(history: impl IntoIterator<Item = &'a (f64, f64)>, window: f64) -> f64 {
    let entries: Vec<&(f64, f64)> = history.into_iter().collect();
    let Some(&&(now, latest)) = entries.last() else {
        return 0.0;
    };
    // Tolerate accumulated rounding in frame timestamps.
    let cutoff = now - window + 1e-9;
    entries
        .iter()
        .rev()
        .find(|(t, _)| *t <= cutoff)
        .map(|(_, r)| (latest - r).abs())
        .unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd::POWER_FLOOR_DB;
    use nalgebra::{Matrix2, Vector2};

    const VBIN: f64 = 0.009;

    fn map(cells: &[(usize, usize, f64)], base: f64) -> RangeDopplerMap<f64> {
        RangeDopplerMap::from_fn(512, 200, 0.0375, VBIN, |d, r| {
            cells
                .iter()
                .find(|c| c.0 == d && c.1 == r)
                .map(|c| c.2)
                .unwrap_or(base)
        })
    }

    fn track_at(bin: usize) -> TargetTrack {
        TargetTrack::new(
            Vector2::new(bin as f64 * 0.0375, 0.0),
            Matrix2::identity(),
            0,
            0.0,
        )
    }

    #[test]
    fn single_qualifying_cell() {
        let m = map(&[(256 + 50, 100, -5.0)], POWER_FLOOR_DB);
        let v = microdoppler_velocity(&m, &track_at(100), &RoiSpec::default()).unwrap();
        assert!((v - 50.0 * VBIN).abs() < 1e-12);
    }

    #[test]
    fn limb_within_fifteen_db_sets_velocity() {
        let limb_bin = (1.2 / VBIN).round() as usize;
        let m = map(&[(256 + 5, 100, 0.0), (256 + limb_bin, 102, -10.0)], -40.0);
        let v = microdoppler_velocity(&m, &track_at(100), &RoiSpec::default()).unwrap();
        assert!((v - 1.2).abs() <= VBIN / 2.0, "{v}");
    }

    #[test]
    fn limb_below_cut_is_ignored() {
        let m = map(
            &[
                (256 + 5, 100, 0.0),
                (256 - 4, 101, -3.0),
                (256 + 133, 102, -20.0),
            ],
            -40.0,
        );
        let v = microdoppler_velocity(&m, &track_at(100), &RoiSpec::default()).unwrap();
        assert!((v - 5.0 * VBIN).abs() < 1e-12);
    }

    #[test]
    fn cells_outside_roi_do_not_count() {
        let m = map(&[(256 + 5, 100, 0.0), (256 + 100, 109, 0.0)], -40.0);
        let v = microdoppler_velocity(&m, &track_at(100), &RoiSpec::default()).unwrap();
        assert!((v - 5.0 * VBIN).abs() < 1e-12);
    }

    #[test]
    fn invariant_under_uniform_offset() {
        let mut m = map(&[(256 + 5, 100, 0.0), (256 + 60, 104, -12.0)], -40.0);
        let roi = RoiSpec::default();
        let before = microdoppler_velocity(&m, &track_at(100), &roi).unwrap();
        m.offset_db(17.5);
        assert_eq!(
            microdoppler_velocity(&m, &track_at(100), &roi).unwrap(),
            before
        );
    }

    #[test]
    fn gate_rejects_cells_near_the_noise() {
        let m = map(&[(256 + 5, 100, -60.0), (256 + 200, 103, -70.0)], -90.0);
        let roi = RoiSpec::default();
        let open = microdoppler_velocity_at(&m, 100.0 * 0.0375, &roi).unwrap();
        assert!((open - 200.0 * VBIN).abs() < 1e-12);
        let gated = microdoppler_velocity_gated(&m, 100.0 * 0.0375, &roi, -65.0).unwrap();
        assert!((gated - 5.0 * VBIN).abs() < 1e-12);
        assert_eq!(
            microdoppler_velocity_gated(&m, 100.0 * 0.0375, &roi, -50.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn absolute_mode_uses_fixed_level() {
        let m = map(&[(256 + 5, 100, 0.0), (256 + 60, 104, -30.0)], -80.0);
        let roi = RoiSpec {
            mode: ThresholdMode::Absolute,
            threshold_db: -50.0,
            ..Default::default()
        };
        let v = microdoppler_velocity(&m, &track_at(100), &roi).unwrap();
        assert!((v - 60.0 * VBIN).abs() < 1e-12);
    }

    #[test]
    fn roi_clipping_and_errors() {
        let m = map(&[(256 + 7, 2, 0.0)], -40.0);
        let v = microdoppler_velocity(&m, &track_at(0), &RoiSpec::default()).unwrap();
        assert!((v - 7.0 * VBIN).abs() < 1e-12);
        assert!(matches!(
            microdoppler_velocity(&m, &track_at(300), &RoiSpec::default()),
            Err(Error::EmptyRoi)
        ));
        let bad = RoiSpec {
            range_halfwidth: 0,
            ..Default::default()
        };
        assert!(microdoppler_velocity(&m, &track_at(2), &bad).is_err());
        let bad = RoiSpec {
            threshold_db: 3.0,
            ..Default::default()
        };
        assert!(microdoppler_velocity(&m, &track_at(2), &bad).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let mut trace = MicroDopplerTrace::new(0.5, 0.1048576);
        assert_eq!(trace.capacity(), 5);
        for k in 0..5 {
            trace = trace.push(k as f64 * 0.1048576, 1.0);
        }
        assert_eq!(trace.smoothed, 1.0);

        let mut trace = MicroDopplerTrace::new(0.5, 0.1048576);
        for (k, v) in [0.0, 0.0, 0.0, 0.0, 5.0].into_iter().enumerate() {
            trace = smooth(trace, k as f64 * 0.1048576, v);
        }
        assert_eq!(trace.smoothed, 1.0);
    }

    #[test]
    fn old_samples_are_evicted_by_age() {
        let mut trace = MicroDopplerTrace::new(0.5, 0.1);
        trace = trace.push(0.0, 10.0);
        trace = trace.push(0.6, 2.0);
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.smoothed, 2.0);
    }

    #[test]
    fn drift_examples() {
        let still: Vec<(f64, f64)> = (0..10).map(|k| (k as f64 * 0.1, 3.0)).collect();
        assert_eq!(drift(&still, 0.5), 0.0);
        let moving: Vec<(f64, f64)> = (0..10)
            .map(|k| (k as f64 * 0.1, 3.0 + 0.03 * k as f64))
            .collect();
        assert!((drift(&moving, 0.5) - 0.15).abs() < 1e-12);
        let short: Vec<(f64, f64)> = (0..3).map(|k| (k as f64 * 0.1, k as f64)).collect();
        assert_eq!(drift(&short, 0.5), 0.0);
        assert_eq!(drift(&[], 0.5), 0.0);
    }
}

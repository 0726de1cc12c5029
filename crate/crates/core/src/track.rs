//! Constant-velocity Kalman tracking of (range, radial velocity).
//!
//! Both range and velocity are measured (`H = I`). Covariance updates use the
//! Joseph form so `P` stays symmetric positive-definite over long runs.

use std::collections::VecDeque;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::detect::{Detection, HysteresisState};
use crate::error::{Error, Result};
use crate::params::DerivedParams;

/// Posterior ranges kept for drift computation.
const HISTORY_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// White-noise acceleration density, m/s².
    pub sigma_a: f64,
    /// Measurement standard deviations; `None` means one range / velocity bin.
    pub range_sigma_m: Option<f64>,
    pub velocity_sigma_mps: Option<f64>,
    /// Initial standard deviation in bins.
    pub init_sigma_bins: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            sigma_a: 1.0,
            range_sigma_m: Some(0.1),
            velocity_sigma_mps: Some(1.0),
            init_sigma_bins: 10.0,
        }
    }
}

impl KalmanConfig {
    pub fn measurement_noise(&self, params: &DerivedParams) -> Matrix2<f64> {
        let r = self.range_sigma_m.unwrap_or(params.range_bin);
        let v = self.velocity_sigma_mps.unwrap_or(params.velocity_bin);
        Matrix2::new(r * r, 0.0, 0.0, v * v)
    }

    pub fn initial_covariance(&self, params: &DerivedParams) -> Matrix2<f64> {
        let r = self.init_sigma_bins * params.range_bin;
        let v = self.init_sigma_bins * params.velocity_bin;
        Matrix2::new(r * r, 0.0, 0.0, v * v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    /// `[range m, velocity m/s]`.
    pub state: Vector2<f64>,
    pub covariance: Matrix2<f64>,
    pub last_update_frame: u64,
    pub last_update_time: f64,
    /// `(frame_time, filtered range)`, oldest first.
    pub history: VecDeque<(f64, f64)>,
}

impl TargetTrack {
    pub fn new(state: Vector2<f64>, covariance: Matrix2<f64>, frame: u64, time: f64) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY_LEN);
        history.push_back((time, state[0]));
        Self {
            state,
            covariance,
            last_update_frame: frame,
            last_update_time: time,
            history,
        }
    }

    pub fn range(&self) -> f64 {
        self.state[0]
    }

    pub fn velocity(&self) -> f64 {
        self.state[1]
    }

    fn record(&mut self, frame: u64, time: f64) {
        self.last_update_frame = frame;
        self.last_update_time = time;
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back((time, self.state[0]));
    }
}

pub fn is_symmetric_positive_definite(m: &Matrix2<f64>) -> bool {
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-9 * scale && m.cholesky().is_some()
}

/// Propagate by `dt` seconds under the constant-velocity model.
pub fn kalman_predict(track: &TargetTrack, dt: f64, sigma_a: f64) -> Result<TargetTrack> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!(
            "prediction step must be positive, got {dt}"
        )));
    }
    let f = Matrix2::new(1.0, dt, 0.0, 1.0);
    let q = sigma_a
        * sigma_a
        * Matrix2::new(
            dt.powi(4) / 4.0,
            dt.powi(3) / 2.0,
            dt.powi(3) / 2.0,
            dt * dt,
        );
    let p = f * track.covariance * f.transpose() + q;
    Ok(TargetTrack {
        state: f * track.state,
        covariance: (p + p.transpose()) * 0.5,
        ..track.clone()
    })
}

/// Fuse a `(range, velocity)` measurement with noise covariance `r`.
pub fn kalman_update(track: &TargetTrack, z: &Detection, r: &Matrix2<f64>) -> Result<TargetTrack> {
    if !is_symmetric_positive_definite(&track.covariance) {
        return Err(Error::NotPositiveDefinite("track covariance"));
    }
    if !is_symmetric_positive_definite(r) {
        return Err(Error::NotPositiveDefinite("measurement covariance"));
    }
    let p = track.covariance;
    let s = p + r;
    let s_inv = s
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite("innovation covariance"))?;
    let k = p * s_inv;
    let innovation = Vector2::new(z.range, z.velocity) - track.state;
    let i_k = Matrix2::identity() - k;
    let joseph = i_k * p * i_k.transpose() + k * r * k.transpose();
    Ok(TargetTrack {
        state: track.state + k * innovation,
        covariance: (joseph + joseph.transpose()) * 0.5,
        ..track.clone()
    })
}

/// Advance the track by one frame given the detector decision.
///
/// No track and active: start one at the measurement. Active: predict to
/// `frame_time`, then update. Inactive: the track is dropped.
pub fn track_lifecycle(
    track: Option<TargetTrack>,
    hysteresis: &HysteresisState,
    det: &Detection,
    frame_index: u64,
    frame_time: f64,
    params: &DerivedParams,
    config: &KalmanConfig,
) -> Result<Option<TargetTrack>> {
    if !hysteresis.active {
        return Ok(None);
    }
    let Some(track) = track else {
        return Ok(Some(TargetTrack::new(
            Vector2::new(det.range, det.velocity),
            config.initial_covariance(params),
            frame_index,
            frame_time,
        )));
    };
    let dt = frame_time - track.last_update_time;
    let predicted = kalman_predict(&track, dt, config.sigma_a)?;
    let mut updated = kalman_update(&predicted, det, &config.measurement_noise(params))?;
    updated.record(frame_index, frame_time);
    Ok(Some(updated))
}

//! Four-state activity classifier.

use serde::{Deserialize, Serialize};

pub use crate::activity::Activity;

/// Classifier state. The waving hysteresis needs no memory beyond whether the
/// previous state was [`Activity::Waving`].
pub type ActivityState = Activity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FsmConfig {
    /// Tracked-range drift that means walking, in meters.
    pub drift_threshold_m: f64,
    pub drift_window_s: f64,
    /// Smoothed micro-Doppler velocity that starts waving, m/s.
    pub wave_enter_mps: f64,
    /// Smoothed micro-Doppler velocity below which waving stops, m/s.
    pub wave_exit_mps: f64,
}

impl Default for FsmConfig {
    fn default() -> Self {
        Self {
            drift_threshold_m: 0.10,
            drift_window_s: 0.5,
            wave_enter_mps: 0.6,
            wave_exit_mps: 0.4,
        }
    }
}

impl FsmConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.wave_exit_mps < self.wave_enter_mps) {
            return Err(crate::Error::Config(format!(
                "wave exit threshold {} must be below enter threshold {}",
                self.wave_exit_mps, self.wave_enter_mps
            )));
        }
        if !(self.drift_threshold_m > 0.0 && self.drift_window_s > 0.0) {
            return Err(crate::Error::Config(
                "drift threshold and window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One classifier step.
///
/// Undetected targets are absent. A detected target whose tracked range drifted
/// more than the threshold is walking; otherwise the smoothed micro-Doppler
/// velocity decides between waving and standing with hysteresis.
pub fn fsm_step(
    prev: ActivityState,
    detected: bool,
    drift_m: f64,
    v_md: f64,
    config: &FsmConfig,
) -> ActivityState {
    if !detected {
        return Activity::Absent;
    }
    if drift_m > config.drift_threshold_m {
        return Activity::Walking;
    }
    let waving = if prev == Activity::Waving {
        !(v_md < config.wave_exit_mps)
    } else {
        v_md > config.wave_enter_mps
    };
    if waving {
        Activity::Waving
    } else {
        Activity::Standing
    }
}

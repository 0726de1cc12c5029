//! Single-target detection: the strongest cell inside a range-Doppler scope,
//! gated by a two-threshold hysteresis detector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::rd::RangeDopplerMap;
use crate::scalar::Real;

/// Detector settings as they appear in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub scope_min_m: f64,
    pub scope_max_m: f64,
    /// Doppler rows excluded on each side of zero Doppler.
    pub guard_bins: usize,
    /// Activation threshold above the calibrated noise floor, dB.
    pub upper_db: f64,
    /// Release threshold above the calibrated noise floor, dB.
    pub lower_db: f64,
    /// Added to the median scope power of the warm-up CPI to form the floor.
    pub floor_offset_db: f64,
    /// Fixed noise floor in map dB; skips warm-up calibration when set.
    pub noise_floor_db: Option<f64>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            scope_min_m: 0.5,
            scope_max_m: 12.0,
            guard_bins: 3,
            upper_db: 15.0,
            lower_db: 10.0,
            floor_offset_db: 8.0,
            noise_floor_db: None,
        }
    }
}

impl DetectionConfig {
    pub fn scope(&self, params: &DerivedParams) -> Result<DetectionScope> {
        DetectionScope::from_meters(self.scope_min_m, self.scope_max_m, self.guard_bins, params)
    }

    /// Detector state for a calibrated noise floor (map dB).
    pub fn hysteresis(&self, noise_floor_db: f64) -> Result<HysteresisState> {
        HysteresisState::new(
            noise_floor_db + self.upper_db,
            noise_floor_db + self.lower_db,
        )
    }
}

/// Range-bin rectangle searched for the target, minus a zero-Doppler guard band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionScope {
    pub min_range_bin: usize,
    /// Exclusive.
    pub max_range_bin: usize,
    pub zero_doppler_guard: usize,
}

impl DetectionScope {
    pub fn new(
        min_range_bin: usize,
        max_range_bin: usize,
        zero_doppler_guard: usize,
    ) -> Result<Self> {
        if min_range_bin >= max_range_bin {
            return Err(Error::Config(format!(
                "scope range bins [{min_range_bin}, {max_range_bin}) are empty"
            )));
        }
        if zero_doppler_guard < 1 {
            return Err(Error::Config(
                "zero-Doppler guard must be at least 1 bin".into(),
            ));
        }
        Ok(Self {
            min_range_bin,
            max_range_bin,
            zero_doppler_guard,
        })
    }

    pub fn from_meters(
        min_m: f64,
        max_m: f64,
        guard: usize,
        params: &DerivedParams,
    ) -> Result<Self> {
        if !(min_m >= 0.0 && max_m > min_m) {
            return Err(Error::Config(format!(
                "scope [{min_m}, {max_m}] m is empty or negative"
            )));
        }
        let min_bin = (min_m / params.range_bin).floor() as usize;
        let max_bin = ((max_m / params.range_bin).ceil() as usize).min(params.sequence_length);
        Self::new(min_bin, max_bin, guard)
    }

    pub fn is_guard_row(&self, doppler: usize, zero_row: usize) -> bool {
        doppler.abs_diff(zero_row) <= self.zero_doppler_guard
    }

    fn check<T: Real>(&self, map: &RangeDopplerMap<T>) -> Result<()> {
        if self.max_range_bin > map.range_bins() {
            return Err(Error::Config(format!(
                "scope ends at range bin {} but the map has {}",
                self.max_range_bin,
                map.range_bins()
            )));
        }
        if 2 * self.zero_doppler_guard + 1 >= map.doppler_bins() {
            return Err(Error::EmptyScope);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub power_db: f64,
    pub range: f64,
    pub velocity: f64,
    pub range_bin: usize,
    pub doppler_bin: usize,
}

/// Strongest cell in the scope. Ties go to the lowest range bin, then the lowest
/// Doppler row.
pub fn scope_max<T: Real>(map: &RangeDopplerMap<T>, scope: &DetectionScope) -> Result<Detection> {
    scope.check(map)?;
    let zero = map.zero_doppler_row();
    let mut best: Option<(usize, usize, T)> = None;
    for r in scope.min_range_bin..scope.max_range_bin {
        for (d, &v) in map.column(r).iter().enumerate() {
            if scope.is_guard_row(d, zero) {
                continue;
            }
            if best.is_none_or(|(_, _, b)| v > b) {
                best = Some((r, d, v));
            }
        }
    }
    let (range_bin, doppler_bin, power) = best.ok_or(Error::EmptyScope)?;
    Ok(Detection {
        power_db: power.to_real(),
        range: map.range_of(range_bin),
        velocity: map.velocity_of(doppler_bin),
        range_bin,
        doppler_bin,
    })
}

/// Median power over the scope, excluding the guard band.
pub fn scope_median_db<T: Real>(map: &RangeDopplerMap<T>, scope: &DetectionScope) -> Result<f64> {
    scope.check(map)?;
    let zero = map.zero_doppler_row();
    let mut cells: Vec<f64> = (scope.min_range_bin..scope.max_range_bin)
        .flat_map(|r| {
            map.column(r)
                .iter()
                .enumerate()
                .filter(move |(d, _)| !scope.is_guard_row(*d, zero))
                .map(|(_, v)| v.to_real())
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyScope);
    }
    let mid = cells.len() / 2;
    let (_, median, _) = cells.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*median)
}

/// Two-threshold detector with absolute thresholds in map dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisState {
    pub active: bool,
    pub upper_db: f64,
    pub lower_db: f64,
}

impl HysteresisState {
    pub fn new(upper_db: f64, lower_db: f64) -> Result<Self> {
        if !(lower_db < upper_db) {
            return Err(Error::Config(format!(
                "hysteresis lower threshold {lower_db} dB must be below upper {upper_db} dB"
            )));
        }
        Ok(Self {
            active: false,
            upper_db,
            lower_db,
        })
    }

    /// Inactive → active iff `power > upper`; active → inactive iff `power < lower`.
    /// Both comparisons are strict.
    pub fn step(self, power_db: f64) -> Self {
        let active = if self.active {
            !(power_db < self.lower_db)
        } else {
            power_db > self.upper_db
        };
        Self { active, ..self }
    }
}

pub fn hysteresis_step(state: HysteresisState, power_db: f64) -> HysteresisState {
    state.step(power_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rd::POWER_FLOOR_DB;

    fn map_with(peaks: &[(usize, usize, f64)]) -> RangeDopplerMap<f64> {
        RangeDopplerMap::from_fn(512, 400, 0.0375, 0.009, |d, r| {
            peaks
                .iter()
                .find(|(pd, pr, _)| *pd == d && *pr == r)
                .map(|p| p.2)
                .unwrap_or(POWER_FLOOR_DB)
        })
    }

    fn scope() -> DetectionScope {
        DetectionScope::new(10, 300, 3).unwrap()
    }

    #[test]
    fn finds_single_off_guard_peak() {
        let det = scope_max(&map_with(&[(368, 133, -3.0)]), &scope()).unwrap();
        assert_eq!((det.range_bin, det.doppler_bin), (133, 368));
        assert!((det.range - 133.0 * 0.0375).abs() < 1e-12);
        assert!((det.velocity - 112.0 * 0.009).abs() < 1e-12);
        assert_eq!(det.power_db, -3.0);
    }

    #[test]
    fn constant_map_breaks_ties_toward_origin() {
        let det = scope_max(&map_with(&[]), &scope()).unwrap();
        assert_eq!((det.range_bin, det.doppler_bin), (10, 0));
        assert_eq!(det.power_db, POWER_FLOOR_DB);
    }

    #[test]
    fn guard_band_peak_is_skipped() {
        let det = scope_max(&map_with(&[(258, 50, 0.0), (300, 60, -20.0)]), &scope()).unwrap();
        assert_eq!((det.range_bin, det.doppler_bin), (60, 300));
        // First row past the guard is eligible.
        let det = scope_max(&map_with(&[(260, 50, 0.0)]), &scope()).unwrap();
        assert_eq!(det.doppler_bin, 260);
    }

    #[test]
    fn scope_validation() {
        assert!(DetectionScope::new(5, 5, 3).is_err());
        assert!(DetectionScope::new(0, 5, 0).is_err());
        let too_wide = DetectionScope::new(0, 401, 3).unwrap();
        assert!(scope_max(&map_with(&[]), &too_wide).is_err());
        let all_guard = DetectionScope::new(0, 10, 256).unwrap();
        assert!(matches!(
            scope_max(&map_with(&[]), &all_guard),
            Err(Error::EmptyScope)
        ));
    }

    #[test]
    fn hysteresis_trace() {
        let s = HysteresisState::new(15.0, 10.0).unwrap();
        assert!(!s.step(12.0).active);
        let s = s.step(16.0);
        assert!(s.active);
        let s = s.step(12.0);
        assert!(s.active);
        let s = s.step(9.0);
        assert!(!s.active);
    }

    #[test]
    fn hysteresis_boundaries_are_strict() {
        let on = HysteresisState {
            active: true,
            upper_db: 15.0,
            lower_db: 10.0,
        };
        assert!(on.step(10.0).active);
        let off = HysteresisState {
            active: false,
            ..on
        };
        assert!(!off.step(15.0).active);
        assert!(HysteresisState::new(10.0, 10.0).is_err());
    }

    #[test]
    fn median_ignores_guard_rows() {
        let mut map = map_with(&[]);
        for r in 0..400 {
            for d in 253..=259 {
                map.set(d, r, 50.0);
            }
        }
        assert_eq!(scope_median_db(&map, &scope()).unwrap(), POWER_FLOOR_DB);
    }
}

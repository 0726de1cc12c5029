//! Clutter removal and slow-time Doppler processing.
//!
//! Per range bin: subtract the CPI mean (zero-Doppler clutter), apply a periodic
//! Hann window, transform along slow time and FFT-shift so row `P/2` is zero
//! Doppler. The transform runs in the `exp(+j2πkp/P)` direction so that a
//! receding target (range increasing, positive radial velocity) lands above the
//! zero-Doppler row. Magnitudes are divided by the window sum (DFT scaled by `1/P`,
//! then by the coherent gain `Σw/P`), so an on-grid unit echo reads 0 dB.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::scalar::Real;
use crate::waveform::RangeProfile;

/// Lower clamp applied to every map cell.
pub const POWER_FLOOR_DB: f64 = -120.0;

/// Range bins processed together; keeps the slow-time gather cache friendly.
const RANGE_BLOCK: usize = 32;

/// Pulses gathered per pass of the transpose.
const PULSE_TILE: usize = 8;

/// Range-Doppler power in dB relative to a unit post-correlation echo.
///
/// Stored range-major (`range * doppler_bins + doppler`). Row `doppler_bins / 2`
/// is zero Doppler and the velocity axis spans `[-v_max, +v_max)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap<T> {
    power_db: Vec<T>,
    doppler_bins: usize,
    range_bins: usize,
    pub range_step: f64,
    pub velocity_step: f64,
    pub frame_index: u64,
    pub frame_time: f64,
}

impl<T: Real> RangeDopplerMap<T> {
    /// Build a map cell by cell, `f(doppler, range)`.
    pub fn from_fn(
        doppler_bins: usize,
        range_bins: usize,
        range_step: f64,
        velocity_step: f64,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut power_db = Vec::with_capacity(doppler_bins * range_bins);
        for r in 0..range_bins {
            for d in 0..doppler_bins {
                power_db.push(f(d, r));
            }
        }
        Self {
            power_db,
            doppler_bins,
            range_bins,
            range_step,
            velocity_step,
            frame_index: 0,
            frame_time: 0.0,
        }
    }

    /// Constant map sized for `params`.
    pub fn filled(params: &DerivedParams, value: T) -> Self {
        Self::from_fn(
            params.cpi_pulses,
            params.sequence_length,
            params.range_bin,
            params.velocity_bin,
            |_, _| value,
        )
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    pub fn zero_doppler_row(&self) -> usize {
        self.doppler_bins / 2
    }

    #[inline]
    pub fn get(&self, doppler: usize, range: usize) -> T {
        self.power_db[range * self.doppler_bins + doppler]
    }

    #[inline]
    pub fn set(&mut self, doppler: usize, range: usize, value: T) {
        self.power_db[range * self.doppler_bins + doppler] = value;
    }

    /// Doppler spectrum of one range bin.
    pub fn column(&self, range: usize) -> &[T] {
        &self.power_db[range * self.doppler_bins..(range + 1) * self.doppler_bins]
    }

    /// Signed Doppler offset of a row from the zero-Doppler row.
    pub fn doppler_offset(&self, doppler: usize) -> i64 {
        doppler as i64 - self.zero_doppler_row() as i64
    }

    pub fn velocity_of(&self, doppler: usize) -> f64 {
        self.doppler_offset(doppler) as f64 * self.velocity_step
    }

    pub fn range_of(&self, range_bin: usize) -> f64 {
        range_bin as f64 * self.range_step
    }

    /// Cells in Doppler-major order (`doppler * range_bins + range`).
    pub fn to_row_major(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.power_db.len()];
        for r in 0..self.range_bins {
            for (d, v) in self.column(r).iter().enumerate() {
                out[d * self.range_bins + r] = *v;
            }
        }
        out
    }

    /// Add a constant to every cell.
    pub fn offset_db(&mut self, delta: T) {
        for v in &mut self.power_db {
            *v = *v + delta;
        }
    }

    /// Location and value of the strongest cell.
    pub fn peak(&self) -> (usize, usize, T) {
        let mut best = (0, 0, self.power_db[0]);
        for r in 0..self.range_bins {
            for (d, &v) in self.column(r).iter().enumerate() {
                if v > best.2 {
                    best = (d, r, v);
                }
            }
        }
        best
    }
}

fn check_profiles<T>(profiles: &[RangeProfile<T>], expected: usize) -> Result<usize> {
    if profiles.len() != expected {
        return Err(Error::ProfileCount {
            expected,
            actual: profiles.len(),
        });
    }
    let len = profiles.first().map(|p| p.bins.len()).unwrap_or(0);
    for p in profiles {
        if p.bins.len() != len {
            return Err(Error::LengthMismatch {
                expected: len,
                actual: p.bins.len(),
            });
        }
    }
    Ok(len)
}

/// Zero-Doppler clutter: the mean over pulses of each range bin.
pub fn estimate_clutter<T: Real>(
    profiles: &[RangeProfile<T>],
    cpi_pulses: usize,
) -> Result<Vec<Complex<T>>> {
    let len = check_profiles(profiles, cpi_pulses)?;
    let scale = T::from_real(1.0 / cpi_pulses as f64);
    Ok((0..len)
        .map(|r| {
            let sum = profiles
                .iter()
                .fold(Complex::<T>::default(), |acc, p| acc + p.bins[r]);
            sum * scale
        })
        .collect())
}

/// Periodic (DFT-even) Hann window `0.5·(1 - cos(2πp/P))`.
pub fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|p| 0.5 * (1.0 - (std::f64::consts::TAU * p as f64 / len as f64).cos()))
        .collect()
}

/// Reusable slow-time processor; immutable after construction.
pub struct RangeDopplerProcessor<T: Real> {
    params: DerivedParams,
    fft: Arc<dyn Fft<T>>,
    window: Vec<T>,
    /// `20·log10(Σw)`, subtracted from every cell.
    gain_db: T,
}

impl<T: Real> RangeDopplerProcessor<T> {
    pub fn new(params: &DerivedParams) -> Self {
        let p = params.cpi_pulses;
        let window = periodic_hann(p);
        let gain: f64 = window.iter().sum();
        Self {
            params: *params,
            fft: FftPlanner::new().plan_fft_inverse(p),
            window: window.into_iter().map(T::from_real).collect(),
            gain_db: T::from_real(20.0 * gain.log10()),
        }
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    pub fn process(
        &self,
        profiles: &[RangeProfile<T>],
        frame_index: u64,
        frame_time: f64,
    ) -> Result<RangeDopplerMap<T>> {
        let pulses = self.params.cpi_pulses;
        let range_bins = check_profiles(profiles, pulses)?;
        let half = pulses / 2;
        let inv_pulses = T::from_real(1.0 / pulses as f64);
        let floor = T::from_real(POWER_FLOOR_DB);
        let db_per_log2 = T::from_real(10.0 * std::f64::consts::LOG10_2);
        let mut power_db = vec![T::zero(); range_bins * pulses];

        power_db
            .par_chunks_mut(pulses * RANGE_BLOCK)
            .enumerate()
            .for_each_init(
                || {
                    (
                        vec![Complex::<T>::default(); pulses * RANGE_BLOCK],
                        vec![Complex::<T>::default(); self.fft.get_inplace_scratch_len()],
                    )
                },
                |(buf, scratch), (block, out)| {
                    let r0 = block * RANGE_BLOCK;
                    let width = out.len() / pulses;
                    let buf = &mut buf[..width * pulses];
                    for (g, group) in profiles.chunks(PULSE_TILE).enumerate() {
                        let p0 = g * PULSE_TILE;
                        for j in 0..width {
                            let dst = &mut buf[j * pulses + p0..j * pulses + p0 + group.len()];
                            for (d, profile) in dst.iter_mut().zip(group) {
                                *d = profile.bins[r0 + j];
                            }
                        }
                    }
                    for series in buf.chunks_exact_mut(pulses) {
                        // Same summation order as `estimate_clutter`.
                        let sum = series.iter().fold(Complex::<T>::default(), |a, x| a + *x);
                        let clutter = sum * inv_pulses;
                        for (x, w) in series.iter_mut().zip(&self.window) {
                            *x = (*x - clutter) * *w;
                        }
                    }
                    self.fft.process_with_scratch(buf, scratch);
                    let to_db = |x: &Complex<T>| {
                        let db = db_per_log2 * x.norm_sqr().fast_log2() - self.gain_db;
                        // Zero power maps far below the floor.
                        if db > floor {
                            db
                        } else {
                            floor
                        }
                    };
                    for (series, col) in buf.chunks_exact(pulses).zip(out.chunks_exact_mut(pulses))
                    {
                        let (low, high) = series.split_at(pulses - half);
                        let (neg, pos) = col.split_at_mut(half);
                        for (dst, x) in pos.iter_mut().zip(low) {
                            *dst = to_db(x);
                        }
                        for (dst, x) in neg.iter_mut().zip(high) {
                            *dst = to_db(x);
                        }
                    }
                },
            );

        Ok(RangeDopplerMap {
            power_db,
            doppler_bins: pulses,
            range_bins,
            range_step: self.params.range_bin,
            velocity_step: self.params.velocity_bin,
            frame_index,
            frame_time,
        })
    }
}

/// One-shot map computation; plans a fresh FFT per call.
pub fn range_doppler_map<T: Real>(
    profiles: &[RangeProfile<T>],
    params: &DerivedParams,
) -> Result<RangeDopplerMap<T>> {
    RangeDopplerProcessor::new(params).process(profiles, 0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive, SystemConfig};
    use rand::{Rng, SeedableRng};

    fn small_params() -> DerivedParams {
        derive(&SystemConfig {
            sequence_length: 64,
            cpi_pulses: 32,
            ..Default::default()
        })
        .unwrap()
    }

    fn profiles_from(
        f: impl Fn(usize, usize) -> Complex<f64>,
        pulses: usize,
        len: usize,
    ) -> Vec<RangeProfile<f64>> {
        (0..pulses)
            .map(|p| RangeProfile {
                bins: (0..len).map(|r| f(p, r)).collect(),
                pulse_index: p,
            })
            .collect()
    }

    #[test]
    fn identical_profiles_are_their_own_clutter() {
        let row: Vec<Complex<f64>> = (0..64)
            .map(|r| Complex::new(r as f64, -0.5 * r as f64))
            .collect();
        let profiles = profiles_from(|_, r| row[r], 32, 64);
        let clutter = estimate_clutter(&profiles, 32).unwrap();
        for (c, x) in clutter.iter().zip(&row) {
            assert!((c - x).norm() < 1e-12);
        }
    }

    #[test]
    fn full_period_tone_averages_out_of_clutter() {
        let c = Complex::new(0.3, 0.7);
        let profiles = profiles_from(
            |p, _| c + Complex::from_polar(2.0, std::f64::consts::TAU * 5.0 * p as f64 / 32.0),
            32,
            8,
        );
        for got in estimate_clutter(&profiles, 32).unwrap() {
            assert!((got - c).norm() < 1e-14);
        }
    }

    #[test]
    fn clutter_matches_columnwise_mean_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let profiles: Vec<RangeProfile<f64>> = (0..32)
            .map(|p| RangeProfile {
                bins: (0..64)
                    .map(|_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                    .collect(),
                pulse_index: p,
            })
            .collect();
        let clutter = estimate_clutter(&profiles, 32).unwrap();
        for (r, c) in clutter.iter().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for p in &profiles {
                re += p.bins[r].re;
                im += p.bins[r].im;
            }
            assert!((c.re - re / 32.0).abs() < 1e-12);
            assert!((c.im - im / 32.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_profile_count_and_length() {
        let p = small_params();
        let short = profiles_from(|_, _| Complex::default(), 31, 64);
        assert!(matches!(
            range_doppler_map(&short, &p),
            Err(Error::ProfileCount { .. })
        ));
        let mut ragged = profiles_from(|_, _| Complex::default(), 32, 64);
        ragged[3].bins.pop();
        assert!(matches!(
            range_doppler_map(&ragged, &p),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn on_grid_tone_reads_zero_db_at_its_offset() {
        let p = small_params();
        let profiles = profiles_from(
            |pulse, r| {
                // Clockwise rotation, as for a receding echo.
                if r == 10 {
                    Complex::from_polar(1.0, -std::f64::consts::TAU * 4.0 * pulse as f64 / 32.0)
                } else {
                    Complex::default()
                }
            },
            32,
            64,
        );
        let map = range_doppler_map(&profiles, &p).unwrap();
        let (d, r, v) = map.peak();
        assert_eq!((d, r), (16 + 4, 10));
        assert!(v.abs() < 1e-9, "peak {v} dB");
        assert_eq!(map.get(16, 3), POWER_FLOOR_DB);
    }

    #[test]
    fn static_return_is_nulled_to_the_floor() {
        let p = small_params();
        let profiles = profiles_from(|_, r| Complex::new(1.0 + r as f64, 0.25), 32, 64);
        let map = range_doppler_map(&profiles, &p).unwrap();
        for r in 0..64 {
            assert!(map.column(r).iter().all(|&v| v == POWER_FLOOR_DB));
        }
    }

    #[test]
    fn row_major_export_transposes() {
        let map = RangeDopplerMap::<f32>::from_fn(4, 3, 1.0, 1.0, |d, r| (10 * d + r) as f32);
        let rm = map.to_row_major();
        assert_eq!(rm[2 * 3 + 1], 21.0);
        assert_eq!(map.get(2, 1), 21.0);
    }
}

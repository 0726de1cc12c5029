//! System numerology and the physical parameters derived from it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Configured radar numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Carrier frequency in Hz.
    pub carrier_frequency: f64,
    /// Complex baseband sample rate in Hz.
    pub sample_rate: f64,
    /// Zadoff-Chu sequence length in samples.
    pub sequence_length: usize,
    /// Zadoff-Chu root index, coprime with `sequence_length`.
    pub zc_root: usize,
    /// Pulse repetition interval in sequence periods.
    pub pri_sequences: usize,
    /// Pulses per coherent processing interval. Must be a power of two.
    pub cpi_pulses: usize,
    pub speed_of_light: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            carrier_frequency: 160e9,
            sample_rate: 4e9,
            sequence_length: 8192,
            zc_root: 1,
            pri_sequences: 100,
            cpi_pulses: 512,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency", self.carrier_frequency),
            ("sample_rate", self.sample_rate),
            ("speed_of_light", self.speed_of_light),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.sequence_length < 2 {
            return Err(Error::Config(format!(
                "sequence_length must be at least 2, got {}",
                self.sequence_length
            )));
        }
        if self.zc_root == 0 || gcd(self.zc_root, self.sequence_length) != 1 {
            return Err(Error::Config(format!(
                "zc_root {} is not coprime with sequence_length {}",
                self.zc_root, self.sequence_length
            )));
        }
        if self.pri_sequences == 0 {
            return Err(Error::Config("pri_sequences must be at least 1".into()));
        }
        if !self.cpi_pulses.is_power_of_two() || self.cpi_pulses < 2 {
            return Err(Error::Config(format!(
                "cpi_pulses must be a power of two >= 2, got {}",
                self.cpi_pulses
            )));
        }
        Ok(())
    }
}

/// Physical quantities derived from a [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub sequence_length: usize,
    pub cpi_pulses: usize,
    pub sample_rate: f64,
    pub carrier_frequency: f64,
    pub speed_of_light: f64,
    pub wavelength: f64,
    /// Range covered by one correlation lag, in meters.
    pub range_bin: f64,
    pub sequence_duration: f64,
    pub pri: f64,
    pub cpi: f64,
    /// Doppler bin width expressed as radial velocity, in m/s.
    pub velocity_bin: f64,
    pub max_unambiguous_velocity: f64,
    pub max_unambiguous_range: f64,
    pub frame_rate: f64,
}

/// Evaluate the closed-form parameter expressions for `config`.
pub fn derive(config: &SystemConfig) -> Result<DerivedParams> {
    config.validate()?;
    let c = config.speed_of_light;
    let wavelength = c / config.carrier_frequency;
    let range_bin = c / (2.0 * config.sample_rate);
    let sequence_duration = config.sequence_length as f64 / config.sample_rate;
    let pri = config.pri_sequences as f64 * sequence_duration;
    let cpi = config.cpi_pulses as f64 * pri;
    Ok(DerivedParams {
        sequence_length: config.sequence_length,
        cpi_pulses: config.cpi_pulses,
        sample_rate: config.sample_rate,
        carrier_frequency: config.carrier_frequency,
        speed_of_light: c,
        wavelength,
        range_bin,
        sequence_duration,
        pri,
        cpi,
        velocity_bin: wavelength / (2.0 * cpi),
        max_unambiguous_velocity: wavelength / (4.0 * pri),
        max_unambiguous_range: config.sequence_length as f64 * range_bin,
        frame_rate: 1.0 / cpi,
    })
}

impl DerivedParams {
    /// Index of the zero-Doppler row after the FFT shift.
    pub fn zero_doppler_row(&self) -> usize {
        self.cpi_pulses / 2
    }

    /// Ordered `(name, value, unit)` triples, used by the text and JSON reports.
    pub fn entries(&self) -> Vec<(&'static str, f64, &'static str)> {
        vec![
            ("wavelength", self.wavelength, "m"),
            ("range_bin", self.range_bin, "m"),
            ("sequence_duration", self.sequence_duration, "s"),
            ("pri", self.pri, "s"),
            ("cpi", self.cpi, "s"),
            ("velocity_bin", self.velocity_bin, "m/s"),
            (
                "max_unambiguous_velocity",
                self.max_unambiguous_velocity,
                "m/s",
            ),
            ("max_unambiguous_range", self.max_unambiguous_range, "m"),
            ("frame_rate", self.frame_rate, "Hz"),
        ]
    }
}

pub(crate) fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

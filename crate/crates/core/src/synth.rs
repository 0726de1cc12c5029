//! Baseband echo synthesis for point scatterers.
//!
//! Each scatterer contributes `a · exp(-j4πr/λ) · ref(n - τ)` where `τ = r / range_bin`
//! samples and the delay is applied circularly as a linear phase ramp on the
//! reference spectrum, so sub-sample motion stays smooth. Range is frozen for the
//! duration of one pulse (stop-and-hop); Doppler appears only through the carrier
//! phase and range evolution between pulses.
//!
//! Noise bookkeeping: `snr_db` is the per-sample SNR of a unit-amplitude
//! scatterer against a unit-modulus reference, so the noise variance per complex
//! sample is `σ² = 10^(-snr_db/10)`. The correlator divides by `N`: the echo peak
//! stays at 1 while white noise drops to `σ²/N` per range bin, giving a
//! post-correlation peak SNR of `snr_db + 10·log10(N)` (about 39.1 dB for
//! `N = 8192`). Use [`per_sample_snr_db`] to specify a post-correlation SNR.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::DerivedParams;
use crate::scalar::Real;
use crate::scene::ScattererState;
use crate::waveform::ComplexSequence;

/// Received samples for one pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseBlock<T> {
    pub samples: Vec<Complex<T>>,
    pub pulse_time: f64,
}

const REANCHOR: usize = 64;

/// Deterministic per-pulse noise stream: pulses can be synthesized in any order
/// or in parallel and still reproduce bit-identical blocks.
pub fn pulse_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Noise variance per complex sample for a per-sample SNR.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Post-correlation peak SNR of a unit scatterer for a per-sample SNR.
pub fn post_correlation_snr_db(sequence_length: usize, snr_db: f64) -> f64 {
    snr_db + 10.0 * (sequence_length as f64).log10()
}

/// Per-sample SNR that yields the given post-correlation peak SNR.
pub fn per_sample_snr_db(sequence_length: usize, post_correlation_db: f64) -> f64 {
    post_correlation_db - 10.0 * (sequence_length as f64).log10()
}

pub struct PulseSynthesizer<T: Real> {
    params: DerivedParams,
    reference_spectrum: Vec<Complex<f64>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> PulseSynthesizer<T> {
    pub fn new(reference: &ComplexSequence<T>, params: &DerivedParams) -> Result<Self> {
        let n = params.sequence_length;
        if reference.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: reference.len(),
            });
        }
        let mut spectrum: Vec<Complex<f64>> = reference
            .samples
            .iter()
            .map(|c| Complex::new(c.re.to_real(), c.im.to_real()))
            .collect();
        FftPlanner::<f64>::new()
            .plan_fft_forward(n)
            .process(&mut spectrum);
        Ok(Self {
            params: *params,
            reference_spectrum: spectrum,
            inverse: FftPlanner::<T>::new().plan_fft_inverse(n),
        })
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    /// Synthesize one pulse. `snr_db = None` produces a noise-free block.
    pub fn synthesize<R: Rng + ?Sized>(
        &self,
        scatterers: &[ScattererState],
        snr_db: Option<f64>,
        rng: &mut R,
        pulse_time: f64,
    ) -> PulseBlock<T> {
        let n = self.params.sequence_length;
        let mut samples = vec![Complex::<T>::default(); n];

        if !scatterers.is_empty() {
            let mut acc = vec![Complex::<f64>::default(); n];
            for s in scatterers {
                self.accumulate(&mut acc, s);
            }
            let scale = 1.0 / n as f64;
            for ((out, a), r) in samples.iter_mut().zip(&acc).zip(&self.reference_spectrum) {
                let v = a * r * scale;
                *out = Complex::new(T::from_real(v.re), T::from_real(v.im));
            }
            let mut scratch = vec![Complex::default(); self.inverse.get_inplace_scratch_len()];
            self.inverse
                .process_with_scratch(&mut samples, &mut scratch);
        }

        if let Some(snr) = snr_db {
            let sigma = (noise_variance(snr) / 2.0).sqrt();
            for x in samples.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *x = *x + Complex::new(T::from_real(sigma * re), T::from_real(sigma * im));
            }
        }

        PulseBlock {
            samples,
            pulse_time,
        }
    }

    /// Add `gain · exp(-j2π·k·τ/N)` over signed frequency index `k` to `acc`.
    ///
    /// The Nyquist bin gets `cos(π·τ)`, the mean of its two aliases, so the
    /// delay kernel is real-valued and sub-bin motion adds no spurious phase.
    fn accumulate(&self, acc: &mut [Complex<f64>], s: &ScattererState) {
        let n = acc.len();
        let half = n / 2;
        let p = &self.params;
        let gain = Complex::from_polar(s.amplitude, -4.0 * PI * s.range / p.wavelength);
        let delay = s.range / p.range_bin;
        let theta = -TAU * delay / n as f64;
        let step = Complex::from_polar(1.0, theta);
        let positive = if n.is_multiple_of(2) { half } else { half + 1 };
        let signed = |k: usize| {
            if k < positive {
                k as f64
            } else {
                k as f64 - n as f64
            }
        };

        let mut z = Complex::new(1.0, 0.0);
        for (k, a) in acc.iter_mut().enumerate() {
            if n.is_multiple_of(2) && k == half {
                *a += gain * (theta * half as f64).cos();
                continue;
            }
            if k % REANCHOR == 0 || (n.is_multiple_of(2) && k == half + 1) {
                z = Complex::from_polar(1.0, theta * signed(k));
            } else {
                z *= step;
            }
            *a += gain * z;
        }
    }
}

/// Synthesize a single pulse with a freshly planned synthesizer.
pub fn synthesize_pulse<T: Real, R: Rng + ?Sized>(
    reference: &ComplexSequence<T>,
    scatterers: &[ScattererState],
    params: &DerivedParams,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<PulseBlock<T>> {
    Ok(PulseSynthesizer::new(reference, params)?.synthesize(scatterers, snr_db, rng, 0.0))
}

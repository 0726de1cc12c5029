//! Zadoff-Chu probing sequence and correlation ranging.
//!
//! Correlation is circular and evaluated in the frequency domain. The output is
//! scaled by `1/N` relative to the plain lag sum `Σ rx[n+d]·conj(ref[n])`, so a
//! unit-amplitude echo at an integer delay `d` gives `|bins[d]| = 1`. Under this
//! convention a Zadoff-Chu reference (flat `|R_k|² = N` spectrum) satisfies
//! `Σ|bins|² = Σ|rx|² / N`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::gcd;
use crate::scalar::Real;
use crate::synth::PulseBlock;

/// Unit-modulus transmit reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence<T> {
    pub samples: Vec<Complex<T>>,
}

impl<T> ComplexSequence<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Correlator output for one pulse. Bin `d` covers `d · range_bin` meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProfile<T> {
    pub bins: Vec<Complex<T>>,
    pub pulse_index: usize,
}

/// Generate a Zadoff-Chu sequence of `length` samples with root index `root`.
///
/// Even length: `x[n] = exp(-jπ·u·n²/N)`. Odd length: `x[n] = exp(-jπ·u·n(n+1)/N)`.
/// The exponent numerator is reduced modulo `2N` in integer arithmetic, so the
/// phase stays exact for long sequences.
pub fn zadoff_chu<T: Real>(length: usize, root: usize) -> Result<ComplexSequence<T>> {
    if length < 2 {
        return Err(Error::Config(format!(
            "Zadoff-Chu length must be at least 2, got {length}"
        )));
    }
    if root == 0 || gcd(root, length) != 1 {
        return Err(Error::Config(format!(
            "Zadoff-Chu root {root} is not coprime with length {length}"
        )));
    }
    let n_total = length as u128;
    let modulus = 2 * n_total;
    let root = root as u128 % modulus;
    let odd = length % 2 == 1;
    let samples = (0..n_total)
        .map(|n| {
            let quad = if odd { n * (n + 1) } else { n * n } % modulus;
            let numerator = (root * quad) % modulus;
            let phase = -std::f64::consts::PI * numerator as f64 / length as f64;
            Complex::new(T::from_real(phase.cos()), T::from_real(phase.sin()))
        })
        .collect();
    Ok(ComplexSequence { samples })
}

/// Frequency-domain circular correlator against a fixed reference.
///
/// FFT plans and the reference spectrum are immutable after construction; one
/// correlator can be shared by any number of threads.
pub struct Correlator<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    /// `conj(FFT(reference)) / N²`.
    reference_conj: Vec<Complex<T>>,
}

impl<T: Real> std::fmt::Debug for Correlator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Correlator")
            .field("len", &self.len())
            .finish()
    }
}

impl<T: Real> Correlator<T> {
    pub fn new(reference: &ComplexSequence<T>) -> Self {
        let n = reference.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut spectrum = reference.samples.clone();
        forward.process(&mut spectrum);
        let scale = T::from_real(1.0 / (n as f64 * n as f64));
        let reference_conj = spectrum.into_iter().map(|c| c.conj() * scale).collect();
        Self {
            forward,
            inverse,
            reference_conj,
        }
    }

    pub fn len(&self) -> usize {
        self.reference_conj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reference_conj.is_empty()
    }

    /// Scratch length needed by [`Correlator::correlate_in_place`].
    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    /// Replace `buffer` (a received block) by its correlation with the reference.
    pub fn correlate_in_place(
        &self,
        buffer: &mut [Complex<T>],
        scratch: &mut [Complex<T>],
    ) -> Result<()> {
        if buffer.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: buffer.len(),
            });
        }
        self.forward.process_with_scratch(buffer, scratch);
        for (x, r) in buffer.iter_mut().zip(&self.reference_conj) {
            *x = *x * *r;
        }
        self.inverse.process_with_scratch(buffer, scratch);
        Ok(())
    }

    pub fn range_profile(&self, rx: &PulseBlock<T>, pulse_index: usize) -> Result<RangeProfile<T>> {
        let mut bins = rx.samples.clone();
        let mut scratch = vec![Complex::default(); self.scratch_len()];
        self.correlate_in_place(&mut bins, &mut scratch)?;
        Ok(RangeProfile { bins, pulse_index })
    }
}

/// One-shot correlation of `rx` against `reference`. Plans a fresh FFT per call;
/// use a [`Correlator`] in loops.
pub fn range_profile<T: Real>(
    rx: &PulseBlock<T>,
    reference: &ComplexSequence<T>,
    pulse_index: usize,
) -> Result<RangeProfile<T>> {
    if rx.samples.len() != reference.len() {
        return Err(Error::LengthMismatch {
            expected: reference.len(),
            actual: rx.samples.len(),
        });
    }
    Correlator::new(reference).range_profile(rx, pulse_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn block(samples: Vec<Complex<f64>>) -> PulseBlock<f64> {
        PulseBlock {
            samples,
            pulse_time: 0.0,
        }
    }

    #[test]
    fn length_four_root_one_by_hand() {
        let seq = zadoff_chu::<f64>(4, 1).unwrap();
        let e = Complex::from_polar(1.0, -std::f64::consts::FRAC_PI_4);
        let expected = [Complex::new(1.0, 0.0), e, Complex::new(-1.0, 0.0), e];
        for (got, want) in seq.samples.iter().zip(expected) {
            assert!((got - want).norm() < 1e-15, "{got} vs {want}");
        }
    }

    #[test]
    fn odd_length_uses_n_times_n_plus_one() {
        let seq = zadoff_chu::<f64>(5, 2).unwrap();
        for (n, x) in seq.samples.iter().enumerate() {
            let n = n as f64;
            let want = Complex::from_polar(1.0, -std::f64::consts::PI * 2.0 * n * (n + 1.0) / 5.0);
            assert!((x - want).norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_root_and_length() {
        assert!(zadoff_chu::<f64>(8192, 2).is_err());
        assert!(zadoff_chu::<f64>(8192, 0).is_err());
        assert!(zadoff_chu::<f64>(1, 1).is_err());
        assert!(zadoff_chu::<f64>(12, 9).is_err());
    }

    #[test]
    fn autocorrelation_is_a_delta() {
        let seq = zadoff_chu::<f64>(1024, 7).unwrap();
        let profile = range_profile(&block(seq.samples.clone()), &seq, 0).unwrap();
        assert_relative_eq!(profile.bins[0].norm(), 1.0, epsilon = 1e-12);
        for b in &profile.bins[1..] {
            assert!(b.norm() < 1e-9);
        }
    }

    #[test]
    fn shifted_copy_peaks_at_shift() {
        let seq = zadoff_chu::<f64>(8192, 1).unwrap();
        let mut rx = seq.samples.clone();
        rx.rotate_right(133);
        let profile = range_profile(&block(rx), &seq, 0).unwrap();
        let peak = argmax(&profile.bins);
        assert_eq!(peak, 133);
        assert_relative_eq!(profile.bins[133].norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let seq = zadoff_chu::<f64>(64, 1).unwrap();
        let err = range_profile(&block(vec![Complex::default(); 63]), &seq, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                expected: 64,
                actual: 63
            }
        ));
    }

    #[test]
    fn f32_correlation_has_unit_peak() {
        let seq = zadoff_chu::<f32>(8192, 1).unwrap();
        let mut rx = seq.samples.clone();
        rx.rotate_right(40);
        let profile = range_profile(
            &PulseBlock {
                samples: rx,
                pulse_time: 0.0,
            },
            &seq,
            3,
        )
        .unwrap();
        assert_eq!(profile.pulse_index, 3);
        assert!((profile.bins[40].norm() - 1.0).abs() < 1e-4);
    }

    fn argmax(bins: &[Complex<f64>]) -> usize {
        bins.iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(i, _)| i)
            .unwrap()
    }
}

//! Scalar abstraction for the signal-domain math.
//!
//! Sample buffers, FFTs and the range-Doppler map are generic over [`Real`].
//! Physical bookkeeping (ranges, phases, times) always runs in `f64`: a carrier
//! phase of `4π·r/λ` at 160 GHz reaches tens of thousands of radians, well past
//! what `f32` can resolve.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst};
use rustfft::FftNum;

/// Floating point sample type: `f32` or `f64`.
pub trait Real: FftNum + Float + FloatConst + Default + Display + Debug {
    fn from_real(value: f64) -> Self;

    fn to_real(self) -> f64;

    /// Branch-free `log2` for positive finite inputs that the compiler can
    /// vectorize. Zero and subnormal inputs return a value at or below the
    /// smallest normal exponent instead of `-inf`.
    fn fast_log2(self) -> Self;

    /// Short name used in reports and file headers.
    const NAME: &'static str;
}

/// `log2(m)` for `m` in `[√½, √2]` via the atanh series in `t = (m-1)/(m+1)`.
#[inline(always)]
fn log2_reduced<T: Float>(m: T, coeffs: &[T]) -> T {
    let t = (m - T::one()) / (m + T::one());
    let t2 = t * t;
    let mut acc = T::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * t2 + c;
    }
    acc * t
}

const SQRT2_F32_BITS: u32 = 0x3FB5_04F3;
const SQRT2_F64_BITS: u64 = 0x3FF6_A09E_667F_3BCD;

impl Real for f32 {
    #[inline]
    fn from_real(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn to_real(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn fast_log2(self) -> Self {
        // 2/ln2 · 1/(2k+1), k = 0..5; |t| ≤ 0.172 leaves a truncation error below 1e-9.
        const C: [f32; 6] = [
            2.885_39,
            0.961_796_7,
            0.577_078,
            0.412_198_6,
            0.320_598_9,
            0.262_308_2,
        ];
        let bits = self.to_bits();
        let mantissa = (bits & 0x007F_FFFF) | 0x3F80_0000;
        let high = (mantissa > SQRT2_F32_BITS) as u32;
        let exponent = ((bits >> 23) & 0xFF) as i32 - 127 + high as i32;
        let m = f32::from_bits(mantissa - (high << 23));
        exponent as f32 + log2_reduced(m, &C)
    }

    const NAME: &'static str = "f32";
}

impl Real for f64 {
    #[inline]
    fn from_real(value: f64) -> Self {
        value
    }

    #[inline]
    fn to_real(self) -> f64 {
        self
    }

    #[inline(always)]
    fn fast_log2(self) -> Self {
        // 2/ln2 · 1/(2k+1), k = 0..9; |t| ≤ 0.172 leaves a truncation error below 1e-15.
        const C: [f64; 10] = [
            2.885_390_081_777_927,
            0.961_796_693_925_975_8,
            0.577_078_016_355_585_4,
            0.412_198_583_111_132_4,
            0.320_598_897_975_325_2,
            0.262_308_189_252_538_8,
            0.221_953_083_213_686_7,
            0.192_359_338_785_195_2,
            0.169_728_828_339_878_1,
            0.151_862_635_883_048_8,
        ];
        let bits = self.to_bits();
        let mantissa = (bits & 0x000F_FFFF_FFFF_FFFF) | 0x3FF0_0000_0000_0000;
        let high = (mantissa > SQRT2_F64_BITS) as u64;
        let exponent = ((bits >> 52) & 0x7FF) as i64 - 1023 + high as i64;
        let m = f64::from_bits(mantissa - (high << 52));
        exponent as f64 + log2_reduced(m, &C)
    }

    const NAME: &'static str = "f64";
}

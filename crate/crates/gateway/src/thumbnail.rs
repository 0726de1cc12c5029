//! Range-Doppler thumbnails: max-pooled to at most 256 × 256 cells and
//! quantized to one byte per cell over a fixed dB span.

use dband_core::rd::RangeDopplerMap;
use dband_core::Real;

pub const DB_MIN: f64 = -60.0;
pub const DB_MAX: f64 = 0.0;
pub const MAX_DIM: usize = 256;

const LEVELS: f64 = 255.0;

/// Monotone map of dB onto 0..=255; values outside the span saturate.
pub fn quantize_db(db: f64) -> u8 {
    if db.is_nan() {
        return 0;
    }
    ((db - DB_MIN) / (DB_MAX - DB_MIN) * LEVELS)
        .round()
        .clamp(0.0, LEVELS) as u8
}

pub fn dequantize(code: u8) -> f64 {
    DB_MIN + f64::from(code) * (DB_MAX - DB_MIN) / LEVELS
}

/// Geometry of the pooled grid: rows are Doppler, columns are range bins
/// `[first_range_bin, first_range_bin + range_bins)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThumbnailLayout {
    pub first_range_bin: usize,
    pub range_bins: usize,
    pub doppler_bins: usize,
    pub row_decimation: usize,
    pub col_decimation: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ThumbnailLayout {
    pub fn new(
        doppler_bins: usize,
        first_range_bin: usize,
        range_bins: usize,
        max_dim: usize,
    ) -> Self {
        assert!(doppler_bins > 0 && range_bins > 0 && max_dim > 0);
        let row_decimation = doppler_bins.div_ceil(max_dim);
        let col_decimation = range_bins.div_ceil(max_dim);
        Self {
            first_range_bin,
            range_bins,
            doppler_bins,
            row_decimation,
            col_decimation,
            rows: doppler_bins.div_ceil(row_decimation),
            cols: range_bins.div_ceil(col_decimation),
        }
    }

    /// Max-pool the window of `map` and quantize, row-major.
    pub fn render<T: Real>(&self, map: &RangeDopplerMap<T>) -> Vec<u8> {
        assert_eq!(
            map.doppler_bins(),
            self.doppler_bins,
            "map Doppler size differs from layout"
        );
        assert!(
            self.first_range_bin + self.range_bins <= map.range_bins(),
            "window exceeds map"
        );
        let mut pooled = vec![f64::NEG_INFINITY; self.rows * self.cols];
        for j in 0..self.range_bins {
            let col = j / self.col_decimation;
            let series = map.column(self.first_range_bin + j);
            for (d, v) in series.iter().enumerate() {
                let cell = &mut pooled[(d / self.row_decimation) * self.cols + col];
                *cell = cell.max(v.to_real());
            }
        }
        pooled.into_iter().map(quantize_db).collect()
    }
}

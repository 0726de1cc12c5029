//! Software twin of a 160 GHz integrated sensing and communication radar.
//!
//! The signal chain is generic over the sample type ([`Real`]: `f32` or `f64`):
//!
//! ```text
//! scene ─► synth ─► waveform (correlate) ─► rd (clutter, Hann, Doppler FFT)
//!                                              │
//!            fsm ◄─ microdoppler ◄─ track ◄─ detect
//! ```
//!
//! Concrete aliases for both precisions are exported at the crate root.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activity;
pub mod config;
pub mod detect;
mod error;
pub mod fsm;
pub mod io;
pub mod microdoppler;
pub mod params;
pub mod pipeline;
pub mod rd;
pub mod scalar;
pub mod scene;
pub mod synth;
pub mod track;
pub mod waveform;

pub use activity::Activity;
pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use params::{derive, DerivedParams, SystemConfig};
pub use scalar::Real;
pub use scene::ScenarioScript;

pub type ComplexSequenceF32 = waveform::ComplexSequence<f32>;
pub type ComplexSequenceF64 = waveform::ComplexSequence<f64>;
pub type CorrelatorF32 = waveform::Correlator<f32>;
pub type CorrelatorF64 = waveform::Correlator<f64>;
pub type RangeProfileF32 = waveform::RangeProfile<f32>;
pub type RangeProfileF64 = waveform::RangeProfile<f64>;
pub type PulseBlockF32 = synth::PulseBlock<f32>;
pub type PulseBlockF64 = synth::PulseBlock<f64>;
pub type RangeDopplerMapF32 = rd::RangeDopplerMap<f32>;
pub type RangeDopplerMapF64 = rd::RangeDopplerMap<f64>;
pub type DspStageF32 = pipeline::DspStage<f32>;
pub type DspStageF64 = pipeline::DspStage<f64>;

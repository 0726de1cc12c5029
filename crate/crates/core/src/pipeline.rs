//! Frame loop: synthesis → correlation + range-Doppler → decisions.
//!
//! [`run_pipeline`] runs the three stages on separate threads connected by
//! single-slot channels, so synthesis of frame `k+1` overlaps the DSP of frame
//! `k`. Each frame is moved from stage to stage; no buffers are shared.

use std::time::Instant;

use crossbeam_channel::bounded;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activity::Activity;
use crate::config::PipelineConfig;
use crate::detect::{scope_max, scope_median_db, Detection, DetectionScope, HysteresisState};
use crate::error::{Error, Result};
use crate::fsm::fsm_step;
use crate::microdoppler::{drift, microdoppler_velocity_gated, MicroDopplerTrace};
use crate::params::DerivedParams;
use crate::rd::{RangeDopplerMap, RangeDopplerProcessor};
use crate::scalar::Real;
use crate::scene::ScenarioScript;
use crate::synth::{pulse_rng, PulseBlock, PulseSynthesizer};
use crate::track::{track_lifecycle, TargetTrack};
use crate::waveform::{zadoff_chu, Correlator, RangeProfile};

/// Noise stream salt for the target-free calibration CPI.
const CALIBRATION_SALT: u64 = 0x5EED_CA1B_0000_0001;

/// One CPI worth of received pulses.
#[derive(Debug, Clone)]
pub struct Frame<T> {
    pub index: u64,
    pub start_time: f64,
    pub pulses: Vec<PulseBlock<T>>,
    pub ground_truth: Option<Activity>,
}

/// Producer of CPI frames: the scene simulator or a recorded capture.
pub trait FrameSource<T>: Send {
    fn params(&self) -> &DerivedParams;

    /// A target-free CPI for noise-floor calibration, if the source can make one.
    fn calibration_frame(&mut self) -> Result<Option<Frame<T>>>;

    fn next_frame(&mut self) -> Result<Option<Frame<T>>>;
}

/// Synthesizes frames from a scripted scene.
pub struct ScenarioSource<T: Real> {
    script: ScenarioScript,
    synth: PulseSynthesizer<T>,
    next: u64,
    frames: u64,
}

impl<T: Real> ScenarioSource<T> {
    pub fn new(script: ScenarioScript, params: &DerivedParams, zc_root: usize) -> Result<Self> {
        script.validate(params)?;
        let reference = zadoff_chu(params.sequence_length, zc_root)?;
        let frames = (script.duration / params.cpi + 1e-9).floor() as u64;
        Ok(Self {
            script,
            synth: PulseSynthesizer::new(&reference, params)?,
            next: 0,
            frames,
        })
    }

    /// Override the number of frames (defaults to `floor(duration / cpi)`).
    pub fn with_frames(mut self, frames: u64) -> Self {
        self.frames = frames;
        self
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    pub fn script_mut(&mut self) -> &mut ScenarioScript {
        &mut self.script
    }

    /// Synthesize frame `index` of `script`. Pulses are generated in parallel,
    /// each from its own noise stream keyed by the global pulse index.
    pub fn synthesize_frame(&self, index: u64) -> Frame<T> {
        synthesize_frame(&self.synth, &self.script, index, self.script.seed)
    }
}

pub fn synthesize_frame<T: Real>(
    synth: &PulseSynthesizer<T>,
    script: &ScenarioScript,
    index: u64,
    seed: u64,
) -> Frame<T> {
    let p = *synth.params();
    let first = index * p.cpi_pulses as u64;
    let pulses = (0..p.cpi_pulses as u64)
        .into_par_iter()
        .map(|k| {
            let pulse = first + k;
            let t = pulse as f64 * p.pri;
            let scatterers = script.scatterers_at(t);
            synth.synthesize(&scatterers, script.snr_db, &mut pulse_rng(seed, pulse), t)
        })
        .collect();
    let start_time = first as f64 * p.pri;
    Frame {
        index,
        start_time,
        pulses,
        ground_truth: Some(script.activity_at(start_time + 0.5 * p.cpi)),
    }
}

impl<T: Real> FrameSource<T> for ScenarioSource<T> {
    fn params(&self) -> &DerivedParams {
        self.synth.params()
    }

    fn calibration_frame(&mut self) -> Result<Option<Frame<T>>> {
        let clutter_only = ScenarioScript {
            segments: Vec::new(),
            ..self.script.clone()
        };
        let mut frame = synthesize_frame(
            &self.synth,
            &clutter_only,
            0,
            self.script.seed ^ CALIBRATION_SALT,
        );
        frame.ground_truth = Some(Activity::Absent);
        Ok(Some(frame))
    }

    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        if self.next >= self.frames {
            return Ok(None);
        }
        let frame = self.synthesize_frame(self.next);
        self.next += 1;
        Ok(Some(frame))
    }
}

/// Correlation and range-Doppler processing for one frame.
pub struct DspStage<T: Real> {
    params: DerivedParams,
    correlator: Correlator<T>,
    doppler: RangeDopplerProcessor<T>,
}

impl<T: Real> DspStage<T> {
    pub fn new(params: &DerivedParams, zc_root: usize) -> Result<Self> {
        let reference = zadoff_chu(params.sequence_length, zc_root)?;
        Ok(Self {
            params: *params,
            correlator: Correlator::new(&reference),
            doppler: RangeDopplerProcessor::new(params),
        })
    }

    pub fn params(&self) -> &DerivedParams {
        &self.params
    }

    /// Correlate every pulse (in place, in parallel) into range profiles.
    pub fn range_profiles(
        &self,
        pulses: Vec<PulseBlock<T>>,
        first_pulse: usize,
    ) -> Result<Vec<RangeProfile<T>>> {
        let scratch_len = self.correlator.scratch_len();
        pulses
            .into_par_iter()
            .enumerate()
            .map_init(
                || vec![Default::default(); scratch_len],
                |scratch, (k, block)| {
                    let mut bins = block.samples;
                    self.correlator.correlate_in_place(&mut bins, scratch)?;
                    Ok(RangeProfile {
                        bins,
                        pulse_index: first_pulse + k,
                    })
                },
            )
            .collect()
    }

    pub fn process(&self, frame: Frame<T>) -> Result<RangeDopplerMap<T>> {
        let first = frame.index as usize * self.params.cpi_pulses;
        let profiles = self.range_profiles(frame.pulses, first)?;
        let center = frame.start_time + 0.5 * self.params.cpi;
        self.doppler.process(&profiles, frame.index, center)
    }
}

/// Per-frame record of every pipeline output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEvent {
    pub frame_index: u64,
    /// CPI center time in seconds.
    pub frame_time: f64,
    pub detected: bool,
    pub power_db: f64,
    pub detection_range: f64,
    pub detection_velocity: f64,
    pub track_range: Option<f64>,
    pub track_velocity: Option<f64>,
    /// Smoothed micro-Doppler velocity, m/s.
    pub v_md: f64,
    pub drift: f64,
    pub state: Activity,
    pub ground_truth: Option<Activity>,
    /// Wall time of DSP and decision stages for this frame, seconds.
    pub compute_time: f64,
}

/// Detection, tracking and classification state carried across frames.
#[derive(Debug, Clone)]
pub struct DecisionStage {
    config: PipelineConfig,
    params: DerivedParams,
    scope: DetectionScope,
    hysteresis: HysteresisState,
    track: Option<TargetTrack>,
    trace: MicroDopplerTrace,
    state: Activity,
}

/// Decision outputs for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub detection: Detection,
    pub detected: bool,
    pub track: Option<TargetTrack>,
    pub v_md: f64,
    pub drift: f64,
    pub state: Activity,
}

impl DecisionStage {
    pub fn new(
        config: &PipelineConfig,
        params: &DerivedParams,
        noise_floor_db: f64,
    ) -> Result<Self> {
        let scope = config.detection.scope(params)?;
        Ok(Self {
            config: *config,
            params: *params,
            scope,
            hysteresis: config.detection.hysteresis(noise_floor_db)?,
            track: None,
            trace: MicroDopplerTrace::new(config.microdoppler.smoothing_window_s, params.cpi),
            state: Activity::Absent,
        })
    }

    pub fn hysteresis(&self) -> &HysteresisState {
        &self.hysteresis
    }

    pub fn scope(&self) -> &DetectionScope {
        &self.scope
    }

    pub fn state(&self) -> Activity {
        self.state
    }

    pub fn step<T: Real>(&mut self, map: &RangeDopplerMap<T>) -> Result<Decision> {
        let detection = scope_max(map, &self.scope)?;
        self.hysteresis = self.hysteresis.step(detection.power_db);
        self.track = track_lifecycle(
            self.track.take(),
            &self.hysteresis,
            &detection,
            map.frame_index,
            map.frame_time,
            &self.params,
            &self.config.tracking,
        )?;

        let (v_md, drift_m) = match &self.track {
            Some(track) => {
                let roi = &self.config.microdoppler;
                let gate = if roi.noise_gate {
                    self.hysteresis.lower_db
                } else {
                    f64::NEG_INFINITY
                };
                let sample = match microdoppler_velocity_gated(map, track.range(), roi, gate) {
                    Ok(v) => v,
                    // Track coasted outside the map.
                    Err(Error::EmptyRoi) => 0.0,
                    Err(e) => return Err(e),
                };
                let trace = std::mem::replace(
                    &mut self.trace,
                    MicroDopplerTrace::new(
                        self.config.microdoppler.smoothing_window_s,
                        self.params.cpi,
                    ),
                );
                self.trace = trace.push(map.frame_time, sample);
                (
                    self.trace.smoothed,
                    drift(&track.history, self.config.classifier.drift_window_s),
                )
            }
            None => {
                self.trace = MicroDopplerTrace::new(
                    self.config.microdoppler.smoothing_window_s,
                    self.params.cpi,
                );
                (0.0, 0.0)
            }
        };

        self.state = fsm_step(
            self.state,
            self.hysteresis.active,
            drift_m,
            v_md,
            &self.config.classifier,
        );
        Ok(Decision {
            detection,
            detected: self.hysteresis.active,
            track: self.track.clone(),
            v_md,
            drift: drift_m,
            state: self.state,
        })
    }

    pub fn event<T: Real>(
        &mut self,
        map: &RangeDopplerMap<T>,
        ground_truth: Option<Activity>,
        dsp_seconds: f64,
    ) -> Result<FrameEvent> {
        let start = Instant::now();
        let d = self.step(map)?;
        Ok(FrameEvent {
            frame_index: map.frame_index,
            frame_time: map.frame_time,
            detected: d.detected,
            power_db: d.detection.power_db,
            detection_range: d.detection.range,
            detection_velocity: d.detection.velocity,
            track_range: d.track.as_ref().map(TargetTrack::range),
            track_velocity: d.track.as_ref().map(TargetTrack::velocity),
            v_md: d.v_md,
            drift: d.drift,
            state: d.state,
            ground_truth,
            compute_time: dsp_seconds + start.elapsed().as_secs_f64(),
        })
    }
}

/// Detector noise floor: configured, or the median scope power of a target-free
/// CPI plus the configured offset.
pub fn calibrate_noise_floor<T: Real>(
    dsp: &DspStage<T>,
    source: &mut dyn FrameSource<T>,
    config: &PipelineConfig,
) -> Result<f64> {
    if let Some(floor) = config.detection.noise_floor_db {
        return Ok(floor);
    }
    let frame = source.calibration_frame()?.ok_or_else(|| {
        Error::Config("source has no calibration CPI; set detection.noise_floor_db".into())
    })?;
    let map = dsp.process(frame)?;
    let scope = config.detection.scope(dsp.params())?;
    Ok(scope_median_db(&map, &scope)? + config.detection.floor_offset_db)
}

/// Error raised while processing a specific frame.
#[derive(Debug, thiserror::Error)]
#[error("frame {frame}: {source}")]
pub struct FrameError {
    pub frame: u64,
    #[source]
    pub source: Error,
}

/// Summary of a completed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub frames: u64,
    pub noise_floor_db: f64,
}

/// Run every frame of `source` through the pipeline, calling `on_frame` in order.
///
/// Synthesis, DSP and decisions run concurrently on three threads; frames are
/// handed over through single-slot channels.
pub fn run_pipeline<T, S, F>(
    mut source: S,
    config: &PipelineConfig,
    mut on_frame: F,
) -> std::result::Result<RunSummary, FrameError>
where
    T: Real,
    S: FrameSource<T>,
    F: FnMut(&FrameEvent, &RangeDopplerMap<T>) -> Result<()>,
{
    let setup = |e| FrameError {
        frame: 0,
        source: e,
    };
    let params = config.validate().map_err(setup)?;
    let dsp = DspStage::<T>::new(&params, config.system.zc_root).map_err(setup)?;
    let noise_floor_db = calibrate_noise_floor(&dsp, &mut source, config).map_err(setup)?;
    let mut decisions = DecisionStage::new(config, &params, noise_floor_db).map_err(setup)?;

    let (frame_tx, frame_rx) = bounded::<Frame<T>>(1);
    let (map_tx, map_rx) = bounded::<(RangeDopplerMap<T>, Option<Activity>, f64)>(1);

    std::thread::scope(|scope| {
        let producer = scope.spawn(move || -> std::result::Result<(), FrameError> {
            let mut next = 0;
            loop {
                let frame = source.next_frame().map_err(|source| FrameError {
                    frame: next,
                    source,
                })?;
                let Some(frame) = frame else { return Ok(()) };
                next = frame.index + 1;
                if frame_tx.send(frame).is_err() {
                    return Ok(());
                }
            }
        });

        let dsp = &dsp;
        let worker = scope.spawn(move || -> std::result::Result<(), FrameError> {
            for frame in frame_rx {
                let index = frame.index;
                let truth = frame.ground_truth;
                let start = Instant::now();
                let map = dsp.process(frame).map_err(|source| FrameError {
                    frame: index,
                    source,
                })?;
                if map_tx
                    .send((map, truth, start.elapsed().as_secs_f64()))
                    .is_err()
                {
                    break;
                }
            }
            Ok(())
        });

        let mut frames = 0;
        let mut outcome = Ok(());
        for (map, truth, dsp_seconds) in &map_rx {
            let index = map.frame_index;
            let result = decisions
                .event(&map, truth, dsp_seconds)
                .and_then(|event| on_frame(&event, &map));
            if let Err(source) = result {
                outcome = Err(FrameError {
                    frame: index,
                    source,
                });
                break;
            }
            frames += 1;
        }
        drop(map_rx);

        let worker_result = worker.join().expect("DSP stage panicked");
        let producer_result = producer.join().expect("synthesis stage panicked");
        outcome.and(producer_result).and(worker_result)?;
        Ok(RunSummary {
            frames,
            noise_floor_db,
        })
    })
}

/// Run a scripted scene to completion and collect the events.
pub fn run_scenario<T: Real>(
    script: &ScenarioScript,
    config: &PipelineConfig,
) -> std::result::Result<Vec<FrameEvent>, FrameError> {
    let params = config
        .validate()
        .map_err(|source| FrameError { frame: 0, source })?;
    let source = ScenarioSource::<T>::new(script.clone(), &params, config.system.zc_root)
        .map_err(|source| FrameError { frame: 0, source })?;
    let mut events = Vec::new();
    run_pipeline(source, config, |event, _| {
        events.push(event.clone());
        Ok(())
    })?;
    Ok(events)
}

/// Per-CPI compute statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub precision: &'static str,
    pub frames: usize,
    pub threads: usize,
    pub cpi_s: f64,
    pub mean_s: Option<f64>,
    pub p95_s: Option<f64>,
    pub min_s: Option<f64>,
    pub max_s: Option<f64>,
    /// `cpi / mean compute time`; above 1 means faster than real time.
    pub real_time_factor: Option<f64>,
}

impl BenchReport {
    pub fn from_durations(precision: &'static str, cpi_s: f64, mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let mean = (n > 0).then(|| samples.iter().sum::<f64>() / n as f64);
        let p95 = (n > 0).then(|| samples[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]);
        Self {
            precision,
            frames: n,
            threads: rayon::current_num_threads(),
            cpi_s,
            mean_s: mean,
            p95_s: p95,
            min_s: samples.first().copied(),
            max_s: samples.last().copied(),
            real_time_factor: mean.map(|m| cpi_s / m),
        }
    }
}

/// Standard benchmark scene: one walking target with clutter at 20 dB SNR.
pub fn bench_scene() -> ScenarioScript {
    use crate::scene::{ClutterSpec, HumanModel, Segment};
    ScenarioScript {
        duration: 1.0,
        snr_db: Some(20.0),
        seed: 1,
        clutter: vec![
            ClutterSpec {
                range: 1.5,
                amplitude: 2.0,
            },
            ClutterSpec {
                range: 6.0,
                amplitude: 1.0,
            },
        ],
        segments: vec![Segment::walking(0.0, 3.0, 0.5)],
        human: HumanModel::default(),
    }
}

/// Time DSP and decision stages over `n_frames` CPIs. Synthesis is excluded: it
/// stands in for the radar front end.
pub fn bench<T: Real>(config: &PipelineConfig, n_frames: usize) -> Result<BenchReport> {
    let params = config.validate()?;
    if n_frames == 0 {
        return Ok(BenchReport::from_durations(T::NAME, params.cpi, Vec::new()));
    }
    let source = ScenarioSource::<T>::new(bench_scene(), &params, config.system.zc_root)?;
    let dsp = DspStage::<T>::new(&params, config.system.zc_root)?;
    let template = source.synthesize_frame(0);
    let mut decisions = DecisionStage::new(config, &params, -60.0)?;
    let mut samples = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let mut frame = template.clone();
        frame.index = k as u64;
        frame.start_time = k as f64 * params.cpi;
        let start = Instant::now();
        let map = dsp.process(frame)?;
        decisions.step(&map)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(BenchReport::from_durations(T::NAME, params.cpi, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_bench_reports_nothing() {
        let report = bench::<f32>(&PipelineConfig::default(), 0).unwrap();
        assert_eq!(report.frames, 0);
        assert!(report.mean_s.is_none() && report.real_time_factor.is_none());
    }

    #[test]
    fn report_statistics_are_ordered() {
        let r = BenchReport::from_durations("f64", 0.1, vec![0.05, 0.01, 0.02, 0.09, 0.03]);
        assert_eq!(r.p95_s, Some(0.09));
        assert_eq!(r.min_s, Some(0.01));
        let mean = r.mean_s.unwrap();
        assert!((mean - 0.04).abs() < 1e-12);
        assert!(mean <= r.p95_s.unwrap());
        assert!((r.real_time_factor.unwrap() - 2.5).abs() < 1e-9);
    }
}

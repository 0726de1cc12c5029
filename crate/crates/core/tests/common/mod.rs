#![allow(dead_code)]

use dband_core::pipeline::{DspStage, ScenarioSource};
use dband_core::rd::RangeDopplerMap;
use dband_core::scene::{ClutterSpec, HumanModel, ScattererState, Segment};
use dband_core::{Activity, DerivedParams, PipelineConfig, ScenarioScript};

pub fn params() -> DerivedParams {
    PipelineConfig::default().validate().unwrap()
}

pub fn unit(range: f64) -> ScattererState {
    ScattererState {
        range,
        radial_velocity: 0.0,
        amplitude: 1.0,
    }
}

/// Stand 3 s, walk 3 s at 0.5 m/s, wave 3 s, absent 2 s.
pub fn stand_walk_wave(seed: u64, snr_db: Option<f64>) -> ScenarioScript {
    ScenarioScript {
        duration: 11.0,
        snr_db,
        seed,
        clutter: vec![
            ClutterSpec {
                range: 1.5,
                amplitude: 2.0,
            },
            ClutterSpec {
                range: 8.0,
                amplitude: 1.0,
            },
        ],
        segments: vec![
            Segment::new(0.0, Activity::Standing, 3.0),
            Segment::walking(3.0, 3.0, 0.5),
            Segment::new(6.0, Activity::Waving, 4.5),
            Segment::new(9.0, Activity::Absent, 0.0),
        ],
        human: HumanModel::default(),
    }
}

pub fn single_segment(
    segment: Segment,
    duration: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> ScenarioScript {
    ScenarioScript {
        duration,
        snr_db,
        seed,
        clutter: vec![],
        segments: vec![segment],
        human: HumanModel::default(),
    }
}

/// Range-Doppler map of frame `index` of a script.
pub fn map_of<T: dband_core::Real>(script: &ScenarioScript, index: u64) -> RangeDopplerMap<T> {
    let p = params();
    let source = ScenarioSource::<T>::new(script.clone(), &p, 1).unwrap();
    let dsp = DspStage::<T>::new(&p, 1).unwrap();
    dsp.process(source.synthesize_frame(index)).unwrap()
}

/// Scene with one constant-velocity point scatterer centered on `range` at the
/// middle of frame 0.
pub fn mover(range: f64, velocity: f64) -> ScenarioScript {
    let p = params();
    let start = range - velocity * 0.5 * p.cpi;
    single_segment(Segment::walking(0.0, start, velocity), p.cpi, None, 0)
}

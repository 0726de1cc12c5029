//! Operator-steered scene: a single human target whose activity, range, speed
//! and SNR change when controls are applied at frame boundaries.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dband_core::pipeline::{synthesize_frame, Frame, FrameSource};
use dband_core::scene::{ClutterSpec, HumanModel, Segment};
use dband_core::synth::PulseSynthesizer;
use dband_core::waveform::zadoff_chu;
use dband_core::{Activity, DerivedParams, Real, Result, ScenarioScript};

use crate::protocol::{ControlBounds, ControlError, ControlMessage, SceneState};

const CALIBRATION_SALT: u64 = 0x11FE_CA1B_0000_0002;
const PAUSE_POLL: Duration = Duration::from_millis(50);

/// Static parts of the live scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveSceneConfig {
    pub initial: SceneState,
    pub bounds: ControlBounds,
    pub clutter: Vec<ClutterSpec>,
    pub human: HumanModel,
    pub seed: u64,
    pub start_paused: bool,
}

impl Default for LiveSceneConfig {
    fn default() -> Self {
        Self {
            initial: SceneState::default(),
            bounds: ControlBounds::default(),
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
            human: HumanModel::default(),
            seed: 0,
            start_paused: false,
        }
    }
}

/// Commanded scene state and the script it expands to.
///
/// The script always holds at most one segment, anchored at the last time the
/// state changed; walking targets reverse at the range bounds.
#[derive(Debug, Clone)]
pub struct LiveScene {
    state: SceneState,
    bounds: ControlBounds,
    anchor_time: f64,
    paused: bool,
    applied_seq: u64,
    script: ScenarioScript,
}

impl LiveScene {
    pub fn new(config: &LiveSceneConfig) -> std::result::Result<Self, ControlError> {
        let s = config.initial;
        for c in [
            ControlMessage::SetRange { range_m: s.range_m },
            ControlMessage::SetSpeed {
                speed_mps: s.speed_mps,
            },
            ControlMessage::SetSnr { snr_db: s.snr_db },
        ] {
            config.bounds.check(&c)?;
        }
        let mut scene = Self {
            state: s,
            bounds: config.bounds,
            anchor_time: 0.0,
            paused: config.start_paused,
            applied_seq: 0,
            script: ScenarioScript {
                duration: f64::MAX,
                snr_db: Some(s.snr_db),
                seed: config.seed,
                clutter: config.clutter.clone(),
                segments: Vec::new(),
                human: config.human,
            },
        };
        scene.rebuild();
        Ok(scene)
    }

    pub fn script(&self) -> &ScenarioScript {
        &self.script
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn applied_seq(&self) -> u64 {
        self.applied_seq
    }

    /// Commanded state with the range evaluated at time `t`.
    pub fn state_at(&self, t: f64) -> SceneState {
        SceneState {
            range_m: self.range_at(t),
            ..self.state
        }
    }

    fn range_at(&self, t: f64) -> f64 {
        match self.state.activity {
            Activity::Walking => self.state.range_m + self.state.speed_mps * (t - self.anchor_time),
            _ => self.state.range_m,
        }
    }

    fn rebase(&mut self, t: f64) {
        self.state.range_m = self.range_at(t);
        self.anchor_time = t;
    }

    fn rebuild(&mut self) {
        let s = self.state;
        self.script.snr_db = Some(s.snr_db);
        self.script.segments = match s.activity {
            Activity::Absent => Vec::new(),
            Activity::Walking => vec![Segment::walking(self.anchor_time, s.range_m, s.speed_mps)],
            activity => vec![Segment::new(self.anchor_time, activity, s.range_m)],
        };
    }

    /// Apply control number `seq` at frame boundary `t`.
    pub fn apply(
        &mut self,
        seq: u64,
        control: ControlMessage,
        t: f64,
    ) -> std::result::Result<(), ControlError> {
        self.bounds.check(&control)?;
        self.rebase(t);
        match control {
            ControlMessage::SetActivity { activity } => self.state.activity = activity,
            ControlMessage::SetRange { range_m } => self.state.range_m = range_m,
            ControlMessage::SetSpeed { speed_mps } => self.state.speed_mps = speed_mps,
            ControlMessage::SetSnr { snr_db } => self.state.snr_db = snr_db,
            ControlMessage::Pause => self.paused = true,
            ControlMessage::Resume => self.paused = false,
        }
        self.applied_seq = self.applied_seq.max(seq);
        self.rebuild();
        Ok(())
    }

    /// Prepare the frame covering `[t0, t0 + cpi)`: a walker heading out of
    /// the range bounds turns around at `t0`.
    pub fn advance(&mut self, t0: f64, cpi: f64) {
        if self.state.activity != Activity::Walking {
            return;
        }
        let end = self.range_at(t0 + cpi);
        let v = self.state.speed_mps;
        if (end > self.bounds.range_max_m && v > 0.0) || (end < self.bounds.range_min_m && v < 0.0)
        {
            self.rebase(t0);
            self.state.speed_mps = -v;
            self.rebuild();
        }
    }
}

/// Scene parameters that produced a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSnapshot {
    pub index: u64,
    pub scene: SceneState,
    pub applied_seq: u64,
}

/// Frame source driven by a control queue.
pub struct LiveSource<T: Real> {
    synth: PulseSynthesizer<T>,
    scene: LiveScene,
    controls: Receiver<(u64, ControlMessage)>,
    snapshots: Sender<FrameSnapshot>,
    stop: Arc<AtomicBool>,
    next: u64,
    max_frames: Option<u64>,
    paced: bool,
    clock: Option<(Instant, u64)>,
}

impl<T: Real> LiveSource<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scene: LiveScene,
        params: &DerivedParams,
        zc_root: usize,
        controls: Receiver<(u64, ControlMessage)>,
        snapshots: Sender<FrameSnapshot>,
        stop: Arc<AtomicBool>,
        max_frames: Option<u64>,
        paced: bool,
    ) -> Result<Self> {
        let reference = zadoff_chu(params.sequence_length, zc_root)?;
        Ok(Self {
            synth: PulseSynthesizer::new(&reference, params)?,
            scene,
            controls,
            snapshots,
            stop,
            next: 0,
            max_frames,
            paced,
            clock: None,
        })
    }

    fn apply(&mut self, seq: u64, control: ControlMessage) {
        let t = self.next as f64 * self.synth.params().cpi;
        if let Err(e) = self.scene.apply(seq, control, t) {
            tracing::warn!("control {seq} rejected at frame {}: {e}", self.next);
        }
    }

    /// Sleep until frame `next` is due on a wall clock started at the first
    /// frame after the last pause.
    fn pace(&mut self) {
        let cpi = self.synth.params().cpi;
        let (origin, first) = *self.clock.get_or_insert((Instant::now(), self.next));
        let due = origin + Duration::from_secs_f64(cpi * (self.next - first) as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

impl<T: Real> FrameSource<T> for LiveSource<T> {
    fn params(&self) -> &DerivedParams {
        self.synth.params()
    }

    fn calibration_frame(&mut self) -> Result<Option<Frame<T>>> {
        let clutter_only = ScenarioScript {
            segments: Vec::new(),
            ..self.scene.script().clone()
        };
        let mut frame = synthesize_frame(
            &self.synth,
            &clutter_only,
            0,
            clutter_only.seed ^ CALIBRATION_SALT,
        );
        frame.ground_truth = Some(Activity::Absent);
        Ok(Some(frame))
    }

    fn next_frame(&mut self) -> Result<Option<Frame<T>>> {
        loop {
            if self.stop.load(Ordering::Relaxed) || self.max_frames.is_some_and(|m| self.next >= m)
            {
                return Ok(None);
            }
            while let Ok((seq, control)) = self.controls.try_recv() {
                self.apply(seq, control);
            }
            if !self.scene.paused() {
                break;
            }
            self.clock = None;
            match self.controls.recv_timeout(PAUSE_POLL) {
                Ok((seq, control)) => self.apply(seq, control),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Ok(None),
            }
        }

        let cpi = self.synth.params().cpi;
        let t0 = self.next as f64 * cpi;
        self.scene.advance(t0, cpi);
        if self.paced {
            self.pace();
        }
        let frame = synthesize_frame(
            &self.synth,
            self.scene.script(),
            self.next,
            self.scene.script().seed,
        );
        // The receiver only disappears when the pipeline is shutting down.
        let _ = self.snapshots.send(FrameSnapshot {
            index: self.next,
            scene: self.scene.state_at(t0 + 0.5 * cpi),
            applied_seq: self.scene.applied_seq(),
        });
        self.next += 1;
        Ok(Some(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> LiveScene {
        LiveScene::new(&LiveSceneConfig::default()).unwrap()
    }

    #[test]
    fn controls_rewrite_the_script_from_the_boundary() {
        let mut s = scene();
        assert_eq!(s.script().activity_at(1.0), Activity::Standing);
        s.apply(
            1,
            ControlMessage::SetActivity {
                activity: Activity::Walking,
            },
            2.0,
        )
        .unwrap();
        assert_eq!(s.script().activity_at(2.0), Activity::Walking);
        assert!((s.state_at(3.0).range_m - 3.5).abs() < 1e-12);
        s.apply(
            2,
            ControlMessage::SetActivity {
                activity: Activity::Waving,
            },
            4.0,
        )
        .unwrap();
        let st = s.state_at(5.0);
        assert_eq!(st.activity, Activity::Waving);
        assert!((st.range_m - 4.0).abs() < 1e-12);
        assert_eq!(s.applied_seq(), 2);
        s.apply(
            3,
            ControlMessage::SetActivity {
                activity: Activity::Absent,
            },
            5.0,
        )
        .unwrap();
        assert!(s.script().segments.is_empty());
    }

    #[test]
    fn invalid_controls_leave_the_scene_untouched() {
        let mut s = scene();
        let before = s.state_at(0.0);
        assert!(s
            .apply(1, ControlMessage::SetRange { range_m: 99.0 }, 1.0)
            .is_err());
        assert_eq!(s.state_at(0.0), before);
        assert_eq!(s.applied_seq(), 0);
    }

    #[test]
    fn walker_turns_at_the_bounds() {
        let mut s = scene();
        s.apply(1, ControlMessage::SetRange { range_m: 9.9 }, 0.0)
            .unwrap();
        s.apply(
            2,
            ControlMessage::SetActivity {
                activity: Activity::Walking,
            },
            0.0,
        )
        .unwrap();
        s.advance(0.0, 0.5);
        assert_eq!(s.state_at(0.0).speed_mps, -0.5);
        assert!(s.state_at(1.0).range_m < 9.9);
    }
}

//! WebSocket server: one session task per client, fed from a latest-wins
//! frame slot; controls funnel into a single ordered queue.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use base64::Engine;
use dband_core::pipeline::{
    calibrate_noise_floor, run_pipeline, DspStage, FrameError, FrameEvent, FrameSource,
};
use dband_core::rd::RangeDopplerMap;
use dband_core::{Activity, PipelineConfig, Real};
use futures_util::{SinkExt, StreamExt};
use tokio::sync::watch;
use tower_http::services::ServeDir;

use crate::live::{FrameSnapshot, LiveScene, LiveSceneConfig, LiveSource};
use crate::protocol::{
    Axis, ControlError, ControlMessage, FrameMessage, Metadata, RdThumbnail, ServerMessage,
    Thresholds, ThumbnailSpec, TrackInfo, PROTOCOL_VERSION,
};
use crate::thumbnail::{ThumbnailLayout, DB_MAX, DB_MIN, MAX_DIM};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error(transparent)]
    Core(#[from] dband_core::Error),
    #[error(transparent)]
    Pipeline(#[from] FrameError),
    #[error("invalid initial scene: {0}")]
    Scene(#[from] ControlError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("pipeline thread panicked")]
    Panicked,
}

#[derive(Debug, Clone)]
pub struct GatewayOptions {
    pub addr: SocketAddr,
    pub max_clients: usize,
    pub ui_dir: Option<PathBuf>,
    /// Emit frames at the CPI rate instead of as fast as possible.
    pub paced: bool,
    /// Stop the pipeline after this many frames (the server keeps running).
    pub max_frames: Option<u64>,
    pub heartbeat: Duration,
    pub scene: LiveSceneConfig,
}

impl Default for GatewayOptions {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            max_clients: 8,
            ui_dir: None,
            paced: true,
            max_frames: None,
            heartbeat: Duration::from_secs(2),
            scene: LiveSceneConfig::default(),
        }
    }
}

/// Per-frame compute times of a finished pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub frames: u64,
    pub noise_floor_db: f64,
    pub compute_times: Vec<f64>,
}

impl PipelineReport {
    pub fn mean_compute_time(&self) -> Option<f64> {
        (!self.compute_times.is_empty())
            .then(|| self.compute_times.iter().sum::<f64>() / self.compute_times.len() as f64)
    }
}

struct ControlQueue {
    next_seq: u64,
    tx: mpsc::Sender<(u64, ControlMessage)>,
}

struct Shared {
    metadata: Utf8Bytes,
    frames: watch::Sender<Option<(u64, Utf8Bytes)>>,
    controls: Mutex<ControlQueue>,
    bounds: crate::protocol::ControlBounds,
    clients: AtomicUsize,
    max_clients: usize,
    heartbeat: Duration,
    started: Instant,
    shutdown: watch::Sender<bool>,
}

impl Shared {
    fn enqueue(&self, control: ControlMessage) -> Result<u64, ControlError> {
        self.bounds.check(&control)?;
        let mut q = self.controls.lock().expect("control queue poisoned");
        q.next_seq += 1;
        let seq = q.next_seq;
        // A closed queue means the pipeline has finished; the control is moot.
        let _ = q.tx.send((seq, control));
        Ok(seq)
    }
}

struct ClientSlot(Arc<Shared>);

impl ClientSlot {
    fn acquire(shared: &Arc<Shared>) -> Option<Self> {
        shared
            .clients
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |n| {
                (n < shared.max_clients).then_some(n + 1)
            })
            .ok()
            .map(|_| Self(shared.clone()))
    }
}

impl Drop for ClientSlot {
    fn drop(&mut self) {
        self.0.clients.fetch_sub(1, Ordering::AcqRel);
    }
}

/// A running gateway: pipeline thread plus WebSocket server.
pub struct Gateway {
    local_addr: SocketAddr,
    metadata: Metadata,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    pipeline: Option<JoinHandle<Result<PipelineReport, FrameError>>>,
    runtime: Option<tokio::runtime::Runtime>,
}

impl Gateway {
    /// Calibrate, bind, and start streaming.
    pub fn start<T: Real>(
        config: &PipelineConfig,
        options: GatewayOptions,
    ) -> Result<Self, GatewayError> {
        let params = config.validate()?;
        let scene = LiveScene::new(&options.scene)?;
        let (control_tx, control_rx) = mpsc::channel();
        let (snapshot_tx, snapshot_rx) = mpsc::channel::<FrameSnapshot>();
        let stop = Arc::new(AtomicBool::new(false));
        let mut source = LiveSource::<T>::new(
            scene,
            &params,
            config.system.zc_root,
            control_rx,
            snapshot_tx,
            stop.clone(),
            options.max_frames,
            options.paced,
        )?;

        let dsp = DspStage::<T>::new(&params, config.system.zc_root)?;
        let noise_floor_db =
            calibrate_noise_floor(&dsp, &mut source as &mut dyn FrameSource<T>, config)?;
        drop(dsp);
        let mut config = *config;
        config.detection.noise_floor_db = Some(noise_floor_db);

        let scope = config.detection.scope(&params)?;
        let layout = ThumbnailLayout::new(
            params.cpi_pulses,
            scope.min_range_bin,
            scope.max_range_bin - scope.min_range_bin,
            MAX_DIM,
        );
        let metadata = build_metadata::<T>(&config, noise_floor_db, &layout, &options);

        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .thread_name("dband-gateway")
            .enable_all()
            .build()?;
        let listener = std::net::TcpListener::bind(options.addr)?;
        listener.set_nonblocking(true)?;
        let local_addr = listener.local_addr()?;
        let listener = {
            let _entered = runtime.enter();
            tokio::net::TcpListener::from_std(listener)?
        };

        let (shutdown, _) = watch::channel(false);
        let shared = Arc::new(Shared {
            metadata: ServerMessage::Metadata(metadata.clone()).to_json().into(),
            frames: watch::channel(None).0,
            controls: Mutex::new(ControlQueue {
                next_seq: 0,
                tx: control_tx,
            }),
            bounds: options.scene.bounds,
            clients: AtomicUsize::new(0),
            max_clients: options.max_clients,
            heartbeat: options.heartbeat,
            started: Instant::now(),
            shutdown,
        });

        let mut router = Router::new().route("/ws", get(upgrade));
        if let Some(dir) = &options.ui_dir {
            router = router.fallback_service(ServeDir::new(dir));
        }
        let router = router.with_state(shared.clone());
        let mut shutdown_rx = shared.shutdown.subscribe();
        runtime.spawn(async move {
            let served = axum::serve(listener, router)
                .with_graceful_shutdown(async move {
                    let _ = shutdown_rx.wait_for(|s| *s).await;
                })
                .await;
            if let Err(e) = served {
                tracing::error!("server stopped: {e}");
            }
        });

        let publisher = shared.clone();
        let pipeline = std::thread::Builder::new()
            .name("dband-pipeline".into())
            .spawn(move || {
                let mut compute_times = Vec::new();
                let summary = run_pipeline(source, &config, |event, map: &RangeDopplerMap<T>| {
                    let snapshot = loop {
                        let s = snapshot_rx.recv().map_err(|_| {
                            dband_core::Error::Config("frame snapshot missing".into())
                        })?;
                        if s.index == event.frame_index {
                            break s;
                        }
                    };
                    let text = ServerMessage::Frame(frame_message(event, map, &layout, &snapshot))
                        .to_json();
                    publisher
                        .frames
                        .send_replace(Some((event.frame_index, text.into())));
                    compute_times.push(event.compute_time);
                    Ok(())
                })?;
                Ok(PipelineReport {
                    frames: summary.frames,
                    noise_floor_db: summary.noise_floor_db,
                    compute_times,
                })
            })?;

        Ok(Self {
            local_addr,
            metadata,
            shared,
            stop,
            pipeline: Some(pipeline),
            runtime: Some(runtime),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// Index of the most recently published frame.
    pub fn last_frame_index(&self) -> Option<u64> {
        self.shared.frames.borrow().as_ref().map(|(i, _)| *i)
    }

    pub fn clients(&self) -> usize {
        self.shared.clients.load(Ordering::Acquire)
    }

    /// Queue a control as if a client had sent it; returns its sequence number.
    pub fn send_control(&self, control: ControlMessage) -> Result<u64, ControlError> {
        self.shared.enqueue(control)
    }

    /// Block until the pipeline ends (frame limit reached or stopped).
    pub fn wait_pipeline(&mut self) -> Result<PipelineReport, GatewayError> {
        let handle = self.pipeline.take().ok_or(GatewayError::Panicked)?;
        Ok(handle.join().map_err(|_| GatewayError::Panicked)??)
    }

    /// Block until Ctrl-C, then shut down.
    pub fn run_until_interrupted(mut self) -> Result<PipelineReport, GatewayError> {
        if let Some(rt) = &self.runtime {
            rt.block_on(tokio::signal::ctrl_c())?;
        }
        self.stop();
        self.wait_pipeline()
    }

    /// Stop the pipeline and the server and return the pipeline report.
    pub fn shutdown(mut self) -> Result<PipelineReport, GatewayError> {
        self.stop();
        self.wait_pipeline()
    }

    fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.shared.shutdown.send_replace(true);
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop();
        if let Some(handle) = self.pipeline.take() {
            let _ = handle.join();
        }
    }
}

fn build_metadata<T: Real>(
    config: &PipelineConfig,
    noise_floor_db: f64,
    layout: &ThumbnailLayout,
    options: &GatewayOptions,
) -> Metadata {
    let p = dband_core::derive(&config.system).expect("validated before");
    let hysteresis = config
        .detection
        .hysteresis(noise_floor_db)
        .expect("validated before");
    let half = (p.cpi_pulses / 2) as f64;
    Metadata {
        protocol_version: PROTOCOL_VERSION,
        precision: T::NAME.to_string(),
        frame_period_s: p.cpi,
        heartbeat_period_s: options.heartbeat.as_secs_f64(),
        range_bin_m: p.range_bin,
        velocity_bin_mps: p.velocity_bin,
        max_velocity_mps: p.max_unambiguous_velocity,
        range_axis: Axis {
            start: layout.first_range_bin as f64 * p.range_bin,
            step: layout.col_decimation as f64 * p.range_bin,
            len: layout.cols,
        },
        velocity_axis: Axis {
            start: -half * p.velocity_bin,
            step: layout.row_decimation as f64 * p.velocity_bin,
            len: layout.rows,
        },
        thumbnail: ThumbnailSpec {
            rows: layout.rows,
            cols: layout.cols,
            row_decimation: layout.row_decimation,
            col_decimation: layout.col_decimation,
            db_min: DB_MIN,
            db_max: DB_MAX,
            encoding: "base64".into(),
        },
        thresholds: Thresholds {
            noise_floor_db,
            upper_db: hysteresis.upper_db,
            lower_db: hysteresis.lower_db,
            drift_threshold_m: config.classifier.drift_threshold_m,
            wave_enter_mps: config.classifier.wave_enter_mps,
            wave_exit_mps: config.classifier.wave_exit_mps,
        },
        controls: options.scene.bounds,
        activities: Activity::ALL.to_vec(),
    }
}

fn frame_message<T: Real>(
    event: &FrameEvent,
    map: &RangeDopplerMap<T>,
    layout: &ThumbnailLayout,
    snapshot: &FrameSnapshot,
) -> FrameMessage {
    let track = event
        .track_range
        .zip(event.track_velocity)
        .map(|(range_m, velocity_mps)| TrackInfo {
            range_m,
            velocity_mps,
        });
    FrameMessage {
        frame_index: event.frame_index,
        frame_time: event.frame_time,
        detected: event.detected,
        power_db: event.power_db,
        track,
        state: event.state,
        v_md: event.v_md,
        drift: event.drift,
        ground_truth: event.ground_truth,
        compute_time: event.compute_time,
        applied_seq: snapshot.applied_seq,
        scene: snapshot.scene,
        rd_thumbnail: RdThumbnail {
            rows: layout.rows,
            cols: layout.cols,
            data: base64::engine::general_purpose::STANDARD.encode(layout.render(map)),
        },
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    match ClientSlot::acquire(&shared) {
        Some(slot) => ws.on_upgrade(move |socket| session(socket, slot)),
        None => (StatusCode::SERVICE_UNAVAILABLE, "client limit reached").into_response(),
    }
}

async fn session(socket: WebSocket, slot: ClientSlot) {
    let shared = slot.0.clone();
    let (mut sink, mut incoming) = socket.split();
    let mut frames = shared.frames.subscribe();
    frames.borrow_and_update();
    let mut shutdown = shared.shutdown.subscribe();
    let mut heartbeat = tokio::time::interval_at(
        tokio::time::Instant::now() + shared.heartbeat,
        shared.heartbeat,
    );
    heartbeat.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    if sink
        .send(Message::Text(shared.metadata.clone()))
        .await
        .is_err()
    {
        return;
    }
    loop {
        let reply = tokio::select! {
            changed = frames.changed() => {
                if changed.is_err() {
                    break;
                }
                let latest = frames.borrow_and_update().as_ref().map(|(_, text)| text.clone());
                match latest {
                    Some(text) => text,
                    None => continue,
                }
            }
            _ = heartbeat.tick() => {
                let last_frame_index = frames.borrow().as_ref().map(|(i, _)| *i);
                ServerMessage::Heartbeat {
                    server_time_s: shared.started.elapsed().as_secs_f64(),
                    last_frame_index,
                    clients: shared.clients.load(Ordering::Acquire),
                }
                .to_json()
                .into()
            }
            message = incoming.next() => match message {
                Some(Ok(Message::Text(text))) => handle_control(&shared, text.as_str()).to_json().into(),
                Some(Ok(Message::Binary(_))) => ServerMessage::Error {
                    message: "binary messages are not supported".into(),
                }
                .to_json()
                .into(),
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => continue,
            },
            _ = shutdown.wait_for(|s| *s) => break,
        };
        if sink.send(Message::Text(reply)).await.is_err() {
            break;
        }
    }
    let _ = sink.close().await;
}

fn handle_control(shared: &Shared, text: &str) -> ServerMessage {
    let control = match serde_json::from_str::<ControlMessage>(text) {
        Ok(c) => c,
        Err(e) => {
            return ServerMessage::Error {
                message: format!("malformed control: {e}"),
            }
        }
    };
    match shared.enqueue(control) {
        Ok(seq) => ServerMessage::Ack { seq, control },
        Err(e) => ServerMessage::Error {
            message: format!("control rejected: {e}"),
        },
    }
}

use std::net::SocketAddr;
use std::time::Duration;

use dband_core::{Activity, PipelineConfig};
use dband_gateway::protocol::ControlMessage;
use dband_gateway::{Gateway, GatewayOptions, LiveSceneConfig, ServerMessage};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

const TIMEOUT: Duration = Duration::from_secs(30);

fn options(max_frames: Option<u64>) -> GatewayOptions {
    GatewayOptions {
        addr: SocketAddr::from(([127, 0, 0, 1], 0)),
        paced: false,
        max_frames,
        ..GatewayOptions::default()
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap()
}

async fn connect(addr: SocketAddr) -> Client {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
        .await
        .unwrap()
        .0
}

async fn next_message(client: &mut Client) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(TIMEOUT, client.next())
            .await
            .expect("timed out waiting for a message")
            .expect("stream ended")
            .unwrap();
        if let Message::Text(text) = msg {
            return serde_json::from_str(text.as_str()).unwrap();
        }
    }
}

async fn next_frame(client: &mut Client) -> dband_gateway::FrameMessage {
    loop {
        match next_message(client).await {
            ServerMessage::Frame(f) => return f,
            ServerMessage::Heartbeat { .. } => {}
            other => panic!("unexpected message {other:?}"),
        }
    }
}

async fn send(client: &mut Client, text: &str) {
    client.send(Message::Text(text.into())).await.unwrap();
}

#[test]
fn metadata_first_then_frames_with_declared_thumbnail() {
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), options(Some(6))).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut c = connect(addr).await;
        let ServerMessage::Metadata(meta) = next_message(&mut c).await else {
            panic!("first message must be metadata")
        };
        assert_eq!(meta.thumbnail.db_min, -60.0);
        assert_eq!(meta.thumbnail.db_max, 0.0);
        assert!(meta.thumbnail.rows <= 256 && meta.thumbnail.cols <= 256);
        assert_eq!(meta.velocity_axis.len, meta.thumbnail.rows);
        let f = next_frame(&mut c).await;
        assert_eq!(
            (f.rd_thumbnail.rows, f.rd_thumbnail.cols),
            (meta.thumbnail.rows, meta.thumbnail.cols)
        );
        use base64::Engine;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&f.rd_thumbnail.data)
            .unwrap();
        assert_eq!(bytes.len(), meta.thumbnail.rows * meta.thumbnail.cols);
        assert_eq!(f.ground_truth, Some(Activity::Standing));
    });
    gw.shutdown().unwrap();
}

#[test]
fn client_connecting_mid_run_gets_metadata_then_the_next_frame() {
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), options(Some(40))).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut first = connect(addr).await;
        next_message(&mut first).await;
        for _ in 0..3 {
            next_frame(&mut first).await;
        }
        let seen = gw.last_frame_index().unwrap();
        let mut late = connect(addr).await;
        assert!(matches!(
            next_message(&mut late).await,
            ServerMessage::Metadata(_)
        ));
        let f = next_frame(&mut late).await;
        assert!(
            f.frame_index > seen,
            "late client got stale frame {} (<= {seen})",
            f.frame_index
        );
    });
    gw.shutdown().unwrap();
}

#[test]
fn controls_apply_at_a_frame_boundary() {
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), options(Some(40))).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut c = connect(addr).await;
        next_message(&mut c).await;
        let before = next_frame(&mut c).await;
        assert_eq!(before.ground_truth, Some(Activity::Standing));

        send(&mut c, r#"{"type":"set_activity","activity":"waving"}"#).await;
        let mut frames = Vec::new();
        let seq = loop {
            match next_message(&mut c).await {
                ServerMessage::Ack { seq, control } => {
                    assert_eq!(
                        control,
                        ControlMessage::SetActivity {
                            activity: Activity::Waving
                        }
                    );
                    break seq;
                }
                ServerMessage::Frame(f) => frames.push(f),
                ServerMessage::Heartbeat { .. } => {}
                other => panic!("unexpected {other:?}"),
            }
        };
        while frames.last().is_none_or(|f| f.applied_seq < seq) {
            frames.push(next_frame(&mut c).await);
        }
        frames.push(next_frame(&mut c).await);
        for f in &frames {
            let expected = if f.applied_seq >= seq {
                Activity::Waving
            } else {
                Activity::Standing
            };
            assert_eq!(f.ground_truth, Some(expected), "frame {}", f.frame_index);
            assert_eq!(f.scene.activity, expected);
        }
        let effective = frames
            .iter()
            .find(|f| f.applied_seq >= seq)
            .unwrap()
            .frame_index;
        assert!(
            effective <= before.frame_index + 4,
            "applied at {effective}, sent after {}",
            before.frame_index
        );
    });
    gw.shutdown().unwrap();
}

#[test]
fn malformed_or_out_of_bounds_controls_get_errors_and_the_session_continues() {
    let mut opts = options(Some(30));
    opts.scene.start_paused = true;
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), opts).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut c = connect(addr).await;
        next_message(&mut c).await;
        for bad in [
            "not json",
            r#"{"type":"teleport"}"#,
            r#"{"type":"set_range","range_m":500}"#,
        ] {
            send(&mut c, bad).await;
            assert!(
                matches!(next_message(&mut c).await, ServerMessage::Error { .. }),
                "{bad}"
            );
        }
        send(&mut c, r#"{"type":"resume"}"#).await;
        assert!(matches!(
            next_message(&mut c).await,
            ServerMessage::Ack { seq: 1, .. }
        ));
        let f = next_frame(&mut c).await;
        assert_eq!(f.scene.range_m, 3.0);
    });
    gw.shutdown().unwrap();
}

#[test]
fn client_limit_is_enforced() {
    let mut opts = options(None);
    opts.max_clients = 1;
    opts.scene.start_paused = true;
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), opts).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut c = connect(addr).await;
        next_message(&mut c).await;
        let err = tokio_tungstenite::connect_async(format!("ws://{addr}/ws"))
            .await
            .unwrap_err();
        assert!(err.to_string().contains("503"), "{err}");
        c.close(None).await.unwrap();
        drop(c);
        let mut again = None;
        for _ in 0..50 {
            tokio::time::sleep(Duration::from_millis(20)).await;
            if let Ok((ws, _)) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await {
                again = Some(ws);
                break;
            }
        }
        assert!(again.is_some(), "slot was not released");
    });
    gw.shutdown().unwrap();
}

#[test]
fn heartbeats_arrive_while_paused() {
    let mut opts = options(None);
    opts.heartbeat = Duration::from_millis(200);
    opts.scene = LiveSceneConfig {
        start_paused: true,
        ..LiveSceneConfig::default()
    };
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), opts).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        let mut c = connect(addr).await;
        next_message(&mut c).await;
        for _ in 0..2 {
            let ServerMessage::Heartbeat {
                last_frame_index,
                clients,
                ..
            } = next_message(&mut c).await
            else {
                panic!("expected heartbeat")
            };
            assert_eq!(last_frame_index, None);
            assert_eq!(clients, 1);
        }
    });
    gw.shutdown().unwrap();
}

#[test]
fn serves_static_ui_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>console</html>").unwrap();
    let mut opts = options(None);
    opts.ui_dir = Some(dir.path().to_path_buf());
    opts.scene.start_paused = true;
    let gw = Gateway::start::<f32>(&PipelineConfig::default(), opts).unwrap();
    let addr = gw.local_addr();
    runtime().block_on(async {
        use tokio::io::{AsyncReadExt, AsyncWriteExt};
        let mut s = TcpStream::connect(addr).await.unwrap();
        s.write_all(b"GET /index.html HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
            .await
            .unwrap();
        let mut body = String::new();
        s.read_to_string(&mut body).await.unwrap();
        assert!(body.starts_with("HTTP/1.1 200"), "{body}");
        assert!(body.contains("<html>console</html>"));
    });
    gw.shutdown().unwrap();
}

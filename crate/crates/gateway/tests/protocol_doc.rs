use dband_gateway::{ControlMessage, ServerMessage};

fn blocks(tag: &str) -> Vec<String> {
    let doc =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../PROTOCOL.md")).unwrap();
    let fence = format!("```json {tag}");
    let mut out = Vec::new();
    let mut rest = doc.as_str();
    while let Some(start) = rest.find(&fence) {
        let body = &rest[start + fence.len()..];
        let end = body.find("```").unwrap();
        out.push(body[..end].to_string());
        rest = &body[end + 3..];
    }
    out
}

#[test]
fn every_documented_server_message_parses() {
    let examples = blocks("server");
    assert_eq!(examples.len(), 5);
    for text in examples {
        let msg: ServerMessage =
            serde_json::from_str(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        let back: serde_json::Value = serde_json::from_str(&msg.to_json()).unwrap();
        let orig: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["type"], orig["type"]);
    }
}

#[test]
fn every_documented_control_parses() {
    let examples = blocks("client");
    assert_eq!(examples.len(), 6);
    for text in examples {
        serde_json::from_str::<ControlMessage>(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    }
}

#[test]
fn documented_metadata_matches_the_default_gateway() {
    use dband_gateway::{Gateway, GatewayOptions};
    let mut opts = GatewayOptions {
        addr: ([127, 0, 0, 1], 0).into(),
        ..GatewayOptions::default()
    };
    opts.scene.start_paused = true;
    let gw = Gateway::start::<f32>(&dband_core::PipelineConfig::default(), opts).unwrap();
    let actual = gw.metadata().clone();
    gw.shutdown().unwrap();

    let ServerMessage::Metadata(doc) = serde_json::from_str(&blocks("server")[0]).unwrap() else {
        panic!("first server example must be metadata")
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1.0);
    assert_eq!(doc.thumbnail, actual.thumbnail);
    assert_eq!(doc.controls, actual.controls);
    assert_eq!(doc.activities, actual.activities);
    assert_eq!(doc.precision, actual.precision);
    for (a, b) in [
        (doc.frame_period_s, actual.frame_period_s),
        (doc.range_bin_m, actual.range_bin_m),
        (doc.velocity_bin_mps, actual.velocity_bin_mps),
        (doc.max_velocity_mps, actual.max_velocity_mps),
        (doc.range_axis.start, actual.range_axis.start),
        (doc.range_axis.step, actual.range_axis.step),
        (doc.velocity_axis.start, actual.velocity_axis.start),
        (doc.velocity_axis.step, actual.velocity_axis.step),
    ] {
        assert!(close(a, b), "documented {a} vs actual {b}");
    }
    assert_eq!(doc.range_axis.len, actual.range_axis.len);
    assert_eq!(doc.velocity_axis.len, actual.velocity_axis.len);
    let t = actual.thresholds;
    assert!(close(
        t.upper_db - t.noise_floor_db,
        doc.thresholds.upper_db - doc.thresholds.noise_floor_db
    ));
}

use std::path::PathBuf;

use dband_core::scene::load_scenario;
use dband_core::PipelineConfig;

fn repo(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(path)
}

#[test]
fn default_config_file_holds_every_default() {
    let text = std::fs::read_to_string(repo("config/default.json")).unwrap();
    let parsed = PipelineConfig::from_json(&text).unwrap();
    assert_eq!(parsed, PipelineConfig::default());
    assert_eq!(text.trim(), PipelineConfig::default().to_json().unwrap());
}

#[test]
fn example_scenarios_validate() {
    let params = PipelineConfig::default().validate().unwrap();
    for name in ["stand-walk-wave", "absent-only", "clutter-heavy"] {
        let script = load_scenario(repo(&format!("scenarios/{name}.json")), &params)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(script.duration > 0.0);
    }
    let absent = load_scenario(repo("scenarios/absent-only.json"), &params).unwrap();
    assert_eq!((absent.duration / params.cpi).floor() as u64, 20);
    let sww = load_scenario(repo("scenarios/stand-walk-wave.json"), &params).unwrap();
    assert_eq!(sww.transition_times(), vec![3.0, 6.0, 9.0]);
}

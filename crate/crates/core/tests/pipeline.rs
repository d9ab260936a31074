use splatcount::pipeline::{run_pipeline, PipelineConfig};
use splatcount::scene::SyntheticSceneSpec;
use splatcount::Error;

#[test]
fn one_fruit_scene_counts_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::default();
    config.scene = SyntheticSceneSpec::standard(1, 2);
    config.sample.target_points = 20_000;
    config.filter.positives = vec!["apple".into()];
    config.paths.output = dir.path().to_path_buf();
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.total, 1);
    let count: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("count.json")).unwrap()).unwrap();
    assert_eq!(count["total"], 1);
    assert_eq!(count["params"]["config"]["filter"]["tau_pos"], 0.2255);
    assert!(report.stages.iter().all(|s| s.seconds.is_some()));
}

#[test]
fn empty_prompts_fail_before_any_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut config = PipelineConfig::default();
    config.filter.positives.clear();
    config.paths.output = out.clone();
    let err = run_pipeline(&config).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(err.is_validation());
    assert!(!out.exists());
}

#[test]
fn config_file_round_trip_keeps_defaults() {
    let config = PipelineConfig::default();
    let text = config.to_toml().unwrap();
    assert!(text.contains("tau_pos = 0.2255"));
    assert!(text.contains("tau_neg = 0.26125"));
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), config);
    assert!(PipelineConfig::from_toml("[filter]\ntau_pos_typo = 1.0").is_err());
}

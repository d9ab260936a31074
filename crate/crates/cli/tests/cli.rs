use std::path::Path;
use std::process::{Command, Output};

fn splatcount(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatcount")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_scene_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = splatcount(dir.path(), &["--seed", "7", "generate", "--fruits", "50", "--out", "scene.ply"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scene.ply", "gt.json", "autoencoder.bin", "vocabulary.json", "labels.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let gt = json(&dir.path().join("gt.json"));
    assert_eq!(gt["fruit_count"], 50);
    assert_eq!(gt["centers"].as_array().unwrap().len(), 50);
}

#[test]
fn query_echoes_default_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    assert!(splatcount(dir.path(), &["--seed", "3", "generate", "--fruits", "10"]).status.success());
    let o = splatcount(dir.path(), &["query", "--scene", "scene.ply", "--pos", "apple", "--neg", "leaf", "--neg", "branch"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("tau_pos 0.2255, tau_neg 0.26125"));
    let f = json(&dir.path().join("filter.json"));
    assert_eq!(f["tau_pos"], 0.2255);
    assert_eq!(f["tau_neg"], 0.26125);
    assert!(!f["kept"].as_array().unwrap().is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| splatcount(dir.path(), args).status.code();
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["generate", "--fruits", "5"]), Some(2), "stochastic command without a seed");
    assert_eq!(code(&["query", "--scene", "missing.ply", "--pos", "apple"]), Some(3));
    assert_eq!(code(&["--seed", "1", "--set", "bogus.key=1", "generate"]), Some(3));
    assert_eq!(code(&["--seed", "1", "--set", "filter.tau_pos=2.5", "generate"]), Some(3));
}

#[test]
fn deterministic_pipeline_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = splatcount(
            dir.path(),
            &["--seed", "11", "--deterministic", "--set", "sample.target_points=60000", "pipeline", "--fruits", "20", "--out", out],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    let count = dir.path().join("out").join("count.json");
    let first = run("out");
    let before = std::fs::read(&count).unwrap();
    assert_eq!(run("out"), first);
    assert!(first.contains("ground truth 20"));
    assert_eq!(std::fs::read(&count).unwrap(), before);

    let o = splatcount(dir.path(), &["eval", "--pred", "out/count.json", "--gt", "out/gt.json", "--out", "e.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), first);
    let e = json(&dir.path().join("e.json"));
    assert_eq!(e["ground_truth"], 20);
}

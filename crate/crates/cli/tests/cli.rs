use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deformapprox"));
    c.env("RUST_LOG", "warn").env_remove("DEFORMAPPROX_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = r#"{
  "rig": {"kind": "arm", "segments": 8, "radial": 8},
  "dataset": {"frames": 30},
  "split": {"stride": 5, "offset": 0},
  "model": {"hidden": [16], "subspace_hidden": 8, "epochs": 30, "lr": 0.01, "checkpoint_every": 10},
  "ensemble": {"members": 2},
  "bench": {"reps": 3, "warmup": 1}
}
"#;
    let path = dir.join("pipeline.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn rig_gen_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b/b.json");
    assert_eq!(code(&run(&["rig-gen", "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["rig-gen", "--out", b.to_str().unwrap()])), 0);
    let obj = std::fs::read_to_string(dir.path().join("a.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 240);
    assert_eq!(obj, std::fs::read_to_string(dir.path().join("b/b.obj")).unwrap());

    let f1 = dir.path().join("f1.json");
    let f2 = dir.path().join("f2.json");
    for f in [&f1, &f2] {
        assert_eq!(code(&run(&["rig-gen", "--kind", "face", "--seed", "3", "--out", f.to_str().unwrap()])), 0);
    }
    let strip = |p: &Path| std::fs::read_to_string(p).unwrap().replace("f1.obj", "X").replace("f2.obj", "X");
    assert_eq!(strip(&f1), strip(&f2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["rig-gen", "--kind", "tentacle"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"modle": {}}"#).unwrap();
    assert_eq!(code(&run(&["extract", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["extract", "--config", dir.path().join("missing.json").to_str().unwrap()])), 2);
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = cfg.to_str().unwrap();
    let data = dir.path().join("dataset.txt");

    // Training before extraction: the dataset is missing.
    assert_eq!(code(&run(&["train", "--config", c])), 2);

    assert_eq!(code(&run(&["extract", "--config", c])), 0);
    assert_eq!(lines(&data), 3 + 30);
    assert_eq!(code(&run(&["extract", "--config", c, "--append"])), 0);
    assert_eq!(lines(&data), 3 + 60);
    // Appending rows with a different input header fails.
    let other = dir.path().join("other.json");
    std::fs::write(&other, r#"{"rig": {"segments": 8, "radial": 8}, "model": {"inputs": ["elbow_flex:scalar"]}}"#).unwrap();
    assert_ne!(code(&run(&["extract", "--config", other.to_str().unwrap(), "--append"])), 0);
    assert_eq!(lines(&data), 3 + 60);

    assert_eq!(code(&run(&["extract", "--config", c])), 0);
    assert_eq!(code(&run(&["train", "--config", c])), 0);
    let model = std::fs::read(dir.path().join("model.daxb")).unwrap();
    assert_eq!(&model[..4], b"DAXB");

    // Resuming a finished run changes nothing.
    assert_eq!(code(&run(&["train", "--config", c, "--resume"])), 0);
    assert_eq!(std::fs::read(dir.path().join("model.daxb")).unwrap(), model);

    assert_eq!(code(&run(&["train", "--config", c, "--ensemble"])), 0);
    let manifest = std::fs::read_to_string(dir.path().join("ensemble/manifest.json")).unwrap();
    assert!(manifest.contains("member_1.daxb"));

    assert_eq!(code(&run(&["eval", "--config", c])), 0);
    let out = dir.path().join("out");
    assert!(out.join("metrics_train.csv").exists() && out.join("error_heatmap.ply").exists());
    assert!(!out.join("uncertainty_heatmap.ply").exists());
    assert_eq!(lines(&out.join("metrics_validation.csv")), 1 + 6);
    assert_eq!(code(&run(&["eval", "--config", c, "--uncertainty"])), 0);
    assert!(out.join("uncertainty_heatmap.ply").exists());
    assert_eq!(code(&run(&["eval", "--config", c, "--stride", "3", "--offset", "1"])), 0);
    assert_eq!(lines(&out.join("metrics_validation.csv")), 1 + 10);
    let missing = dir.path().join("nope.txt");
    assert_eq!(code(&run(&["eval", "--config", c, "--dataset", missing.to_str().unwrap()])), 2);

    assert_eq!(code(&run(&["bench", "--config", c, "--reps", "1", "--warmup", "0"])), 0);
    assert_eq!(lines(&out.join("bench.csv")), 1 + 3);
    assert_eq!(code(&run(&["bench", "--config", c, "--batch", "8", "--reps", "2", "--threads", "2"])), 0);
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5);
    assert!(csv.lines().next().unwrap().starts_with("label,backend,inputs,vertices"));
    assert!(csv.contains("batched x8,cpu,2,64,8,2,"));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("pipeline.json");
    std::fs::write(
        &cfg,
        r#"{"rig": {"segments": 8, "radial": 8}, "dataset": {"frames": 20}, "split": {"stride": 5, "offset": 0},
            "model": {"hidden": [8], "subspace_hidden": 4, "epochs": 50, "lr": 1e30}}"#,
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["extract", "--config", c])), 0);
    assert_eq!(code(&run(&["train", "--config", c])), 3);
}

#[test]
fn demo_face_short() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    let o = run(&["demo", "--face", "--epochs", "20", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["rig.json", "rig.obj", "dataset.txt", "model.daxb", "out/demo_summary.json", "out/bench.md", "out/error_heatmap.ply"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = std::fs::read_to_string(out.join("out/demo_summary.json")).unwrap();
    assert!(first.contains("\"rig\": \"face\""));
    assert_eq!(code(&run(&["demo", "--face", "--epochs", "20", "--out", out.to_str().unwrap()])), 0);
    assert_eq!(std::fs::read_to_string(out.join("out/demo_summary.json")).unwrap(), first);
}

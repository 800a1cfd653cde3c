//! End-to-end tests of the `beamsight` binary: artifact layout, exit
//! codes, and the machine-parsable error format.

use std::path::Path;
use std::process::{Command, Output};

fn beamsight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamsight"))
        .args(args)
        .output()
        .expect("failed to spawn beamsight")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    let text = format!(
        r#"
output_dir = "{}"

[pipeline]
num_samples = 400

[model]
feature_dim = 8
vision_hidden = 16
classifier_hidden = 16

[training.vision]
total_epochs = 3
decay_epochs = [2]

[training.position]
total_epochs = 3
decay_epochs = [2]

[training.fusion]
total_epochs = 3
decay_epochs = [2]

[eval]
fractions = [0.5, 1.0]
seeds = [0, 1]
"#,
        dir.join("out").display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn full_pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let gen = beamsight(&["generate", "--config", cfg]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let stdout = String::from_utf8_lossy(&gen.stdout);
    assert!(stdout.contains("label histogram"), "{stdout}");
    for name in [
        "raw.jsonl",
        "raw.csv",
        "codebook.json",
        "train.jsonl",
        "val.jsonl",
        "train_normalized.jsonl",
        "val_normalized.jsonl",
        "norm_stats.json",
    ] {
        assert!(out.join(name).exists(), "missing {name}");
    }

    for model in ["vision", "position", "fusion"] {
        let t = beamsight(&["train", "--config", cfg, "--model", model]);
        assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
        assert!(out.join(format!("{model}.ckpt.json")).exists());
        assert!(out.join(format!("{model}_history.csv")).exists());
    }

    let ev = beamsight(&["eval", "--config", cfg]);
    assert!(ev.status.success(), "{}", String::from_utf8_lossy(&ev.stderr));
    assert!(out.join("report.json").exists());
    assert!(out.join("report.csv").exists());
    assert!(out.join("report.txt").exists());
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("model,scenario,k,accuracy,n,seed,fraction"));

    let sw = beamsight(&["sweep", "--config", cfg]);
    assert!(sw.status.success(), "{}", String::from_utf8_lossy(&sw.stderr));
    assert!(out.join("sweep.json").exists());
    assert!(out.join("sweep.csv").exists());
}

#[test]
fn train_before_generate_reports_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = beamsight(&["train", "--config", cfg.to_str().unwrap(), "--model", "vision"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[prerequisite]:"), "{stderr}");
}

#[test]
fn fusion_requires_vision_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert!(beamsight(&["generate", "--config", cfg]).status.success());
    let out = beamsight(&["train", "--config", cfg, "--model", "fusion"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[prerequisite]:"), "{stderr}");
    assert!(stderr.contains("vision"), "{stderr}");
}

#[test]
fn bad_config_reports_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "no_such_key = true\n").unwrap();
    let out = beamsight(&["generate", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[config]:"), "{stderr}");
    assert!(stderr.contains("no_such_key"), "{stderr}");
}

#[test]
fn missing_config_file_reports_io_error() {
    let out = beamsight(&["eval", "--config", "/nonexistent/exp.toml"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error[io]:"), "{stderr}");
}

#[test]
fn seed_override_changes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    for (out, seed) in [(&out_a, "7"), (&out_b, "7"), (&out_c, "8")] {
        let r = beamsight(&[
            "generate", "--config", cfg, "--out", out.to_str().unwrap(), "--seed", seed,
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let read = |d: &Path| std::fs::read(d.join("raw.jsonl")).unwrap();
    assert_eq!(read(&out_a), read(&out_b));
    assert_ne!(read(&out_a), read(&out_c));
}

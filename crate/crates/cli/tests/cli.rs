//! End-to-end checks of the `afford` binary: flag handling, error format,
//! and a miniature run of every subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn afford(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afford"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn last_stdout_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().expect("stdout has output");
    serde_json::from_str(line).expect("last stdout line is JSON")
}

const TINY_CONFIG: &str = r#"
version = 1

[scene]
count = 3
occluders = 1
seed = 9

[cloud]
n_raw = 400
n_out = 120

[dataset]
seed = 152
scenes = 10
push_success = 3
push_failure = 3
pull_success = 0
pull_failure = 3

[train]
seed = 5
epochs = 2
k_significant = 8
action = "push"

[eval]
seed = 152
test_scenes = 3
"#;

#[test]
fn unknown_flag_fails_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = afford(&["gen-scenes", "--no-such-flag"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.to_lowercase().contains("usage"), "stderr: {err}");
}

#[test]
fn invalid_config_reports_field_path_as_json_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[eval]\ntau = 2.0\n").unwrap();
    let out = afford(&["eval", "--config", "bad.toml", "--checkpoint", "x.ck"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "stderr should be one line: {err}");
    let parsed: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert!(parsed["error"].as_str().unwrap().contains("eval.tau"));
}

#[test]
fn pipeline_subcommands_chain_together() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("tiny.toml"), TINY_CONFIG).unwrap();
    let cfg = ["--config", "tiny.toml"];

    // Scenes: written twice to confirm reruns are byte-identical.
    let out = afford(&[&cfg[..], &["gen-scenes", "--out", "scenes"]].concat(), root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(last_stdout_json(&out)["scenes"], 3);
    let scene0 = std::fs::read(root.join("scenes/scene_000000.json")).unwrap();
    let cloud0 = std::fs::read(root.join("scenes/cloud_000000.ply")).unwrap();
    let header = String::from_utf8_lossy(&out.stdout);
    assert!(header.starts_with("provenance: afford"), "{header}");

    let out = afford(&[&cfg[..], &["gen-scenes", "--out", "scenes2"]].concat(), root);
    assert!(out.status.success());
    assert_eq!(std::fs::read(root.join("scenes2/scene_000000.json")).unwrap(), scene0);
    assert_eq!(std::fs::read(root.join("scenes2/cloud_000000.ply")).unwrap(), cloud0);

    let out = afford(&[&cfg[..], &["build-dataset", "--out", "data"]].concat(), root);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("data/manifest.json").exists());

    let out = afford(
        &[&cfg[..], &["train", "--dataset", "data", "--out", "run"]].concat(),
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let train_result = last_stdout_json(&out);
    let ck = train_result["checkpoint"].as_str().unwrap().to_string();
    assert!(root.join(&ck).exists());
    assert!(root.join("run/loss-push-none.csv").exists());

    let out = afford(
        &[
            &cfg[..],
            &["eval", "--checkpoint", &ck, "--split", "seen", "--out", "run"],
        ]
        .concat(),
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = last_stdout_json(&out)["report"].as_str().unwrap().to_string();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root.join(&report_path)).unwrap()).unwrap();
    assert_eq!(report["action"], "push");
    assert_eq!(report["reports"].as_array().unwrap().len(), 1);
    assert_eq!(report["reports"][0]["split"], "test-seen");

    let out = afford(
        &[
            &cfg[..],
            &[
                "predict",
                "--checkpoint",
                &ck,
                "--scene",
                "scenes/scene_000001.json",
                "--cloud",
                "scenes/cloud_000001.ply",
                "--out",
                "pred",
            ],
        ]
        .concat(),
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scores = std::fs::read_to_string(root.join("pred/scores.csv")).unwrap();
    assert!(scores.starts_with("index,score"));
    assert!(scores.lines().count() > 1);

    let out = afford(
        &[
            &cfg[..],
            &[
                "export-heatmap",
                "--checkpoint",
                &ck,
                "--scene",
                "scenes/scene_000001.json",
                "--cloud",
                "scenes/cloud_000001.ply",
                "--out",
                "pred",
            ],
        ]
        .concat(),
        root,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("pred/heatmap.ply").exists());
    assert!(root.join("pred/heatmap.csv").exists());
}

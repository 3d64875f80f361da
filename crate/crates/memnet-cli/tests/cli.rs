//! End-to-end command tests against the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn memnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = memnet(dir, args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn bad_dataset_name_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = memnet(dir.path(), &["collect", "--dataset", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_memory_file_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = memnet(dir.path(), &["train", "--memory", "absent.man1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn collect_shapes_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "200",
            "--out",
            "a",
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[200, 200, 200]"), "{stdout}");

    // Same seed, rerun into another directory: identical bytes.
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "200",
            "--out",
            "b",
        ],
    );
    let a = std::fs::read(dir.path().join("a/memory.man1")).unwrap();
    let b = std::fs::read(dir.path().join("b/memory.man1")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn collect_gridworld_fills_only_greedy_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "gridworld",
            "--episodes",
            "20",
            "--out",
            "g",
        ],
    );
    let mem = memnet::checkpoint::load_memory(&dir.path().join("g/memory.man1")).unwrap();
    let counts = mem.class_counts();
    for (state, &count) in counts.iter().enumerate() {
        match state {
            1 | 5 | 9 | 13 => assert!(count > 0, "state {state} should be visited"),
            _ => assert_eq!(count, 0, "state {state} should be empty"),
        }
    }
}

#[test]
fn train_writes_checkpoint_and_history_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "20",
            "--out",
            "c",
        ],
    );
    for out in ["t1", "t2"] {
        ok(
            dir.path(),
            &[
                "train",
                "--memory",
                "c/memory.man1",
                "--variant",
                "b",
                "--steps",
                "40",
                "--batch-size",
                "8",
                "--seed",
                "7",
                "--out",
                out,
            ],
        );
        assert!(dir.path().join(out).join("checkpoint.man1").exists());
        assert!(dir.path().join(out).join("history.json").exists());
    }
    let a = std::fs::read(dir.path().join("t1/checkpoint.man1")).unwrap();
    let b = std::fs::read(dir.path().join("t2/checkpoint.man1")).unwrap();
    assert_eq!(a, b);

    let history: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t1/history.json")).unwrap())
            .unwrap();
    let rows = history.as_array().unwrap();
    assert_eq!(rows.len(), 40);
    for key in ["step", "total", "kl", "recon", "root_mse"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn zero_step_training_still_writes_a_valid_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "5",
            "--out",
            "c",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--memory",
            "c/memory.man1",
            "--steps",
            "0",
            "--out",
            "t",
        ],
    );
    let trainer = memnet::checkpoint::load_trainer(&dir.path().join("t/checkpoint.man1")).unwrap();
    assert_eq!(trainer.step, 0);
}

#[test]
fn recall_grid_has_documented_pgm_layout() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "5",
            "--out",
            "c",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--memory",
            "c/memory.man1",
            "--steps",
            "0",
            "--out",
            "t",
        ],
    );
    ok(
        dir.path(),
        &[
            "recall",
            "--checkpoint",
            "t/checkpoint.man1",
            "--samples",
            "4",
            "--out",
            "r",
        ],
    );
    let pgm = std::fs::read(dir.path().join("r/recall.pgm")).unwrap();
    // 3 classes of 16x16 tiles, 4 rows: 3*16+2 = 50 wide, 4*16+3 = 67 tall.
    let header = b"P5\n50 67\n255\n";
    assert!(pgm.starts_with(header));
    assert_eq!(pgm.len(), header.len() + 50 * 67);

    // Re-running overwrites with identical bytes.
    ok(
        dir.path(),
        &[
            "recall",
            "--checkpoint",
            "t/checkpoint.man1",
            "--samples",
            "4",
            "--out",
            "r",
        ],
    );
    assert_eq!(std::fs::read(dir.path().join("r/recall.pgm")).unwrap(), pgm);
}

#[test]
fn eval_metrics_schema_contains_per_class_keys() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "20",
            "--out",
            "c",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--memory",
            "c/memory.man1",
            "--variant",
            "b",
            "--steps",
            "30",
            "--batch-size",
            "8",
            "--out",
            "t",
        ],
    );
    ok(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "t/checkpoint.man1",
            "--dataset",
            "shapes",
            "--held-out",
            "5",
            "--samples",
            "4",
            "--out",
            "e",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("e/metrics.json")).unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(metrics["mean_accuracy"].is_number());
    assert!(metrics["recognize_accuracy"].is_number()); // type B
    let classes = metrics["classes"].as_array().unwrap();
    assert_eq!(classes.len(), 3);
    for c in classes {
        assert!(c["accuracy"].is_number());
        assert!(c["centroid_mse"].is_number());
        assert!(c["latent_mean_distance"].is_number());
    }
    assert!(metrics.get("gridworld").is_none());

    // Re-running overwrites with identical output.
    ok(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "t/checkpoint.man1",
            "--dataset",
            "shapes",
            "--held-out",
            "5",
            "--samples",
            "4",
            "--out",
            "e",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("e/metrics.json")).unwrap(),
        text
    );
}

#[test]
fn gridworld_eval_reports_visited_and_unvisited_mse() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "gridworld",
            "--episodes",
            "8",
            "--out",
            "g",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--memory",
            "g/memory.man1",
            "--variant",
            "b",
            "--steps",
            "30",
            "--batch-size",
            "8",
            "--out",
            "t",
        ],
    );
    ok(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "t/checkpoint.man1",
            "--dataset",
            "gridworld",
            "--memory",
            "g/memory.man1",
            "--samples",
            "4",
            "--out",
            "e",
        ],
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("e/metrics.json")).unwrap())
            .unwrap();
    assert!(metrics["gridworld"]["visited_mse"].is_number());
    assert!(metrics["gridworld"]["unvisited_mse"].is_number());
    assert_eq!(
        metrics["gridworld"]["visited"],
        serde_json::json!([1, 5, 9, 13])
    );
}

#[test]
fn eval_rejects_class_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "shapes",
            "--per-class",
            "5",
            "--out",
            "c",
        ],
    );
    ok(
        dir.path(),
        &[
            "train",
            "--memory",
            "c/memory.man1",
            "--steps",
            "0",
            "--out",
            "t",
        ],
    );
    // A 3-class checkpoint cannot be scored on the 16-class gridworld.
    let out = memnet(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            "t/checkpoint.man1",
            "--dataset",
            "gridworld",
            "--out",
            "e",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"dataset": "shapes", "per_class": 3, "seed": 5}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "collect",
            "--config",
            "cfg.json",
            "--per-class",
            "7",
            "--out",
            "c",
        ],
    );
    let mem = memnet::checkpoint::load_memory(&dir.path().join("c/memory.man1")).unwrap();
    assert_eq!(mem.class_counts(), vec![7, 7, 7]);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"dataset": "shapes", "per_clss": 3}"#,
    )
    .unwrap();
    let out = memnet(
        dir.path(),
        &["collect", "--config", "cfg.json", "--out", "c"],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("per_clss"), "{err}");
}

#[test]
fn gradcheck_exits_zero_and_reports_groups() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck", "--seeds", "2", "--coords", "8"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("type_a seed=0"), "{stdout}");
    assert!(stdout.contains("type_b seed=1"), "{stdout}");
    assert!(stdout.contains("enc1.w"), "{stdout}");
    assert!(stdout.contains("PASS"), "{stdout}");
}

#[test]
fn idx_collect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny 4x4 fixture: 4 images, labels 0/1.
    let mut images: Vec<u8> = Vec::new();
    images.extend_from_slice(&0x0803u32.to_be_bytes());
    images.extend_from_slice(&4u32.to_be_bytes());
    images.extend_from_slice(&4u32.to_be_bytes());
    images.extend_from_slice(&4u32.to_be_bytes());
    for i in 0..4u8 {
        images.extend(std::iter::repeat_n(i * 60, 16));
    }
    let mut labels: Vec<u8> = Vec::new();
    labels.extend_from_slice(&0x0801u32.to_be_bytes());
    labels.extend_from_slice(&4u32.to_be_bytes());
    labels.extend_from_slice(&[0, 1, 0, 1]);
    std::fs::write(dir.path().join("im.idx"), &images).unwrap();
    std::fs::write(dir.path().join("lb.idx"), &labels).unwrap();

    ok(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "idx",
            "--idx-images",
            "im.idx",
            "--idx-labels",
            "lb.idx",
            "--downsample",
            "2",
            "--out",
            "c",
        ],
    );
    let mem = memnet::checkpoint::load_memory(&dir.path().join("c/memory.man1")).unwrap();
    assert_eq!(mem.class_counts(), vec![2, 2]);
    assert_eq!(mem.payload_dim(), Some(4)); // 4x4 pooled to 2x2

    let out = memnet(
        dir.path(),
        &[
            "collect",
            "--dataset",
            "idx",
            "--idx-images",
            "im.idx",
            "--out",
            "c",
        ],
    );
    assert_eq!(out.status.code(), Some(1)); // missing labels file
}

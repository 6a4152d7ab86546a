//! The `kast` binary end to end.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kast_core::data::{load_interactions, split_by_time, ColumnSchema};
use kast_core::network::NetworkConfig;
use kast_core::train::{TrainConfig, Trainer};
use tempfile::TempDir;

const SMALL: &[&str] = &["--d-model", "6", "--hidden", "6", "--mlp", "8"];

fn kast(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kast"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .env_remove("KAST_OUT_DIR")
        .output()
        .expect("run kast")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = kast(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic data under `dir/gen`.
fn generate(dir: &TempDir, users: &str) -> PathBuf {
    let out = dir.path().join("gen");
    ok(&out, &["gen-data", "--users", users, "--seed", "7"]);
    out.join("interactions.csv")
}

#[test]
fn gen_data_is_deterministic_and_manifested() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&a, &["gen-data", "--users", "100", "--seed", "7"]);
    ok(&b, &["gen-data", "--users", "100", "--seed", "7"]);
    for f in ["interactions.csv", "truth.csv", "truth_summary.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let m = json(a.join("manifest.json"));
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["settings"]["users"], "100");
    assert!(m["version"].as_str().is_some_and(|v| !v.is_empty()));
}

#[test]
fn zero_noise_plants_nothing() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["gen-data", "--users", "50", "--pmis", "0"]);
    assert_eq!(json(dir.path().join("truth_summary.json"))["planted"], 0);
    let truth = std::fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert!(truth.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn segment_analyze_reports_each_gap() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "100");
    let out = dir.path().join("seg");
    ok(
        &out,
        &[
            "segment-analyze",
            "--data",
            data.to_str().unwrap(),
            "--gap",
            "600",
            "--gap",
            "1800",
        ],
    );
    let csv = std::fs::read_to_string(out.join("misdivision.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "key_set,gap_seconds,boundary_count,misdivided_pct");
    assert_eq!(rows.len(), 1 + 2 * 3);
    assert_eq!(rows.iter().filter(|r| r.contains(",600,")).count(), 3);
    assert_eq!(rows.iter().filter(|r| r.contains(",1800,")).count(), 3);
}

#[test]
fn segment_analyze_rejects_unknown_keys_and_flags_empty_rows() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "20");
    let o = kast(
        dir.path(),
        &["segment-analyze", "--data", data.to_str().unwrap(), "--keys", "colour"],
    );
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("colour") && err.contains("brand") && err.contains("category"),
        "{err}"
    );

    let single = dir.path().join("single.csv");
    std::fs::write(&single, "user,item,timestamp,label,category\n0,1,10,1,2\n1,3,10,1,2\n").unwrap();
    let out = dir.path().join("single");
    ok(
        &out,
        &[
            "segment-analyze",
            "--data",
            single.to_str().unwrap(),
            "--keys",
            "category",
        ],
    );
    let csv = std::fs::read_to_string(out.join("misdivision.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0,NA")), "{csv}");
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "30");
    let out = dir.path().join("train");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "0",
        "--seed",
        "3",
    ];
    args.extend(SMALL);
    ok(&out, &args);
    let stored = kast_autodiff::checkpoint::load(out.join("checkpoint.bin")).unwrap();

    let seqs = load_interactions(&data, &ColumnSchema::default()).unwrap();
    let (tr, te) = split_by_time(&seqs, 1_600_000_000);
    let cfg = TrainConfig {
        epochs: 0,
        seed: 3,
        network: NetworkConfig {
            d_model: 6,
            hidden: 6,
            mlp: vec![8],
            ..NetworkConfig::default()
        },
        ..TrainConfig::default()
    };
    let init = Trainer::new(&tr, &te, cfg).unwrap().store;
    assert_eq!(stored, init);
    assert_eq!(json(out.join("metrics.json"))["epochs"].as_array().unwrap().len(), 0);
}

#[test]
fn train_then_eval_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "60");
    let d = data.to_str().unwrap();
    let tr = dir.path().join("train");
    let mut args = vec!["train", "--data", d, "--epochs", "2"];
    args.extend(SMALL);
    ok(&tr, &args);
    for f in [
        "metrics.json",
        "metrics.csv",
        "timings.json",
        "checkpoint.bin",
        "predictions.csv",
        "manifest.json",
    ] {
        assert!(tr.join(f).exists(), "{f}");
    }
    let ckpt = tr.join("checkpoint.bin");
    let mut eval = vec!["eval", "--data", d, "--checkpoint", ckpt.to_str().unwrap()];
    eval.extend(SMALL);
    let (e1, e2) = (dir.path().join("e1"), dir.path().join("e2"));
    ok(&e1, &eval);
    ok(&e2, &eval);
    assert_eq!(
        std::fs::read(e1.join("eval.json")).unwrap(),
        std::fs::read(e2.join("eval.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(e1.join("predictions.csv")).unwrap(),
        std::fs::read(e2.join("predictions.csv")).unwrap()
    );
    let auc = json(e1.join("eval.json"))["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));

    // A checkpoint of another shape is a configuration error.
    let o = kast(
        &dir.path().join("e3"),
        &[
            "eval",
            "--data",
            d,
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--d-model",
            "5",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn ablate_kse_variants_has_four_rows() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "30");
    let out = dir.path().join("abl");
    let mut args = vec![
        "ablate",
        "--data",
        data.to_str().unwrap(),
        "--suite",
        "kse_variants",
        "--seeds",
        "0",
        "--epochs",
        "2",
    ];
    args.extend(SMALL);
    ok(&out, &args);
    let csv = std::fs::read_to_string(out.join("ablation_summary.csv")).unwrap();
    let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["none", "transE", "transH", "transD"]);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "10");
    let d = data.to_str().unwrap();
    let conflicting = kast(dir.path(), &["train", "--data", d, "--test-data", d, "--cutoff", "5"]);
    assert_eq!(code(&conflicting), 1);
    assert_eq!(code(&kast(dir.path(), &["train", "--data", d, "--ass", "maybe"])), 1);
    assert_eq!(code(&kast(dir.path(), &["train", "--data", d, "--kse", "transQ"])), 1);
    assert_eq!(
        code(&kast(dir.path(), &["train", "--data", d, "--warmup-epochs", "9"])),
        1
    );
    assert_eq!(code(&kast(dir.path(), &["train"])), 1);
    assert_eq!(code(&kast(dir.path(), &["frobnicate"])), 1);

    let help = kast(dir.path(), &["train", "--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for flag in [
        "--ass",
        "--kse",
        "--alpha",
        "--k-depth",
        "--sn",
        "--gamma",
        "--margin",
        "--seed",
        "--ass-conflict",
        "--kse-sign",
    ] {
        assert!(text.contains(&format!("{flag} <")), "{flag} missing from help");
    }
    assert!(text.contains("[default: 0.5]") && text.contains("[default: transE]"));
}

#[test]
fn divergence_exits_two_with_partial_report() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "20");
    let out = dir.path().join("t");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "3",
        "--lr",
        "1e300",
    ];
    args.extend(SMALL);
    let o = kast(&out, &args);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    let epochs = json(out.join("metrics.json"))["epochs"].as_array().unwrap().len();
    assert!(epochs >= 1);
    assert!(!out.join("checkpoint.bin").exists());
}

#[test]
fn settings_precedence_is_file_then_env_then_flag() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("settings.conf");
    std::fs::write(&cfg, "# test\nusers = 11\ntopics_per_user = 3\npmis = 0.2\n").unwrap();
    let run = |sub: &str, env: Option<(&str, &str)>, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut c = Command::new(env!("CARGO_BIN_EXE_kast"));
        c.arg("--out-dir")
            .arg(&out)
            .arg("--config")
            .arg(&cfg)
            .arg("gen-data")
            .args(extra);
        c.env_remove("KAST_USERS").env_remove("KAST_OUT_DIR");
        if let Some((k, v)) = env {
            c.env(k, v);
        }
        assert!(c.status().unwrap().success());
        json(out.join("manifest.json"))["settings"].clone()
    };
    let s = run("file", None, &[]);
    assert_eq!(
        (s["users"].as_str(), s["topics-per-user"].as_str(), s["seed"].as_str()),
        (Some("11"), Some("3"), Some("0"))
    );
    assert_eq!(run("env", Some(("KAST_USERS", "12")), &[])["users"], "12");
    assert_eq!(
        run("flag", Some(("KAST_USERS", "12")), &["--users", "13"])["users"],
        "13"
    );

    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kast"))
        .arg("--out-dir")
        .arg(dir.path().join("bad"))
        .arg("--config")
        .arg(&cfg)
        .arg("gen-data")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("from-env");
    let st = Command::new(env!("CARGO_BIN_EXE_kast"))
        .args(["gen-data", "--users", "5"])
        .env("KAST_OUT_DIR", &out)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(out.join("interactions.csv").exists());
}

#[test]
fn replay_verifies_and_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let data = generate(&dir, "40");
    let tr = dir.path().join("train");
    let mut args = vec!["train", "--data", data.to_str().unwrap(), "--epochs", "2"];
    args.extend(SMALL);
    ok(&tr, &args);
    let manifest = tr.join("manifest.json");
    let m = manifest.to_str().unwrap();

    let stdout = ok(&dir.path().join("r1"), &["replay", "--verify", "--manifest", m]);
    assert!(stdout.contains("identical  checkpoint.bin"), "{stdout}");

    // Replaying into the recorded directory lands in a nested one.
    ok(&tr, &["replay", "--verify", "--manifest", m]);
    assert!(tr.join("replay").join("metrics.json").exists());

    let mut metrics = std::fs::read(tr.join("metrics.csv")).unwrap();
    metrics.push(b'\n');
    std::fs::write(tr.join("metrics.csv"), metrics).unwrap();
    let o = kast(&dir.path().join("r2"), &["replay", "--verify", "--manifest", m]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics.csv"));

    let mut text = std::fs::read(&data).unwrap();
    text.extend_from_slice(b"999,1,1,1,1,1,1\n");
    std::fs::write(&data, text).unwrap();
    let o = kast(&dir.path().join("r3"), &["replay", "--manifest", m]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("changed"));
}

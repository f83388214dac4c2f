//! End-to-end runs of the `lowbit` binary. Reports are compared byte for byte
//! with files under `tests/golden`; set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::process::{Command, Output};

fn lowbit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lowbit"))
        .args(args)
        .env_remove("LOWBIT_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = lowbit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> serde_json::Value {
    serde_json::from_str(&stdout(args)).unwrap()
}

fn golden(name: &str, args: &[&str]) {
    let got = stdout(args);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
    assert_eq!(got, want, "output of {args:?} drifted from {name}");
}

#[test]
fn golden_radii() {
    golden("radii.json", &["radii", "--scheme", "de", "--bits", "3"]);
}

#[test]
fn golden_beta_prime() {
    golden("beta-prime.json", &["beta-prime", "--beta", "0.9", "--from", "8", "--to", "2"]);
}

#[test]
fn golden_swamp() {
    golden("swamp.json", &["swamp", "--scheme", "linear", "--bits", "2", "--beta", "0.84"]);
}

#[test]
fn golden_ema_sim() {
    golden("ema-sim.json", &["ema-sim", "--scheme", "log:2", "--n", "50", "--iters", "3", "--seed", "1"]);
}

#[test]
fn golden_decay() {
    golden("decay.json", &["decay", "--c", "2", "--s", "3", "--trials", "100", "--seed", "7"]);
}

#[test]
fn golden_track() {
    golden(
        "track.csv",
        &["track", "--scheme", "log:2,linear:2:nearest", "--block-size", "16", "--n", "64", "--steps", "3", "--format", "csv"],
    );
}

#[test]
fn golden_train() {
    golden(
        "train.json",
        &["train", "--optimizer", "solo2-scratch", "--examples", "50", "--dim", "3", "--steps", "20", "--every", "5"],
    );
}

#[test]
fn golden_pack_info() {
    golden("pack-info.json", &["pack-info", "--scheme", "de", "--bits", "4", "--length", "1024"]);
}

#[test]
fn documented_examples() {
    let b = json(&["beta-prime", "--beta", "0.9", "--from", "5", "--to", "4"]);
    assert!((b["metrics"]["beta_prime"].as_f64().unwrap() - 0.820).abs() < 0.005);

    let r = json(&["radii", "--scheme", "linear", "--bits", "2"]);
    for k in ["r_min", "r_median", "r_max"] {
        assert!((r["metrics"][k].as_f64().unwrap() - 0.167).abs() < 0.001);
    }

    let d = json(&["decay", "--c", "2", "--s", "3", "--trials", "10000", "--seed", "7"]);
    assert!((d["metrics"]["mean_hitting_time"].as_f64().unwrap() - 6.0).abs() < 0.3);
}

#[test]
fn every_report_echoes_its_config() {
    for args in [
        &["radii", "--scheme", "log", "--bits", "2", "--base", "0.3"][..],
        &["swamp", "--scheme", "de", "--signed", "--bits", "4"],
        &["ema-sim", "--scheme", "full", "--n", "10", "--iters", "1"],
        &["pack-info", "--scheme", "log", "--length", "0"],
    ] {
        let v = json(args);
        for key in ["name", "seed", "config", "rows", "metrics"] {
            assert!(v.get(key).is_some(), "{args:?} lacks {key}");
        }
        assert!(v["config"].is_object());
    }
    let v = json(&["ema-sim", "--scheme", "de:4:stochastic", "--n", "10", "--iters", "1", "--beta", "0.5"]);
    assert_eq!(v["config"]["beta"], 0.5);
    assert_eq!(v["config"]["format"]["scheme"], "de-unsigned");
    assert_eq!(v["config"]["format"]["rounding"], "stochastic");
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| lowbit(args).status.code();
    assert_eq!(code(&["radii"]), Some(0));
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["beta-prime", "--from", "5"]), Some(2));
    assert_eq!(code(&["radii", "--scheme", "log", "--signed"]), Some(2));
    assert_eq!(code(&["ema-sim", "--scheme", "linear:2:log-dither"]), Some(2));
    assert_eq!(code(&["radii", "--bits", "9"]), Some(3));
    assert_eq!(code(&["beta-prime", "--beta", "1.5", "--from", "5", "--to", "4"]), Some(3));
    assert_eq!(code(&["ema-sim", "--n", "0"]), Some(3));

    let err = String::from_utf8(lowbit(&["radii", "--scheme", "log", "--signed"]).stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
}

#[test]
fn help_documents_every_flag() {
    let cases: [(&str, &[&str]); 9] = [
        ("radii", &["--scheme", "--bits", "--signed", "--base"]),
        ("beta-prime", &["--beta", "--from", "--to"]),
        ("swamp", &["--scheme", "--bits", "--signed", "--beta"]),
        ("ema-sim", &["--scheme", "--p", "--n", "--beta", "--iters", "--seed"]),
        ("decay", &["--c", "--s", "--trials", "--seed"]),
        ("track", &["--scheme", "--block-size", "--n", "--beta", "--sigma", "--drift", "--steps", "--seed"]),
        ("train", &["--model", "--optimizer", "--family", "--lr", "--beta1", "--beta2", "--steps", "--seed"]),
        ("pack-info", &["--scheme", "--bits", "--length", "--block-size", "--input"]),
        ("repro", &[]),
    ];
    for (cmd, flags) in cases {
        let help = stdout(&[cmd, "--help"]);
        for f in flags.iter().chain(&["--format", "--output-dir"]) {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lowbit"))
        .args(["decay", "--c", "1", "--s", "2", "--trials", "10", "--seed", "4", "--format", "csv"])
        .env("LOWBIT_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let written = std::fs::read_to_string(dir.path().join("decay-4.csv")).unwrap();
    assert_eq!(written.trim_end(), String::from_utf8(out.stdout).unwrap().trim_end());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn same_seed_same_bytes() {
    let args = ["ema-sim", "--scheme", "log:2", "--n", "200", "--iters", "20", "--seed", "3"];
    assert_eq!(stdout(&args), stdout(&args));
}

#[test]
fn pack_info_reads_checkpoints() {
    use lowbit::checkpoint;
    use lowbit_core::{BlockQuantization, BlockQuantizedTensor, RoundingMode, SchemeKind};
    use rand::SeedableRng;

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.lbqs");
    let cfg = BlockQuantization::new(SchemeKind::LogUnsigned, 2, RoundingMode::LogDither).unwrap();
    let values: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin().abs()).collect();
    let t = BlockQuantizedTensor::quantize(&values, &cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
    checkpoint::save(&path, &t).unwrap();
    let v = json(&["pack-info", "--input", path.to_str().unwrap()]);
    assert_eq!(v["metrics"]["total_bytes"].as_f64().unwrap() as usize, checkpoint::footprint_bytes(&t));
    assert_eq!(v["metrics"]["blocks"], 8.0);

    std::fs::write(&path, b"LBQS").unwrap();
    assert_eq!(lowbit(&["pack-info", "--input", path.to_str().unwrap()]).status.code(), Some(3));
}

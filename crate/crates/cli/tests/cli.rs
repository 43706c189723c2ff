use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spbtrack"));
    c.env_remove("SPBTRACK_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CLEAN_SPEC: &str = "n_pedestrians = 4\nduration = 4.0\npos_sigma = 0.0\nyaw_sigma = 0.0\ndim_sigma = 0.0\ntp_conf_alpha = 50.0\ntp_conf_beta = 1.0\nseed = 12\n";

/// Column `col` of the aggregate row of an eval or ablation CSV.
fn csv_value(csv: &str, col: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let last: Vec<&str> = lines.last().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == col).unwrap();
    last[i].to_string()
}

#[test]
fn clean_scenario_scores_perfect_mota() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("clean.toml");
    fs::write(&spec, CLEAN_SPEC).unwrap();
    let sc = dir.path().join("sc");
    let res = dir.path().join("res.txt");
    ok(&["generate", "--spec", s(&spec), "--out-dir", s(&sc)]);
    ok(&[
        "track",
        "--detections",
        s(&sc.join("detections.txt")),
        "--features",
        s(&sc.join("features.csv")),
        "--out",
        s(&res),
        "--set",
        "candidate_promote_hits=1",
    ]);
    let table = ok(&["eval", "--gt", s(&sc.join("gt.txt")), "--results", s(&res)]);
    assert!(table.contains("sAMOTA"));
    let csv = fs::read_to_string(dir.path().join("res.eval.csv")).unwrap();
    assert_eq!(csv_value(&csv, "MOTA"), "1.000000");
    assert_eq!(csv_value(&csv, "IDs"), "0");
    for m in [
        "res.manifest.json",
        "res.eval.manifest.json",
        "sc/manifest.json",
    ] {
        assert!(dir.path().join(m).exists(), "{m}");
    }
}

#[test]
fn missing_inputs_are_usage_errors() {
    let out = run(&["track", "--out", "x.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&[
        "track",
        "--detections",
        "/no/such/file.txt",
        "--out",
        "x.txt",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("does not exist") && err.contains("Usage: spbtrack track"),
        "{err}"
    );
    let out = run(&["eval", "--gt", "/no/gt.txt", "--results", "/no/res.txt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_override_is_usage_error() {
    let out = run(&[
        "track",
        "--detections",
        s(&fixture("seq0000.txt")),
        "--out",
        "/tmp/never-written.txt",
        "--set",
        "omega_assoc=1.5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega_assoc"));
}

#[test]
fn malformed_file_fails_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("bad.txt");
    fs::write(&det, "0 Pedestrian 0 0 0 0 0 0 0 1.8 0.5 0.6 1 2 0 0 0.9\n1 Pedestrian 0 0 0 0 0 0 0 1.8 oops 0.6 1 2 0 0 0.9\n").unwrap();
    let out = run(&[
        "track",
        "--detections",
        s(&det),
        "--out",
        s(&dir.path().join("o.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt:2"), "{err}");
}

#[test]
fn golden_sequence_output() {
    let dir = tempfile::tempdir().unwrap();
    let res = dir.path().join("seq0000.txt");
    let stdout = ok(&[
        "track",
        "--detections",
        s(&fixture("seq0000.txt")),
        "--out",
        s(&res),
    ]);
    assert!(stdout.contains("skipped 3 non-person detections"));
    assert_eq!(
        fs::read_to_string(&res).unwrap(),
        fs::read_to_string(fixture("seq0000.golden.txt")).unwrap()
    );
}

#[test]
fn manifest_replays_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.txt");
    ok(&[
        "track",
        "--detections",
        s(&fixture("seq0000.txt")),
        "--out",
        s(&first),
        "--set",
        "variant=dukf",
        "--set",
        "omega_lpf=0.6",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "track");
    assert_eq!(manifest["config"]["variant"], "dukf");
    assert!(manifest["timing"]["frames_per_second"].as_f64().unwrap() > 0.0);
    assert_eq!(manifest["inputs"][0], s(&fixture("seq0000.txt")));

    let cfg = dir.path().join("replay.toml");
    fs::write(&cfg, manifest["config_text"].as_str().unwrap()).unwrap();
    let second = dir.path().join("b.txt");
    ok(&[
        "track",
        "--detections",
        s(&fixture("seq0000.txt")),
        "--out",
        s(&second),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn env_config_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "variant = \"kf\"\nmax_lost_frames = 7\n").unwrap();
    let out = dir.path().join("o.txt");
    let status = bin()
        .env("SPBTRACK_CONFIG", &cfg)
        .args([
            "track",
            "--detections",
            s(&fixture("seq0000.txt")),
            "--out",
            s(&out),
            "--set",
            "max_lost_frames=9",
        ])
        .output()
        .unwrap();
    assert!(status.status.success());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(m["config"]["variant"], "kf");
    assert_eq!(m["config"]["lifecycle"]["max_lost_frames"], 9);
}

#[test]
fn directory_mode_tracks_and_evaluates_each_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let (dets, gts, res) = (
        dir.path().join("det"),
        dir.path().join("gt"),
        dir.path().join("res"),
    );
    fs::create_dir_all(&dets).unwrap();
    fs::create_dir_all(&gts).unwrap();
    for seed in ["1", "2"] {
        let sc = dir.path().join(format!("sc{seed}"));
        ok(&["generate", "--out-dir", s(&sc), "--seed", seed]);
        fs::copy(
            sc.join("detections.txt"),
            dets.join(format!("{seed:0>4}.txt")),
        )
        .unwrap();
        fs::copy(sc.join("gt.txt"), gts.join(format!("{seed:0>4}.txt"))).unwrap();
    }
    ok(&[
        "track",
        "--detections",
        s(&dets),
        "--out",
        s(&res),
        "--set",
        "workers=2",
    ]);
    assert!(res.join("0001.txt").exists() && res.join("0002.txt").exists());
    assert!(res.join("manifest.json").exists());
    let table = ok(&["eval", "--gt", s(&gts), "--results", s(&res)]);
    assert!(table.contains("0001") && table.contains("0002") && table.contains("all"));
    let csv = fs::read_to_string(res.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn single_cell_ablation_matches_track_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "n_pedestrians = 5\nduration = 5.0\npos_sigma = 0.1\ndropout = 0.1\nseed = 4\n",
    )
    .unwrap();
    let csv_path = dir.path().join("abl.csv");
    ok(&[
        "ablate",
        "--scenario",
        s(&spec),
        "--sweep",
        "variant:dukf",
        "--seeds",
        "1",
        "--out",
        s(&csv_path),
    ]);
    let abl = fs::read_to_string(&csv_path).unwrap();
    assert!(dir.path().join("abl.manifest.json").exists());

    let sc = dir.path().join("sc");
    let res = dir.path().join("r.txt");
    ok(&["generate", "--spec", s(&spec), "--out-dir", s(&sc)]);
    ok(&[
        "track",
        "--detections",
        s(&sc.join("detections.txt")),
        "--features",
        s(&sc.join("features.csv")),
        "--out",
        s(&res),
        "--set",
        "variant=dukf",
    ]);
    ok(&["eval", "--gt", s(&sc.join("gt.txt")), "--results", s(&res)]);
    let ev = fs::read_to_string(dir.path().join("r.eval.csv")).unwrap();
    // the file path rounds boxes to 1e-6, so counts agree exactly and
    // ratios to that precision
    let num = |csv: &str, col: &str| csv_value(csv, col).parse::<f64>().unwrap();
    for col in ["IDs", "TP", "FP", "FN", "GT"] {
        assert_eq!(num(&abl, col), num(&ev, col), "{col}");
    }
    for col in ["sAMOTA", "AMOTA", "MOTA", "MOTP"] {
        assert!((num(&abl, col) - num(&ev, col)).abs() < 1e-5, "{col}");
    }
}

#[test]
fn ablation_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "n_pedestrians = 4\nduration = 3.0\npos_sigma = 0.15\nfp_rate = 0.3\n",
    )
    .unwrap();
    let args = |out: &Path| {
        vec![
            "ablate".to_string(),
            "--scenario".into(),
            s(&spec).into(),
            "--sweep".into(),
            "variant:kf,ukf,dukf".into(),
            "--sweep".into(),
            "prefilter_threshold:0.0,0.5".into(),
            "--seeds".into(),
            "3".into(),
            "--out".into(),
            s(out).into(),
        ]
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        let out = bin().args(args(p)).output().unwrap();
        assert!(out.status.success());
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("variant,prefilter_threshold,seeds,"));
}

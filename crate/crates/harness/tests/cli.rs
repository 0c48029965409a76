use jcs_harness::config::ExperimentConfig;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn jcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jcs"))
        .args(args)
        .output()
        .unwrap()
}

fn error_category(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    let v: serde_json::Value =
        serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"));
    v["error"].as_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn overhead_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = jcs(&["overhead", "--out", dir.path().to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = manifest(dir.path());
    assert_eq!(m["files"], serde_json::json!(["overhead.csv"]));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let csv = std::fs::read_to_string(dir.path().join("overhead.csv")).unwrap();
    assert_eq!(csv.lines().count(), 97);
}

#[test]
fn sweeps_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = jcs(&[
            "to-sweep",
            "--seed",
            "5",
            "--realizations",
            "40",
            "--snr-db",
            "-5,10",
            "--bandwidth-ghz",
            "0.88,1.76",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in ["to_sweep.csv", "to_bandwidth.csv", "manifest.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let rows = std::fs::read_to_string(a.path().join("to_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2);
}

#[test]
fn simulated_trace_runs_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let out = jcs(&[
        "simulate",
        "--demo",
        "static",
        "--seed",
        "4",
        "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(sim.join("trace.json").exists() && sim.join("trace.cirb").exists());
    assert_eq!(manifest(&sim)["seed"], 4);

    let run = dir.path().join("run");
    let out = jcs(&[
        "pipeline",
        sim.join("trace").to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["moving_tracks"], 0);
    assert!(metrics["truth"]["max_timing_jump_taps"].as_i64().unwrap() <= 1);
    assert!(run.join("tracks.jsonl").exists());
    assert!(!run.join("spectrogram.f32").exists());
}

#[test]
fn errors_carry_a_category_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "experiment = \"to-sweep\"\nrealizations = 0\n").unwrap();
    let out = jcs(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_category(&out), "config");

    let out = jcs(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_category(&out), "io");

    let stem = dir.path().join("broken");
    std::fs::write(stem.with_extension("json"), "{\"version\": 1}").unwrap();
    std::fs::write(stem.with_extension("cirb"), [0u8; 3]).unwrap();
    let out = jcs(&[
        "pipeline",
        stem.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_category(&out), "trace-format");

    let out = jcs(&[
        "pipeline",
        "--demo",
        "nowhere",
        "--out",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(error_category(&out), "config");
}

#[test]
fn shipped_configs_parse() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        if name.ends_with("_scene.toml") {
            let over = jcs_harness::config::read_overrides(&path).unwrap();
            jcs_harness::config::apply_overrides(&jcs_harness::scenarios::walker_demo(), &over)
                .unwrap();
        } else {
            let cfg = ExperimentConfig::from_toml_file(&path).unwrap();
            cfg.scenario_over(&jcs_harness::scenarios::sweep_base())
                .unwrap();
        }
        n += 1;
    }
    assert!(n >= 6);
}

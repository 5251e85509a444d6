use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_loopshape");

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("cli")
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn loose_spec() -> Value {
    json!({
        "rise_time_max_s": 1.0,
        "settling_time_max_s": 1.0,
        "overshoot_max_fraction": 1.0,
        "phase_margin_min_deg": 1.0,
        "steady_state_error_max_fraction": 1.0
    })
}

fn config(plant: Value, target: Value, horizon: usize) -> Value {
    json!({
        "plant": plant,
        "desired_loop_gain": target,
        "sample_rate_hz": 1000.0,
        "horizon": horizon,
        "inverse": { "filter_half_length": horizon / 2, "total_iterations": 40 },
        "spec": loose_spec(),
        "validation": { "horizon_s": 1.0, "margin_grid": 4096 }
    })
}

fn tf(num: &[f64], den: &[f64]) -> Value {
    json!({ "num": num, "den": den })
}

fn run(dir: &Path, cfg: &Value, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_taps(path: PathBuf) -> Vec<f64> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.trim().parse().unwrap())
        .collect()
}

#[test]
fn probe_reports_relative_order() {
    let dir = scratch("probe");
    let cfg = config(
        json!({ "tf": tf(&[0.5, -0.4], &[1.0, -1.2, 0.35]) }),
        tf(&[0.3], &[1.0, -0.7]),
        100,
    );
    let o = run(&dir, &cfg, &["probe"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("relative order: 1"));
    assert_eq!(read_json(dir.join("out/probe.json"))["relative_order"], 1);

    let delay = config(
        json!({ "tf": tf(&[1.0], &[1.0, 0.0, 0.0, 0.0]) }),
        tf(&[1.0], &[1.0, 0.0, 0.0, 0.0]),
        100,
    );
    let o = run(&dir, &delay, &["probe"]);
    assert!(stdout(&o).contains("relative order: 3"));
}

#[test]
fn zero_plant_is_a_numerical_failure() {
    let dir = scratch("zero");
    let cfg = config(
        json!({ "tf": tf(&[0.0], &[1.0, -0.5]) }),
        tf(&[0.3], &[1.0, -0.7]),
        100,
    );
    let o = run(&dir, &cfg, &["probe"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("all-zero"), "{}", stderr(&o));
}

#[test]
fn manifest_lists_digests_of_outputs() {
    let dir = scratch("manifest");
    let cfg = config(
        json!({ "tf": tf(&[0.5], &[1.0, -0.8]) }),
        tf(&[0.4], &[1.0, -0.6]),
        100,
    );
    let o = run(&dir, &cfg, &["probe"]);
    assert_eq!(code(&o), 0);
    let m = read_json(dir.join("out/manifest_probe.json"));
    assert_eq!(m["command"], "probe");
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for entry in outputs {
        let bytes = std::fs::read(dir.join("out").join(entry["file"].as_str().unwrap())).unwrap();
        assert_eq!(entry["bytes"], bytes.len());
        assert_eq!(entry["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(m["parameters"]["horizon"], 100);
}

#[test]
fn delay_inverse_converges_and_reruns_identically() {
    let dir = scratch("inverse");
    let mut cfg = config(
        json!({ "tf": tf(&[1.0], &[1.0, 0.0]) }),
        tf(&[1.0], &[1.0, 0.0]),
        64,
    );
    cfg["inverse"] = json!({ "filter_half_length": 32, "total_iterations": 10, "cross_update_period": 1, "initial_gain_alpha": 1.0 });
    let o = run(&dir, &cfg, &["learn-inverse"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = read_json(dir.join("out/inverse.json"));
    assert!(summary["iterations"].as_u64().unwrap() <= 3);
    let taps = read_taps(dir.join("out/inverse_fir.csv"));
    assert!((taps[31] - 1.0).abs() < 1e-12);

    let names = [
        "inverse_fir.csv",
        "inverse_learning_curve.csv",
        "inverse.json",
        "manifest_learn-inverse.json",
    ];
    let first: Vec<Vec<u8>> = names
        .iter()
        .map(|n| std::fs::read(dir.join("out").join(n)).unwrap())
        .collect();
    let o = run(&dir, &cfg, &["learn-inverse"]);
    assert_eq!(code(&o), 0);
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(
            &std::fs::read(dir.join("out").join(n)).unwrap(),
            bytes,
            "{n}"
        );
    }
}

#[test]
fn first_order_controller_matches_division() {
    // C = L_d / P = 0.8 (z - 0.8) / (z - 0.6)
    let dir = scratch("division");
    let cfg = config(
        json!({ "tf": tf(&[0.5], &[1.0, -0.8]) }),
        tf(&[0.4], &[1.0, -0.6]),
        200,
    );
    let o = run(&dir, &cfg, &["shape"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let taps = read_taps(dir.join("out/controller_fir.csv"));
    assert!((taps[0] - 0.8).abs() < 1e-9);
    for (k, t) in taps.iter().enumerate().skip(1).take(40) {
        let want = -0.16 * 0.6f64.powi(k as i32 - 1);
        assert!((t - want).abs() < 1e-9, "tap {k}: {t} vs {want}");
    }
}

#[test]
fn full_run_on_identity_plant() {
    let dir = scratch("identity");
    let cfg = config(
        json!({ "tf": tf(&[1.0], &[1.0]) }),
        tf(&[0.8], &[1.0, -0.5]),
        200,
    );
    let o = run(&dir, &cfg, &["full"]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
    let red = read_json(dir.join("out/reduction.json"));
    assert_eq!(red["order"], 1);
    let report = read_json(dir.join("out/report.json"));
    assert_eq!(report["pass"], true);
    // G = 0.8 / (z + 0.3)
    let pole = report["g_iir"]["closed_loop_poles"][0][0].as_f64().unwrap();
    assert!((pole + 0.3).abs() < 1e-9);
    for f in [
        "impulse.csv",
        "controller_fir.csv",
        "bode.csv",
        "step_g_d.csv",
        "step_g_iir.csv",
        "manifest_full.json",
    ] {
        assert!(dir.join("out").join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(dir.join("out/bode.csv")).unwrap();
    assert!(header.starts_with(
        "freq_hz,c_fir_db,c_fir_deg,c_iir_db,c_iir_deg,ld_db,ld_deg,l_iir_db,l_iir_deg\n"
    ));
}

#[test]
fn failed_spec_exits_with_two() {
    let dir = scratch("spec");
    let mut cfg = config(
        json!({ "tf": tf(&[1.0], &[1.0]) }),
        tf(&[0.8], &[1.0, -0.5]),
        200,
    );
    cfg["spec"]["steady_state_error_max_fraction"] = json!(0.01);
    let o = run(&dir, &cfg, &["validate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert_eq!(read_json(dir.join("out/report.json"))["pass"], false);
}

#[test]
fn configuration_errors_exit_with_four() {
    let dir = scratch("config");
    let good = config(
        json!({ "tf": tf(&[0.5], &[1.0, -0.8]) }),
        tf(&[0.4], &[1.0, -0.6]),
        100,
    );

    let mut negative = good.clone();
    negative["spec"]["overshoot_max_fraction"] = json!(-0.1);
    assert_eq!(code(&run(&dir, &negative, &["validate"])), 4);

    let mut two_plants = good.clone();
    two_plants["plant"] = json!({ "tf": tf(&[1.0], &[1.0]), "process": { "program": "x" } });
    assert_eq!(code(&run(&dir, &two_plants, &["probe"])), 4);

    let mut unknown = good.clone();
    unknown["horizn"] = json!(10);
    assert_eq!(code(&run(&dir, &unknown, &["probe"])), 4);

    assert_eq!(code(&run(&dir, &good, &["probe", "--horizon", "101"])), 4);
    assert_eq!(code(&run(&dir, &good, &["probe", "--seedless=true"])), 4);
    assert_eq!(code(&run(&dir, &good, &["probe", "--seedless"])), 0);

    let missing = Command::new(BIN).arg("probe").output().unwrap();
    assert_eq!(code(&missing), 4);
}

#[test]
fn lower_target_order_is_a_configuration_error() {
    let dir = scratch("order");
    let cfg = config(
        json!({ "tf": tf(&[1.0], &[1.0, -0.5, 0.0]) }),
        tf(&[0.4], &[1.0, -0.6]),
        100,
    );
    let o = run(&dir, &cfg, &["shape"]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("relative order"));
}

#[test]
fn process_plant_matches_in_process_plant() {
    let exe = Path::new(BIN).with_file_name("tf-plant");
    if !exe.exists() {
        eprintln!("tf-plant not built; run the workspace tests to cover the process plant");
        return;
    }
    let model = json!({ "num": [0.5], "den": [1.0, -0.8], "fs_hz": 1000.0 });
    let dir = scratch("process");
    let local = config(
        json!({ "tf": tf(&[0.5], &[1.0, -0.8]) }),
        tf(&[0.4], &[1.0, -0.6]),
        100,
    );
    assert_eq!(code(&run(&dir, &local, &["learn-inverse"])), 0);
    let a = std::fs::read(dir.join("out/inverse_fir.csv")).unwrap();

    let mut remote = local.clone();
    remote["plant"] =
        json!({ "process": { "program": exe, "args": ["--inline", model.to_string()] } });
    let o = run(&dir, &remote, &["learn-inverse"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.join("out/inverse_fir.csv")).unwrap(), a);
}

#[test]
fn guide_example_config_runs() {
    let guide = include_str!("../../../book/src/cli.md");
    let start = guide.find("```json\n").unwrap() + 8;
    let end = start + guide[start..].find("```").unwrap();
    let cfg: Value = serde_json::from_str(&guide[start..end]).unwrap();
    let dir = scratch("guide");
    let o = run(&dir, &cfg, &["full"]);
    assert_eq!(code(&o), 0, "{}\n{}", stdout(&o), stderr(&o));
}

#[test]
fn shipped_benchmark_config_parses() {
    let dir = scratch("shipped");
    let text = include_str!("../../../configs/benchmark.json");
    let cfg: Value = serde_json::from_str(text).unwrap();
    let o = run(&dir, &cfg, &["probe"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("relative order: 1"));
}

use std::path::Path;
use std::process::{Command, Output};

use betacpd::experiments::{self, io as series_io};
use betacpd::inference::{self, FitOptions};
use betacpd::monitor::{self, DetectionReport, MonitorPlan};
use betacpd::{ExogOrder, ExperimentConfig};

const NULL: &str = r#"
kind = "null_size"
replications = 30

[model]
phi0 = 0.5
phi = [0.1, 0.2, 0.2]
psi = [0.5]
tau = 100.0

[exogenous]
ar = [-0.1]
innovation_sd = 1.0

[monitoring]
m = [50]
n_ratio = 1.0
d = 5
gammas = [0.0, 0.25]
alphas = [0.1, 0.05]
t_star = 20
m_sim = 100
threshold_reps = 300
reference = { source = "simulated", length = 2000 }
"#;

fn betacpd(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_betacpd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BETACPD_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn threshold_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(betacpd(&["threshold", "--config", &cfg, "--seed", "7"], &a).status.success());
    assert!(betacpd(&["threshold", "--config", &cfg, "--seed", "7"], &b).status.success());
    for name in ["report.json", "thresholds.csv"] {
        assert_eq!(read(a.join(name)), read(b.join(name)), "{name}");
    }
    let lib = experiments::run_threshold_table(&ExperimentConfig::from_toml_str(NULL).unwrap(), 7).unwrap();
    assert_eq!(read(a.join("thresholds.csv")), lib.table.to_csv());
}

#[test]
fn simulate_fit_and_sweep_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL);
    let out = dir.path().join("out");
    assert!(betacpd(&["simulate", "--config", &cfg, "--n", "400", "--seed", "3"], &out).status.success());
    let series_path = out.join("series.csv");
    let lib_series =
        experiments::simulate_series(&ExperimentConfig::from_toml_str(NULL).unwrap(), 400, 3).unwrap();
    assert_eq!(read(&series_path), series_io::series_to_csv(&lib_series));

    let input = series_path.to_str().unwrap();
    assert!(betacpd(&["fit", "--input", input, "--p", "3", "--q", "0"], &out).status.success());
    let fit = inference::fit(3, ExogOrder::Lags(0), &lib_series, &FitOptions::default()).unwrap();
    assert_eq!(read(out.join("fit.json")), serde_json::to_string_pretty(&fit).unwrap());

    assert!(betacpd(&["sweep", "--input", input, "--p", "1,2,3", "--q", "none,0"], &out).status.success());
    let table = inference::model_selection_sweep(
        &lib_series,
        &[1, 2, 3],
        &[ExogOrder::None, ExogOrder::Lags(0)],
        &FitOptions::default(),
    )
    .unwrap();
    assert_eq!(read(out.join("sweep.csv")), table.to_csv());

    assert!(betacpd(&["gamma", "--input", input, "--d", "4", "--t-star", "10"], &out).status.success());
    let gamma: serde_json::Value = serde_json::from_str(&read(out.join("gamma.json"))).unwrap();
    assert_eq!(gamma["kernel"]["gamma"].as_array().unwrap().len(), 4);
}

#[test]
fn calibrate_then_monitor_emits_a_detection_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL);
    let out = dir.path().join("out");
    let lib_cfg = ExperimentConfig::from_toml_str(NULL).unwrap();
    let series = experiments::simulate_series(&lib_cfg, 100, 5).unwrap();
    let training = dir.path().join("training.csv");
    std::fs::write(&training, series_io::series_to_csv(&series.slice(0, 50))).unwrap();
    let status = betacpd(
        &["calibrate", "--input", training.to_str().unwrap(), "--config", &cfg, "--gamma", "0.25", "--alpha", "0.05", "--seed", "2"],
        &out,
    )
    .status;
    assert!(status.success());
    let plan_path = out.join("plan.json");
    let plan = MonitorPlan::from_json(&read(&plan_path)).unwrap();
    assert_eq!(plan.m, 50);

    let mut stream = String::from("index,value\n");
    for (i, x) in series.x[50..].iter().enumerate() {
        stream.push_str(&format!("{},{x}\n", 51 + i));
    }
    let stream_path = dir.path().join("stream.csv");
    std::fs::write(&stream_path, &stream).unwrap();
    let run = betacpd(&["monitor", "--plan", plan_path.to_str().unwrap(), "--input", stream_path.to_str().unwrap()], &out);
    assert!(run.status.success());
    let printed: DetectionReport = serde_json::from_slice(&run.stdout).unwrap();
    let expected = monitor::monitor_records(&plan, &monitor::parse_stream(&stream).unwrap(), None).unwrap();
    assert_eq!(printed, expected);
    assert_eq!(read(out.join("report.json")), serde_json::to_string_pretty(&expected).unwrap());
    assert_eq!(printed.horizon_end_index, 100);

    // A stream that does not start at m + 1 is an input error.
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,0.5\n2,0.5\n").unwrap();
    let run = betacpd(&["monitor", "--plan", plan_path.to_str().unwrap(), "--input", bad.to_str().unwrap()], &out);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // Missing mandatory seed and unknown flags are usage errors.
    let cfg = write_config(dir.path(), NULL);
    assert_eq!(betacpd(&["threshold", "--config", &cfg], &out).status.code(), Some(2));
    assert_eq!(betacpd(&["threshold", "--config", &cfg, "--seed", "1", "--bogus"], &out).status.code(), Some(2));
    // Missing required config keys.
    let broken = write_config(dir.path(), &NULL.replace("gammas = [0.0, 0.25]\n", ""));
    let run = betacpd(&["threshold", "--config", &broken, "--seed", "1"], &out);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("gammas"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), NULL);
    let target = dir.path().join("from-env");
    let status = Command::new(env!("CARGO_BIN_EXE_betacpd"))
        .args(["simulate", "--config", &cfg, "--n", "50", "--seed", "1", "--threads", "1"])
        .env("BETACPD_OUT_DIR", &target)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("series.csv").exists());
}

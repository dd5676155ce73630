use std::process::Command;

use bdris::channels::ChannelModel;
use bdris::harness::{run, write_csv, ExperimentConfig, CSV_HEADER};

const SMALL: &str = "\
experiment = small
system = siso
n_i = 4, 9
spacing = 0.25
models = exact, app2, app3
trials = 3
seed = 11
";

fn csv_bytes(text: &str, overrides: &[(&str, &str)]) -> Vec<u8> {
    let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let cfg = ExperimentConfig::from_text(text, &ov).unwrap();
    let mut out = Vec::new();
    write_csv(&run(&cfg).unwrap(), &mut out).unwrap();
    out
}

#[test]
fn csv_is_reproducible_across_runs_and_thread_counts() {
    let a = csv_bytes(SMALL, &[("threads", "1")]);
    let b = csv_bytes(SMALL, &[("threads", "1")]);
    let c = csv_bytes(SMALL, &[("threads", "3")]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    // 2 sweep points x 3 models x (3 trials + mean)
    assert_eq!(text.lines().count(), 1 + 2 * 3 * 4);
}

#[test]
fn different_seeds_give_different_results() {
    assert_ne!(csv_bytes(SMALL, &[]), csv_bytes(SMALL, &[("seed", "12")]));
}

#[test]
fn exact_model_is_its_own_reference() {
    let cfg = ExperimentConfig::from_text(SMALL, &[]).unwrap();
    for r in run(&cfg).unwrap().iter().filter(|r| r.model == ChannelModel::Exact) {
        assert!((r.relative_pct - 100.0).abs() < 1e-9, "{r:?}");
        assert!(r.metric_value > 0.0);
    }
}

#[test]
fn mimo_and_nearfield_runs_complete() {
    for text in [
        "system = mimo-single-stream\nantennas = 2\nn_i = 4\ntopology = band:1\nmodels = exact, app3\ntrials = 2\n",
        "scenario = nearfield-tx\nsystem = siso\nn_i = 4\nr = 0.1, 1\nmodels = exact, app2\ntrials = 2\n",
    ] {
        let rows = run(&ExperimentConfig::from_text(text, &[]).unwrap()).unwrap();
        assert!(rows.iter().all(|r| r.failures == 0 && r.metric_value.is_finite()), "{rows:?}");
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bdris"))
}

#[test]
fn cli_run_with_overrides_writes_csv() {
    let dir = std::env::temp_dir().join(format!("bdris-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("small.conf");
    std::fs::write(&conf, SMALL).unwrap();
    let out = dir.join("out.csv");
    let status = bin()
        .args(["--threads", "1", "run", "--config"])
        .arg(&conf)
        .args(["--trials", "2", "--n-i=4"])
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_rejects_bad_config() {
    let dir = std::env::temp_dir().join(format!("bdris-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let conf = dir.join("bad.conf");
    std::fs::write(&conf, "system = quantum\n").unwrap();
    let out = bin().arg("run").arg("--config").arg(&conf).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("quantum"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_selftest_passes() {
    let out = bin().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn cli_validate_prop2_prints_csv() {
    let out = bin()
        .args(["validate-prop2", "--n-t", "2", "--n-r", "2", "--n-i", "6", "--trials", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("trial,q,mismatch"));
    assert_eq!(text.lines().count(), 4);
}

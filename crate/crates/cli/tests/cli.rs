use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn meinhardt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meinhardt")).args(args).output().expect("binary runs")
}

fn out_dir(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = meinhardt(&["simulate", "--config", "default", "--seed", "7", "--out", out_dir(d)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["trajectory_activator.csv", "trajectory_inhibitor.csv", "trajectory.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["seed"], 7);

    let other = tmp.path().join("c");
    meinhardt(&["simulate", "--seed", "8", "--out", out_dir(&other)]);
    assert_ne!(
        fs::read(a.join("trajectory_activator.csv")).unwrap(),
        fs::read(other.join("trajectory_activator.csv")).unwrap()
    );
}

#[test]
fn config_file_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "sigma_A = 0.05\nm = 100\nT = 2.0\ndt = 0.01\nrecord_stride = 50\n").unwrap();
    let o = meinhardt(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("trajectory_activator.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 5);
    assert_eq!(lines[0].split(',').count(), 101);

    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let o = meinhardt(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_measure_estimate_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "m = 400\nT = 10.0\ndt = 0.005\nrecord_stride = 1\nscheme = \"semi-implicit-diffusion\"\n")
        .unwrap();
    let sim = tmp.path().join("sim");
    assert!(meinhardt(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out_dir(&sim)]).status.success());
    let heatmap = sim.join("trajectory_activator.csv");
    let meas = tmp.path().join("meas");
    let o = meinhardt(&[
        "measure",
        "--trajectory",
        heatmap.to_str().unwrap(),
        "--delta",
        "1.0",
        "--channels",
        "10",
        "--out",
        out_dir(&meas),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(meas.join("measurements.json").is_file());

    let est = tmp.path().join("est");
    let o =
        meinhardt(&["estimate", "--input", meas.join("measurements.csv").to_str().unwrap(), "--out", out_dir(&est)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("D_hat = "));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(est.join("estimate.json")).unwrap()).unwrap();
    assert_eq!(report["M"], 10);
    assert!(report["D_hat"].as_f64().unwrap() > 0.0);
    assert!(report["ci_plugin"].is_array());

    let o =
        meinhardt(&["plot", "--kind", "heatmap", "--input", heatmap.to_str().unwrap(), "--out", out_dir(tmp.path())]);
    assert!(o.status.success());
    let svg = fs::read_to_string(tmp.path().join("trajectory_activator.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn external_csv_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("ext.csv");
    let mut text = String::from("0,2,4,6,8,10,12,14,16,18\n");
    for j in 0..30 {
        let row: Vec<String> = (0..10)
            .map(|k| {
                let x = std::f64::consts::TAU * k as f64 / 10.0;
                format!("{}", (-(j as f64) * 0.02).exp() * x.cos() + 0.01 * (((j * 13 + k * 7) % 11) as f64 - 5.0))
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(&csv, text).unwrap();
    // a numeric header row is only recognised when announced
    let o =
        meinhardt(&["estimate", "--input", csv.to_str().unwrap(), "--header", "present", "--out", out_dir(tmp.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("estimate.json")).unwrap()).unwrap();
    assert!(report["ci_plugin"].is_null());
    assert_eq!(report["T"], 29.0);
}

#[test]
fn constant_csv_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("flat.csv");
    fs::write(&csv, "1,1,1,1\n1,1,1,1\n1,1,1,1\n").unwrap();
    let o = meinhardt(&["estimate", "--input", csv.to_str().unwrap(), "--out", out_dir(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate data"));

    fs::write(&csv, "1,2\n3\n").unwrap();
    let o = meinhardt(&["estimate", "--input", csv.to_str().unwrap(), "--out", out_dir(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(meinhardt(&["bogus"]).status.code(), Some(1));
    assert_eq!(meinhardt(&["estimate"]).status.code(), Some(1));
    assert_eq!(meinhardt(&["--help"]).status.code(), Some(0));
}

#[test]
fn small_repol_and_campaign_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meinhardt(&[
        "repol",
        "--sigmas",
        "0,0.1",
        "--replicates",
        "2",
        "--horizon",
        "20",
        "--out",
        out_dir(tmp.path()),
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let samples = fs::read_to_string(tmp.path().join("repol_samples.csv")).unwrap();
    assert!(samples.starts_with("sigma,tau"));
    assert!(tmp.path().join("repol_summary.csv").is_file());

    let o = meinhardt(&[
        "campaign",
        "--scenario",
        "linear",
        "--policy",
        "scaled",
        "--replicates",
        "2",
        "--deltas",
        "0.05,0.1",
        "--out",
        out_dir(tmp.path()),
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(tmp.path().join("campaign.csv")).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.contains("slope") && header.contains("coverage_90") && header.contains("coverage_95"));
    assert_eq!(table.lines().count(), 3);

    let o = meinhardt(&[
        "plot",
        "--kind",
        "loglog",
        "--input",
        tmp.path().join("campaign.csv").to_str().unwrap(),
        "--out",
        out_dir(tmp.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = meinhardt(&[
        "plot",
        "--kind",
        "boxplot",
        "--input",
        tmp.path().join("repol_samples.csv").to_str().unwrap(),
        "--out",
        out_dir(tmp.path()),
    ]);
    assert!(o.status.success() || o.status.code() == Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn fbmvar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbmvar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn constants_in_the_clt_regime_at_half() {
    let o = fbmvar(&["constants", "--q", "2", "--hurst", "0.5"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "CLT");
    let c1 = v["c1"].as_f64().unwrap();
    assert!((c1 - 2f64.sqrt()).abs() < 1e-12);
    assert!(v["certified_error"].as_f64().unwrap() < 1e-8);
}

#[test]
fn constants_in_the_hermite_regime() {
    let o = fbmvar(&["constants", "--q", "2", "--hurst", "0.8"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["regime"], "HERMITE");
    assert!(v.get("c2").is_some() && v.get("c1").is_none());
}

#[test]
fn boundary_hurst_is_rejected() {
    let o = fbmvar(&["constants", "--q", "2", "--hurst", "0.75"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_starts_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("path.csv");
    let o = fbmvar(&[
        "simulate",
        "--hurst",
        "0.7",
        "--n",
        "16",
        "--seed",
        "3",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,t,fbm,increment");
    assert!(lines[1].starts_with("0,0,0,"));
    assert_eq!(lines.len(), 18);
    assert!(Path::new(&format!("{}.json", out.display())).exists());
}

#[test]
fn invalid_values_exit_with_two_and_name_the_flag() {
    let o = fbmvar(&["simulate", "--hurst", "1.2", "--n", "16"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--hurst"));
    let o = fbmvar(&[
        "series",
        "--kind",
        "g1",
        "--q",
        "2",
        "--hurst",
        "0.5",
        "--eps-grid",
        "0.5,1.0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--eps-grid"));
    let o = fbmvar(&["constants", "--q", "2", "--hurst", "0.5", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# defaults\nq = 2\nhurst = 0.8\n").unwrap();
    let o = fbmvar(&["constants", "--config", cfg.to_str().unwrap()]);
    assert!(stdout(&o).contains("HERMITE"));
    let o = fbmvar(&[
        "constants",
        "--config",
        cfg.to_str().unwrap(),
        "--hurst",
        "0.5",
    ]);
    assert!(stdout(&o).contains("\"CLT\""));
    std::fs::write(&cfg, "hurst: 0.8\n").unwrap();
    let o = fbmvar(&["constants", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn series_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in ["1", "8"] {
        let out = dir.path().join(format!("g1-{workers}.csv"));
        let o = fbmvar(&[
            "series",
            "--kind",
            "g1",
            "--q",
            "2",
            "--hurst",
            "0.5",
            "--eps-grid",
            "1.5,1.0",
            "--budget",
            "400000",
            "--seed",
            "11",
            "--workers",
            workers,
            "--output",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn budget_exhaustion_keeps_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g1.csv");
    let o = fbmvar(&[
        "series",
        "--kind",
        "g1",
        "--q",
        "2",
        "--hurst",
        "0.5",
        "--eps-grid",
        "1.5,0.01",
        "--budget",
        "200000",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(err["detail"]["error"], "budget_exceeded");
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 2);

    let summary = fbmvar(&["report", out.to_str().unwrap()]);
    assert!(summary.status.success());
    assert!(stdout(&summary)
        .starts_with("run,epsilon,normalized_ratio,predicted_limit,relative_gap\ng1,1.5,"));
}

use std::process::{Command, Output};

fn quadsafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadsafe")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_the_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("hover");
    let o = quadsafe(&["run", "--scenario", "hover", "--duration", "0.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["log.csv", "outer.csv", "metrics.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("sdhocbf"));
}

#[test]
fn compare_writes_one_directory_per_controller() {
    let dir = tempfile::tempdir().unwrap();
    let o = quadsafe(&[
        "compare",
        "--scenario",
        "hover",
        "--duration",
        "0.3",
        "--controllers",
        "sdhocbf,hocbf_filter",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("sdhocbf/metrics.json").is_file());
    assert!(dir.path().join("hocbf_filter/metrics.json").is_file());
}

#[test]
fn unknown_controller_lists_the_valid_ones() {
    let o = quadsafe(&["run", "--scenario", "hover", "--controller", "pid"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for k in ["sdhocbf", "hocbf_filter", "mpc_dc", "dcbf", "dhocbf"] {
        assert!(e.contains(k), "{e}");
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(quadsafe(&["run", "--scenario", "/nonexistent/scenario.toml"]).status.code(), Some(2));
    assert_eq!(quadsafe(&["run", "--scenario", "hover", "--lambda", "3"]).status.code(), Some(2));
    assert_eq!(quadsafe(&["sweep", "--scenario", "hover", "--param", "p"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inside.toml");
    let mut cfg = quadsafe::harness::bundled("circle_two_cylinders").unwrap();
    cfg.initial.position_m = [0.0, 2.0, 1.0];
    quadsafe::harness::save_scenario(&path, &cfg).unwrap();
    let o = quadsafe(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial state violates barrier 1"));
}

#[test]
fn aborted_run_exits_with_three() {
    // The sampled-data controller loses feasibility at t = 1.8 s on this scenario.
    let o = quadsafe(&["run", "--scenario", "circle_two_cylinders", "--duration", "2.5"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stdout).contains("failure: outer controller infeasible"));
}

#[test]
fn sweep_labels_runs_by_value() {
    let o = quadsafe(&["sweep", "--scenario", "hover", "--duration", "0.2", "--param", "lambda", "--values", "0.2,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("sdhocbf_lambda_0.2") && out.contains("sdhocbf_lambda_0.5"));
}

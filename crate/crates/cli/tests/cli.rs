use std::path::Path;
use std::process::{Command, Output};

use anisokepler::{paths, PotentialParams};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anisokepler"));
    c.env_remove("ANISOKEPLER_OUT");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn anisokepler")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Value of `key = value` in structured text.
fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix(" = "))
}

#[test]
fn potential_reports_spiral_condition_and_minima() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["potential", "--weights", "1,2", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "U4"), Some("true"));
    assert_eq!(field(&out, "min_set"), Some("{1.5708, 4.71239}"));
    // the summary lands in the default directory under the working directory
    let written = std::fs::read_to_string(dir.path().join("anisokepler-out/summary.txt")).unwrap();
    assert_eq!(written, out);
}

#[test]
fn verify_quick_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["verify", "--suite", "quick"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(!stdout(&o).contains("FAIL"));
}

#[test]
fn collision_test_rejects_homothetic_minimality() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "collision-test",
        "--weights",
        "1,2",
        "--alpha",
        "1",
        "--s-minus",
        "0,1",
        "--s-plus",
        "1,0",
        "--out",
        "res",
    ];
    let o = run_in(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "verdict"), Some("not a local minimizer"));
    assert_eq!(field(&out, "all_differences_negative"), Some("true"));
    let csv = std::fs::read_to_string(dir.path().join("res/terms.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,A1,A2,A3,B1,B2,B3,total,direct_diff"));
    for row in lines {
        let cells: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 9);
        assert!(cells[8] < 0.0, "{row}");
    }
}

#[test]
fn unknown_flag_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["potential", "--alpha", "1", "--mass", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run_in(dir.path(), &["teleport"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("collision-test"));
}

#[test]
fn malformed_config_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\n  \"potential\": {\n    \"alpha\": 1,,\n    \"weights\": [1, 2]\n  }\n}\n").unwrap();
    let o = run_in(dir.path(), &["potential", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.json:3:"), "{}", stderr(&o));
}

#[test]
fn out_of_range_parameters_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\n  \"potential\": {\n    \"weights\": [1, 2],\n    \"alpha\": 2.5\n  }\n}\n").unwrap();
    let o = run_in(dir.path(), &["potential", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.json:4:"), "{}", stderr(&o));

    let o = run_in(dir.path(), &["potential", "--weights", "1,2", "--alpha", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run_in(dir.path(), &["minimize", "--weights", "1,2", "--alpha", "1", "--p", "1,0", "--q", "0,1", "--energy=-1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"potential": {"alpha": 1.5, "weights": [1, 2]}}"#).unwrap();
    let o = run_in(dir.path(), &["potential", "--config", "run.json", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(field(&stdout(&o), "alpha"), Some("1"));
    assert_eq!(field(&stdout(&o), "weight_ratio"), Some("2"));
}

#[test]
fn sphere_table_potential_matches_weights() {
    let dir = tempfile::tempdir().unwrap();
    let p = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
    let mut table = String::from("theta,U\n");
    for k in 0..360 {
        let th = k as f64 * std::f64::consts::TAU / 360.0;
        table.push_str(&format!("{th:.17e},{:.17e}\n", p.u_theta(th)));
    }
    std::fs::write(dir.path().join("sphere.csv"), table).unwrap();
    std::fs::write(dir.path().join("run.json"), r#"{"potential": {"alpha": 1, "sphere_table": "sphere.csv"}}"#).unwrap();
    let o = run_in(dir.path(), &["potential", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "U3"), Some("true"));
    assert_eq!(field(&out, "min_set"), Some("{1.5708, 4.71239}"));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = bin()
        .current_dir(dir.path())
        .env("ANISOKEPLER_OUT", &target)
        .args(["potential", "--weights", "1,2", "--alpha", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("summary.txt").exists());
}

fn minimize_args(out: &str) -> Vec<String> {
    ["minimize", "--weights", "1,2", "--alpha", "1", "--p", "1,0", "--q=-1,0.5", "--energy", "0.5", "--seed", "7", "--out", out]
        .map(String::from)
        .to_vec()
}

#[test]
fn identical_runs_give_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_in(dir.path(), &minimize_args("a").iter().map(String::as_str).collect::<Vec<_>>());
    let b = run_in(dir.path(), &minimize_args("b").iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0));
    for f in ["summary.txt", "report.txt", "path.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn path_csv_round_trips_to_the_reported_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &minimize_args("m").iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("m/report.txt")).unwrap();
    let value: f64 = field(&report, "value").unwrap().parse().unwrap();
    let h: f64 = field(&report, "h").unwrap().parse().unwrap();
    let path = paths::from_csv(&std::fs::read_to_string(dir.path().join("m/path.csv")).unwrap()).unwrap();
    let p = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
    let again = paths::action_h(&p, &path, h).unwrap();
    assert!((again - value).abs() <= 1e-10 * value.abs(), "{again} vs {value}");
}

#[test]
fn constrained_minimize_keeps_the_winding() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "minimize",
        "--weights",
        "1,2",
        "--alpha",
        "1",
        "--p",
        "1,0",
        "--q",
        "0,-1",
        "--energy",
        "0.5",
        "--theta-minus",
        "0",
        "--theta-plus",
        "3pi/2",
        "--nodes",
        "128",
    ];
    let o = run_in(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("anisokepler-out/report.txt")).unwrap();
    let tp: f64 = field(&report, "theta_plus").unwrap().parse().unwrap();
    assert!((tp - 1.5 * std::f64::consts::PI).abs() < 1e-9, "{tp}");
    // an angle that disagrees with the endpoint is a config error
    let mut bad = args;
    bad[14] = "pi";
    assert_eq!(run_in(dir.path(), &bad).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two_and_keeps_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["minimize", "--weights", "1,2", "--alpha", "1", "--p", "1,0", "--q=-1,0.5", "--fixed-time", "2", "--max-iters", "1", "--restarts", "0"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("did not converge"));
    assert!(dir.path().join("anisokepler-out/path.csv").exists());
}

#[test]
fn integrate_writes_monitors_and_collision_fit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(
        dir.path(),
        &["integrate", "--weights", "1,2", "--alpha", "1", "--x0", "1,0", "--v0=-1.4142135623730951,0", "--t-end", "10", "--formulation", "sundman"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "termination"), Some("collision"));
    let exponent: f64 = field(&out, "collision_exponent").unwrap().parse().unwrap();
    assert!((exponent - 2.0 / 3.0).abs() < 1e-3);
    let csv = std::fs::read_to_string(dir.path().join("anisokepler-out/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x1,x2,v1,v2,h,I,Gamma"));
}

#[test]
fn hyperbolic_run_writes_stage_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.json"),
        r#"{
  "potential": {"alpha": 1, "weights": [1, 2]},
  "problem": {"h": 1, "x0": [1, 0], "s_target": [0, 1], "schedule": {"stages": 13}},
  "output": {"dir": "hyp"}
}"#,
    )
    .unwrap();
    let o = run_in(dir.path(), &["hyperbolic", "--config", "run.json"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = dir.path().join("hyp");
    for k in 0..13 {
        assert!(out.join(format!("stage_{k:02}.csv")).exists());
    }
    let plot = std::fs::read_to_string(out.join("plot.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("t,r,theta,Gamma,I"));
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert_eq!(field(&report, "accepted"), Some("true"));

    // the short default schedule cannot reach the stage tolerance
    let o = run_in(dir.path(), &["hyperbolic", "--config", "run.json", "--stages", "6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not accepted"));
}

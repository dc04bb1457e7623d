use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxpath"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn meta(path: &Path) -> toml::Table {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.toml");
    std::fs::read_to_string(p).unwrap().parse().unwrap()
}

fn simulate(dir: &Path, name: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let p = dir.join(name);
    ok(&["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--n-mc", "200000", "--threads", "1", "--out", p.to_str().unwrap()]);
    p
}

#[test]
fn simulate_writes_header_plus_rows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", 1000, 7);
    let b = simulate(dir.path(), "b.csv", 1000, 7);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 1001);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let m = meta(&a);
    assert!(m["oracle"]["psi"].as_float().is_some());
    assert_eq!(m["config"]["seed"].as_integer(), Some(7));
}

#[test]
fn zero_rows_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--n", "0", "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--n"));
}

#[test]
fn quadr_estimate_is_near_the_sidecar_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 4000, 11);
    let rep = dir.path().join("r.csv");
    ok(&[
        "estimate", "--in", data.to_str().unwrap(), "--out", rep.to_str().unwrap(),
        "--estimators", "quadr", "--nuisance", "parametric", "--maps", "design",
        "--bootstrap-B", "200", "--seed", "3", "--threads", "1",
    ]);
    let psi = meta(&data)["oracle"]["psi"].as_float().unwrap();
    let csv = std::fs::read_to_string(&rep).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "P-quadR");
    let (est, se): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
    assert!((est - psi).abs() <= 5.0 * se, "estimate {est} (se {se}) vs oracle {psi}");
}

#[test]
fn dml_reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 600, 2);
    let go = |name: &str| {
        let p = dir.path().join(name);
        ok(&["estimate", "--in", data.to_str().unwrap(), "--out", p.to_str().unwrap(), "--estimators", "dml", "--folds", "5", "--seed", "3"]);
        std::fs::read_to_string(p).unwrap()
    };
    assert_eq!(go("x.csv"), go("y.csv"));
}

#[test]
fn unknown_estimator_lists_the_valid_names() {
    let out = run(&["estimate", "--in", "nowhere.csv", "--estimators", "tmle"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["por", "pipw", "phybrid1", "phybrid2", "quadr", "dml"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn effects_rows_are_appended() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 800, 5);
    let out = ok(&["estimate", "--in", data.to_str().unwrap(), "--estimators", "quadr", "--bootstrap-B", "20", "--effects"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("E[Y(1)]") && text.contains("P_AMY"));
    assert!(!text.contains("R_AMY"), "continuous outcome has no odds summary");
}

#[test]
fn study_smoke_and_zero_reps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    ok(&["study", "--scenarios", "1", "--reps", "5", "--n", "200", "--bootstrap-B", "20", "--n-mc", "20000", "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5, "header plus one row per estimator");
    assert!(csv.lines().skip(1).all(|l| l.starts_with("1,")));
    let mut txt = out.as_os_str().to_owned();
    txt.push(".txt");
    assert!(std::fs::read_to_string(txt).unwrap().contains("coverage"));

    let bad = run(&["study", "--reps", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fitted_bridges_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", 500, 9);
    let out = dir.path().join("b.txt");
    ok(&["fit-bridges", "--in", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(&out).unwrap();
    let bridges = proxpath::parse_bridges::<f64>(&text).unwrap();
    assert_eq!(bridges.len(), 7);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\nn = 300\n").unwrap();
    let a = dir.path().join("a.csv");
    ok(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "6", "--n-mc", "1000", "--out", a.to_str().unwrap()]);
    let m = meta(&a);
    assert_eq!(m["config"]["seed"].as_integer(), Some(6));
    assert_eq!(m["config"]["n"].as_integer(), Some(300));
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 301);

    std::fs::write(&cfg, "sede = 5\n").unwrap();
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stein-diffusion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"));
    line.split(" = ").nth(1).unwrap().trim().parse().unwrap()
}

#[test]
fn help_everywhere() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    for sub in [
        "density", "build", "stein", "bound", "simulate", "verify", "rate",
    ] {
        let o = run(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let o = run(&["stein", "--family", "uniform", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["build", "--family", "cauchy"]).status.code(), Some(2));
    assert_eq!(run(&["build"]).status.code(), Some(2));
    assert_eq!(run(&["rate", "--n", "4,8"]).status.code(), Some(2));
}

#[test]
fn uniform_ramp_residual() {
    let b = run(&["build", "--family", "uniform", "--seed", "1"]);
    assert_eq!(b.status.code(), Some(0));
    assert!(stdout(&b).contains("passed = true"));
    let o = run(&["stein", "--family", "uniform", "--f", "ramp", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let r = value(&stdout(&o), "residual");
    assert!(r < 1e-6, "residual {r}");
}

#[test]
fn stein_solution_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.csv");
    let o = run(&[
        "stein",
        "--family",
        "beta",
        "--params",
        "2,3",
        "--f",
        "bump",
        "--seed",
        "1",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().count() > 100);
}

#[test]
fn rate_table_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("rate.csv");
    let o = run(&[
        "rate",
        "--n",
        "4,8,16,32,64",
        "--samples",
        "100000",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("N,term1,term2,bound,stderr"));
    let slope = value(&stdout(&o), "fitted_slope");
    assert!(slope.is_finite() && slope < 0.0, "slope {slope}");
    let loglog = std::fs::read_to_string(csv.with_extension("dat")).unwrap();
    assert_eq!(loglog.lines().filter(|l| !l.starts_with('#')).count(), 5);
}

#[test]
fn laplace_verify_passes() {
    let o = run(&[
        "verify",
        "--example",
        "laplace",
        "--samples",
        "1000000",
        "--seed",
        "7",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("unconditional_fails = pass"));
    assert!(text.contains("conditional_holds = pass"));
}

#[test]
fn output_reruns_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&["bound", "--example", "uniform", "--samples", "3000"]);
    assert_eq!(first.status.code(), Some(0));
    let text = stdout(&first);
    assert!(text.contains("[run]") && text.contains("seed = "));
    let cfg = dir.path().join("run.ini");
    std::fs::write(&cfg, &text).unwrap();
    let again = run(&["--config", cfg.to_str().unwrap(), "bound"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(stdout(&again), text);
    let other = run(&["--config", cfg.to_str().unwrap(), "bound", "--seed", "99"]);
    assert_ne!(stdout(&other), text);
}

#[test]
fn density_table() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let o = run(&[
        "density",
        "--family",
        "gamma",
        "--params",
        "2,1",
        "--points",
        "50",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!((value(&stdout(&o), "mean") - 2.0).abs() < 1e-9);
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 51);
}

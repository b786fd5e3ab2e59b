use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modtrace_cli::plot::PlotSeries;
use modtrace_cli::report::{self, ReportRow};
use modtrace_core::algebra::{random_state, FiniteAlgebra};
use modtrace_core::interpolator::{random_gaussian_spec, Envelope, InterpolatorSpec};
use modtrace_core::{Functional, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const HAAGERUP: &str = r#"{
  "states": {"phi": {"diagonal": [0.75, 0.25]}},
  "grid": {"T": 20, "dt": 0.02},
  "experiments": [{"name": "haagerup_trace", "params": {"mu": [0, 0.5, 1]}}]
}"#;

const MIXED: &str = r#"{
  "states": {"phi": {"diagonal": [0.75, 0.25]}, "omega": {"random": true, "seed": 5}},
  "grid": {"T": 20, "dt": 0.02},
  "seed": 9,
  "experiments": [
    {"name": "haagerup_trace", "params": {"mu": [0, 1]}},
    {"name": "x_form_trace", "params": {"state": "omega", "x": ["random"], "mu": [0.5]}},
    {"name": "modular_analytic", "params": {"count": 8}},
    {"name": "majorization", "params": {"count": 8}}
  ]
}"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn modtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modtrace"))
        .args(args)
        .output()
        .unwrap()
}

fn rows_of(out: &Output) -> Vec<ReportRow> {
    report::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap()
}

fn strip_times(mut rows: Vec<ReportRow>) -> Vec<String> {
    for r in &mut rows {
        r.wall_time_ms = 0.0;
    }
    rows.iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect()
}

#[test]
fn haagerup_rows_pass() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", HAAGERUP);
    let out = modtrace(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = rows_of(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r.pass && r.identity_name == "haagerup_trace"));
    for (r, mu) in rows.iter().zip([0.0, 0.5, 1.0]) {
        assert!((r.rhs.re - 1.0 / (2.0 * std::f64::consts::PI * (1.0 + mu))).abs() < 1e-12);
    }
}

#[test]
fn empty_experiments_give_empty_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"experiments": []}"#);
    let out = modtrace(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(rows_of(&out).is_empty());
}

#[test]
fn unknown_experiment_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"states": {"phi": {"diagonal": [0.5, 0.5]}}, "experiments": [{"name": "haagerup_trace"}, {"name": "bogus"}]}"#,
    );
    let out = modtrace(&["verify", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiments[1].name"));
    assert!(out.stdout.is_empty());
}

#[test]
fn missing_config_is_an_io_error() {
    let out = modtrace(&["verify", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tight_tolerance_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", HAAGERUP);
    let out = modtrace(&["verify", cfg.to_str().unwrap(), "--tol-scale", "1e-12"]);
    assert_eq!(out.status.code(), Some(1));
    let rows = rows_of(&out);
    assert!(rows.iter().all(|r| !r.pass));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL haagerup_trace"));
}

#[test]
fn csv_report_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", MIXED);
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = modtrace(&[
        "verify",
        cfg.to_str().unwrap(),
        "--out",
        json.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = modtrace(&[
        "report",
        json.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(&report::CSV_HEADER.join(",")));
    let from_json = report::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let from_csv = report::read_csv(text.as_bytes()).unwrap();
    assert_eq!(from_json.len(), from_csv.len());
    for (a, b) in from_json.iter().zip(&from_csv) {
        assert_eq!(a.identity_name, b.identity_name);
        assert_eq!(a.lhs, b.lhs);
        assert_eq!(a.rhs, b.rhs);
        assert_eq!(a.rel_err, b.rel_err);
        assert_eq!(a.pass, b.pass);
    }
    let out = modtrace(&["verify", cfg.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(
        report::read_csv(&out.stdout[..]).unwrap().len(),
        from_json.len()
    );
}

#[test]
fn cutoff_integrand_integrates_to_one_half() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"states": {"phi": {"diagonal": [0.75, 0.25]}},
            "experiments": [{"name": "haagerup_trace", "params": {"mu": [1]}}]}"#,
    );
    let plots = dir.path().join("plots");
    let out = modtrace(&[
        "verify",
        cfg.to_str().unwrap(),
        "--plot",
        plots.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let file = std::fs::read_dir(&plots)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_string_lossy()
                .contains("cutoff_integrand")
        })
        .expect("integrand series written");
    let series =
        PlotSeries::from_csv("integrand", &std::fs::read_to_string(file).unwrap()).unwrap();
    assert!(
        (series.trapezoid() - 0.5).abs() < 1e-6,
        "{}",
        series.trapezoid()
    );
}

#[test]
fn runs_are_deterministic_across_job_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.json", MIXED);
    let c = cfg.to_str().unwrap();
    let a = strip_times(rows_of(&modtrace(&["verify", c, "--jobs", "1"])));
    let b = strip_times(rows_of(&modtrace(&["verify", c, "--jobs", "4"])));
    let again = strip_times(rows_of(&modtrace(&["verify", c, "--jobs", "1"])));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(a, again);
    let other = strip_times(rows_of(&modtrace(&["verify", c, "--seed", "10"])));
    assert_ne!(a, other);
}

#[test]
fn trace_subcommand_checks_a_spec() {
    let dir = TempDir::new().unwrap();
    let phi = Functional::diagonal(&[0.75, 0.25]).unwrap();
    let spec = InterpolatorSpec::single(Envelope::gaussian(1.0, C64::new(0.2, 0.0)), phi).unwrap();
    let path = write(dir.path(), "f.json", &serde_json::to_string(&spec).unwrap());
    let out = modtrace(&[
        "trace",
        path.to_str().unwrap(),
        "--plot",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = rows_of(&out);
    let names: Vec<_> = rows.iter().map(|r| r.identity_name.as_str()).collect();
    assert_eq!(names, ["trace.trace_formula", "trace.formal_vs_boundary"]);
    assert!(dir.path().join("00_trace_boundary_profile.csv").exists());
}

#[test]
fn unsupported_spec_reports_a_failed_row() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phi = random_state(&FiniteAlgebra::full(2), None, &mut rng);
    let spec = random_gaussian_spec(&phi, 2, &mut rng);
    let path = write(dir.path(), "f.json", &serde_json::to_string(&spec).unwrap());
    let out = modtrace(&["trace", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let rows = rows_of(&out);
    assert!(!rows[0].pass && rows[0].lhs.re.is_nan() && rows[0].note.is_some());
}

#[test]
fn malformed_spec_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "f.json", "{\"terms\": ");
    let out = modtrace(&["trace", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

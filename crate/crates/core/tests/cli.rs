use std::fs;
use std::path::Path;
use std::process::Command;

use inertial_deriv::cli::config::RunConfig;
use inertial_deriv::cli::output::TRACE_HEADER;
use inertial_deriv::cli::{run_config, RunSummary};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_inertial-deriv"));
    c.env_remove("INERTIAL_DERIV_OUT");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_is_byte_for_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "schedule = \"case1\"\nmax_iter = 120\n",
    );
    let out = dir.path().join("o");
    let mut runs = Vec::new();
    for _ in 0..2 {
        let status = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert!(status.success());
        runs.push((
            fs::read(out.join("trace.csv")).unwrap(),
            fs::read(out.join("summary.json")).unwrap(),
        ));
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn trace_has_fixed_header_and_one_row_per_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        max_iter: 57,
        n: 6,
        m_rows: 15,
        out_dir: dir.path().to_path_buf(),
        ..Default::default()
    };
    run_config(&cfg).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("trace.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, TRACE_HEADER);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 58);
    assert_eq!(&rows[0][0], "0");
    // iter_err and deriv_err are defined for least squares
    assert!(!rows[10][3].is_empty() && !rows[10][4].is_empty());
    assert!(rows[0][5].is_empty());
}

#[test]
fn seed_flag_changes_the_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "max_iter = 20\nn = 4\nm_rows = 9\n");
    for (seed, out) in [("1", "s1"), ("2", "s2")] {
        assert!(bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(dir.path().join(out))
            .output()
            .unwrap()
            .status
            .success());
    }
    let s1: RunSummary =
        serde_json::from_slice(&fs::read(dir.path().join("s1/summary.json")).unwrap()).unwrap();
    let s2: RunSummary =
        serde_json::from_slice(&fs::read(dir.path().join("s2/summary.json")).unwrap()).unwrap();
    assert_eq!(s1.config.seed, 1);
    assert_ne!(s1.report.lipschitz, s2.report.lipschitz);
}

#[test]
fn environment_overrides_config_but_not_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        &format!(
            "max_iter = 10\nn = 3\nm_rows = 7\nout_dir = \"{}\"\n",
            dir.path().join("from_config").display()
        ),
    );
    let run = |flag: Option<&str>| {
        let mut c = bin();
        c.env("INERTIAL_DERIV_OUT", dir.path().join("from_env"));
        c.args(["run", "--config"]).arg(&cfg);
        if let Some(f) = flag {
            c.arg("--out").arg(dir.path().join(f));
        }
        assert!(c.output().unwrap().status.success());
    };
    run(None);
    assert!(dir.path().join("from_env/trace.csv").exists());
    assert!(!dir.path().join("from_config").exists());
    run(Some("from_flag"));
    assert!(dir.path().join("from_flag/trace.csv").exists());
}

#[test]
fn quadratic_summary_rate_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    // γ = 0.3 on Q = I gives ρ(M) = |1 − γ| = 0.7
    let cfg = RunConfig::from_toml(&format!(
        "problem = \"quadratic\"\nn = 3\ntheta = [1.0, -2.0, 0.5]\nschedule = \"gradient_descent\"\n\
         gamma_scale = 0.3\nmax_iter = 40\nout_dir = \"{}\"\n",
        dir.path().display()
    ))
    .unwrap();
    let summary = run_config(&cfg).unwrap();
    let r = &summary.report;
    assert!((r.limit.rho - 0.7).abs() < 1e-15);
    let fitted = r.iter_rate.as_ref().unwrap().fitted_rate;
    assert!((fitted - 0.7).abs() < 1e-9, "{fitted}");
    let text = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    assert!(text.contains("fitted_rate"));
    let back: RunSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, &summary);
}

#[test]
fn invalid_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "schedule = \"nope\"\n");
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn divergence_flushes_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "div.toml",
        "problem = \"quadratic\"\nn = 2\nx0 = \"ones\"\nschedule = \"gradient_descent\"\n\
         gamma_scale = 1e150\nmax_iter = 100\n",
    );
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let text = fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    let rows = text.lines().count() - 1;
    assert!((1..101).contains(&rows));
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let quad = write_config(dir.path(), "q.toml", "problem = \"quadratic\"\nn = 4\n");
    assert!(bin()
        .args(["check", "--config"])
        .arg(&quad)
        .output()
        .unwrap()
        .status
        .success());

    let big = write_config(
        dir.path(),
        "g.toml",
        "schedule = \"gradient_descent\"\ngamma_scale = 3.0\nn = 5\nm_rows = 12\n",
    );
    let out = bin()
        .args(["check", "--config"])
        .arg(&big)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("step sizes"));

    let ex2 = write_config(
        dir.path(),
        "e.toml",
        "schedule = \"example2\"\nn = 5\nm_rows = 12\n",
    );
    let out = bin()
        .args(["check", "--config"])
        .arg(&ex2)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("WARN per-iteration convergence premise"));
}

#[test]
fn reproduce_fig1_writes_all_panels() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("reproduce-fig1")
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    for f in [
        "fig1_series.csv",
        "fig1_summary.json",
        "case1_trace.csv",
        "case2_trace.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let series = fs::read_to_string(dir.path().join("fig1_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 402);
    assert!(series.starts_with("k,case1_iter_err,case1_deriv_err,case1_iter_ref"));
}

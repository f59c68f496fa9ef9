use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sphot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn solve(out: &Path, mu: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "solve",
        "--n",
        "2",
        "--mesh",
        "200",
        "--mu",
        mu,
        "--nu",
        "uniform",
        "--mtw-samples",
        "50",
    ];
    args.extend_from_slice(extra);
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    sphot(&args)
}

fn summary_value(stdout: &str, key: &str) -> f64 {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no {key} in output"))
}

#[test]
fn uniform_run_is_all_s1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = solve(tmp.path(), "uniform", &["--solver", "exact"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(summary_value(&stdout, "S1"), 200.0);
    assert_eq!(summary_value(&stdout, "S2"), 0.0);
    assert!(summary_value(&stdout, "total_cost").abs() < 1e-10);
}

#[test]
fn cap_run_reports_bivalent_atoms() {
    let tmp = tempfile::tempdir().unwrap();
    let out = solve(tmp.path(), "cap:0.9", &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(summary_value(&stdout, "S2") > 0.0);
    for f in [
        "mu.json",
        "nu.json",
        "coupling.csv",
        "duals.json",
        "multimap.json",
        "regions.json",
        "holder.json",
        "mtw.json",
        "report.json",
    ] {
        assert!(tmp.path().join(f).exists(), "missing {f}");
    }
}

#[test]
fn tiny_mesh_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sphot(&[
        "solve",
        "--mesh",
        "3",
        "--n",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));
    assert_eq!(sphot(&["solve", "--bogus"]).status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        assert_eq!(
            solve(d, "cap:0.95", &["--seed", "3"]).status.code(),
            Some(0)
        );
        for fmt in ["json", "csv"] {
            assert_eq!(
                sphot(&["report", "--run-dir", d.to_str().unwrap(), "--format", fmt])
                    .status
                    .code(),
                Some(0)
            );
        }
    }
    for f in [
        "report.json",
        "checks.json",
        "checks.csv",
        "coupling.csv",
        "multimap.json",
        "mtw.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn missing_run_directory_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope");
    let out = sphot(&["report", "--run-dir", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let p = |f: &str| d.join(f).to_str().unwrap().to_string();
    assert_eq!(solve(d, "cap:0.9", &[]).status.code(), Some(0));
    let out = sphot(&[
        "extract",
        "--mu",
        &p("mu.json"),
        "--nu",
        &p("nu.json"),
        "--coupling",
        &p("coupling.csv"),
        "--out",
        &p("mm2.json"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read(p("mm2.json")).unwrap(),
        fs::read(p("multimap.json")).unwrap()
    );
    let diag = d.join("diag");
    let out = sphot(&[
        "diagnose",
        "--mu",
        &p("mu.json"),
        "--nu",
        &p("nu.json"),
        "--coupling",
        &p("coupling.csv"),
        "--duals",
        &p("duals.json"),
        "--mtw-samples",
        "0",
        "--out",
        diag.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let out = sphot(&[
        "gen",
        "--n",
        "1",
        "--mesh",
        "30",
        "--density",
        "band:0.5",
        "--out",
        &p("g.json"),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let out = sphot(&["mtw", "--n", "3", "--samples", "100"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("cross-curvature"));
}

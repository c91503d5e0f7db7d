use std::path::Path;
use std::process::{Command, Output};

fn nowcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nowcast"))
        .args(args)
        .output()
        .unwrap()
}

fn simulate(dir: &Path) -> String {
    let fx = dir.join("fx");
    let out = nowcast(&[
        "simulate",
        "--stocks",
        "60",
        "--days",
        "50",
        "--seed",
        "11",
        "--out",
        fx.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    // Keep the test fast.
    let cfg = fx.join("fixture.cfg");
    let mut text = std::fs::read_to_string(&cfg).unwrap();
    text.push_str("consistency.perms = 49\nconsistency.rank_repetitions = 2\nportfolio.groups = 5\nportfolio.horizons = 1d,1w\n");
    std::fs::write(&cfg, text).unwrap();
    cfg.to_str().unwrap().to_string()
}

#[test]
fn missing_factor_file_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path());
    let factors = dir.path().join("fx/factors.csv");
    std::fs::remove_file(&factors).unwrap();
    let out_dir = dir.path().join("rep");
    let out = nowcast(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(factors.to_str().unwrap()), "{stderr}");
    assert!(!out_dir.exists());
}

#[test]
fn run_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        let out = nowcast(&[
            "run",
            "--config",
            &cfg,
            "--out",
            d.to_str().unwrap(),
            "--threads",
            "1",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 5);
    for n in names {
        assert_eq!(
            std::fs::read(a.join(&n)).unwrap(),
            std::fs::read(b.join(&n)).unwrap(),
            "{n:?}"
        );
    }
    let head = std::fs::read_to_string(a.join("returns.csv")).unwrap();
    assert!(head.starts_with("# seed="));
}

#[test]
fn subcommands_write_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = simulate(dir.path());
    let cases: [(&[&str], &str); 8] = [
        (&["ingest"], "coverage.csv"),
        (&["report", "summary"], "summary.csv"),
        (&["report", "corr"], "corr.csv"),
        (
            &["backtest", "--tier", "groups", "--g", "5"],
            "snapshots.csv",
        ),
        (
            &["regress", "--spec", "capm,ff6", "--lags", "3"],
            "regress.csv",
        ),
        (&["turnover"], "turnover.csv"),
        (&["costs"], "costs.csv"),
        (&["consistency", "--perms", "19"], "consistency.csv"),
    ];
    for (i, (args, file)) in cases.iter().enumerate() {
        let out_dir = dir.path().join(format!("o{i}"));
        let mut full = args.to_vec();
        full.extend(["--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        let out = nowcast(&full);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(out_dir.join(file).is_file(), "{args:?}");
        assert!(out_dir.join("manifest.json").is_file(), "{args:?}");
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(nowcast(&["backtest"]).status.code(), Some(2));
    assert_eq!(
        nowcast(&["backtest", "--tier", "sideways"]).status.code(),
        Some(2)
    );
    let out = nowcast(&["consistency", "--panel", "/nonexistent/panel.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

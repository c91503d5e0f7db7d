use std::path::Path;

use nowcast_core::config::RunConfig;
use nowcast_core::ingest::ExtractSchema;
use nowcast_core::pipeline::{run_pipeline, sha256_hex};
use nowcast_core::simulate::{simulate_fixture, write_fixture, SimulationParams};

fn fixture_config(dir: &Path, seed: u64) -> RunConfig {
    let mut p = SimulationParams::new(seed, 80, 60, 0.001);
    p.carry_forward_every = 13;
    let fx = simulate_fixture(&p, 5).unwrap();
    write_fixture(&fx, dir, &ExtractSchema::default()).unwrap();
    let mut cfg = RunConfig::load(&dir.join("fixture.cfg")).unwrap();
    cfg.perms = 99;
    cfg.rank_repetitions = 3;
    cfg.groups = 10;
    cfg
}

#[test]
fn full_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path(), 3);
    cfg.out = dir.path().join("a");
    let a = run_pipeline(&cfg).unwrap();
    cfg.out = dir.path().join("b");
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(a.manifest, b.manifest);
    for (name, hash) in &a.manifest.files {
        let bytes = std::fs::read(a.dir.join(name)).unwrap();
        assert_eq!(&sha256_hex(&bytes), hash, "{name}");
        assert_eq!(bytes, std::fs::read(b.dir.join(name)).unwrap(), "{name}");
    }
    for t in [
        "summary",
        "corr",
        "returns",
        "turnover",
        "regress",
        "group_alphas",
        "costs",
        "consistency",
        "warnings",
    ] {
        assert!(a.manifest.files.contains_key(&format!("{t}.csv")), "{t}");
    }
}

#[test]
fn carry_forward_days_have_zero_turnover() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path(), 4);
    cfg.out = dir.path().join("out");
    run_pipeline(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("out/turnover.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut cf = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[4] == "1" {
            cf += 1;
            assert_eq!(rec[3].parse::<f64>().unwrap(), 0.0);
        }
    }
    assert!(cf > 0);
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path(), 5);
    std::fs::remove_file(&cfg.factors).unwrap();
    cfg.out = dir.path().join("out");
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("factors.csv"), "{err}");
    assert!(!cfg.out.exists());
}

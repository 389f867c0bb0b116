//! Figure data tables checked against stored golden CSVs.
//!
//! Runs use the fixed-step integrator so the tables do not depend on
//! adaptive step selection. Regenerate with `UPDATE_GOLDEN=1 cargo test --test golden`.

use std::path::{Path, PathBuf};

use timebin::commands::{cmd_design, cmd_franson, cmd_simulate, load_config, RunOptions};
use timebin::io::read_csv;

const GOLDEN_STEP: f64 = 0.25;
const REL_TOL: f64 = 1e-9;
const ABS_TOL: f64 = 1e-12;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn fixed() -> RunOptions {
    RunOptions {
        seed: None,
        fixed_step: Some(GOLDEN_STEP),
    }
}

fn check(produced: &Path, golden_name: &str) {
    let golden = golden_dir().join(golden_name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::copy(produced, &golden).unwrap();
        return;
    }
    let (h_new, new) = read_csv(produced).unwrap();
    let (h_old, old) = read_csv(&golden).unwrap_or_else(|e| panic!("{golden_name}: {e}; run with UPDATE_GOLDEN=1"));
    assert_eq!(h_new, h_old, "{golden_name}: header changed");
    assert_eq!(new.len(), old.len(), "{golden_name}: row count changed");
    for (i, (a, b)) in new.iter().zip(&old).enumerate() {
        for (k, (x, y)) in a.iter().zip(b).enumerate() {
            let tol = ABS_TOL + REL_TOL * y.abs();
            assert!(
                (x - y).abs() <= tol,
                "{golden_name} row {} column {}: {x} vs golden {y}",
                i + 1,
                h_old[k]
            );
        }
    }
}

#[test]
fn fig2a_trace() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config(&configs().join("fig2a.toml"), &fixed()).unwrap();
    cmd_simulate(&config, out.path()).unwrap();
    check(&out.path().join("trace.csv"), "fig2a_trace.csv");
}

#[test]
fn fig2b_trace() {
    for (name, golden) in [
        ("fig2b.toml", "fig2b_trace.csv"),
        ("fig2b_pumping.toml", "fig2b_pumping_trace.csv"),
    ] {
        let design_out = tempfile::tempdir().unwrap();
        let config = load_config(&configs().join(name), &fixed()).unwrap();
        cmd_design(&config, design_out.path()).unwrap();
        let train = load_config(&design_out.path().join("train.toml"), &fixed()).unwrap();
        let out = tempfile::tempdir().unwrap();
        cmd_simulate(&train, out.path()).unwrap();
        check(&out.path().join("trace.csv"), golden);
    }
}

#[test]
fn fig4_fringes() {
    let out = tempfile::tempdir().unwrap();
    let config = load_config(&configs().join("fig4.toml"), &fixed()).unwrap();
    cmd_franson(&config, out.path(), &fixed()).unwrap();
    for k in 1..=3 {
        check(
            &out.path().join(format!("fringe_{k}.csv")),
            &format!("fig4_fringe_{k}.csv"),
        );
    }
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Runs the binary from the fixtures directory with `QVKIT_SEED` unset.
pub fn qvkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvkit"))
        .args(args)
        .current_dir(fixtures())
        .env_remove("QVKIT_SEED")
        .output()
        .expect("failed to run qvkit")
}

/// One golden case per subcommand: (golden file name, arguments).
pub const GOLDEN_CASES: &[(&str, &[&str])] = &[
    (
        "tally.json",
        &["tally", "--scheme", "qv1", "--stakes", "three.csv", "--ballots", "ballots_qv1.json"],
    ),
    (
        "metrics.json",
        &["metrics", "--stakes", "five.csv", "--gamma", "0.5", "--nakamoto", "0.33,0.51,0.67,0.9"],
    ),
    ("lorenz.csv", &["lorenz", "--stakes", "five.csv", "--format", "csv"]),
    (
        "gamma_search.json",
        &["gamma-search", "--stakes", "two.csv", "--k", "1", "--alpha", "0.6", "--check-properties"],
    ),
    (
        "optimize.json",
        &["optimize", "--scheme", "qv1", "--problem", "problem_qv1.json", "--oracle-check"],
    ),
    ("attack_collusion.json", &["attack", "collusion", "--scenario", "collusion.json"]),
    ("attack_sybil.json", &["attack", "sybil", "--scenario", "sybil.json"]),
    ("attack_last_voter.json", &["attack", "last-voter", "--scenario", "last_voter.json"]),
    (
        "generate.csv",
        &["generate", "--kind", "pareto", "--shape", "1.16", "--scale", "1", "--n", "25", "--seed", "7"],
    ),
];

/// Runs a golden case, returning stdout; panics with stderr on failure.
pub fn run_case(args: &[&str]) -> Vec<u8> {
    let out = qvkit(args);
    assert!(
        out.status.success(),
        "qvkit {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Compares `actual` with the stored golden file. Setting
/// `QVKIT_UPDATE_GOLDEN=1` rewrites the file instead.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("QVKIT_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let expected = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} differs\n--- expected\n{}\n--- actual\n{}",
            String::from_utf8_lossy(&expected),
            String::from_utf8_lossy(actual)
        ))
    }
}

//! Acceptance gate: every criterion of the verification suite runs as its
//! own test and prints one verdict line. The expensive shared ensemble is
//! built once and reused across criteria.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every
//! verdict line even when all criteria pass.

use std::path::PathBuf;
use std::sync::OnceLock;

use qtherm_cli::verify::{self, ArtifactStore, CriterionResult, VerifyOptions};

fn store() -> &'static ArtifactStore {
    static STORE: OnceLock<ArtifactStore> = OnceLock::new();
    STORE.get_or_init(|| {
        let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        ArtifactStore::new(VerifyOptions {
            cache_dir: None,
            work_dir: base,
            jobs: 1,
        })
    })
}

fn assert_criterion(result: CriterionResult) {
    println!("{}", result.render());
    for c in result.checks.iter().filter(|c| !c.pass) {
        println!(
            "  failed check: {} = {:.6e} (bounds {:?} .. {:?})",
            c.name, c.measured, c.lo, c.hi
        );
    }
    for n in &result.notes {
        println!("  note: {n}");
    }
    assert!(result.pass, "{}", result.render());
}

#[test]
fn c01_exact_identities() {
    assert_criterion(verify::criterion_identities(store()));
}

#[test]
fn c02_environment_entropy_vs_heat() {
    assert_criterion(verify::criterion_exchange(store()));
}

#[test]
fn c03_initial_entropies() {
    assert_criterion(verify::criterion_initial_entropy(store()));
}

#[test]
fn c04_spreading_widths() {
    assert_criterion(verify::criterion_spreading_widths(store()));
}

#[test]
fn c05_excess_entropy_curve() {
    assert_criterion(verify::criterion_excess_curve(store()));
}

#[test]
fn c06_classical_limit_sweep() {
    assert_criterion(verify::criterion_limit_sweep(store()));
}

#[test]
fn c07_thermalization() {
    assert_criterion(verify::criterion_thermalization(store()));
}

#[test]
fn c08_coefficient_statistics() {
    assert_criterion(verify::criterion_coefficient_statistics(store()));
}

#[test]
fn c09_determinism() {
    assert_criterion(verify::criterion_determinism(store()));
}

#[test]
fn c10_cache_integrity() {
    assert_criterion(verify::criterion_cache_integrity(store()));
}

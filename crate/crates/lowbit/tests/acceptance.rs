//! One test per reproduction criterion. Each prints a PASS/FAIL line; run
//! with `--nocapture` to see them.

use lowbit::acceptance::{self, CheckResult};

fn report(r: CheckResult) {
    println!("{r}");
    assert!(r.passed, "{r}");
}

#[test]
fn c01_radii_table() {
    report(acceptance::radii_table());
}

#[test]
fn c02_beta_prime_table() {
    report(acceptance::beta_prime_table());
}

#[test]
fn c03_swamping_thresholds() {
    report(acceptance::swamping_thresholds());
}

#[test]
fn c04_uniform_signal_ema() {
    report(acceptance::uniform_signal());
}

#[test]
fn c05_log_dither_decay() {
    report(acceptance::decay_times());
}

#[test]
fn c06_unbiased_rounding() {
    report(acceptance::unbiased_rounding());
}

#[test]
fn c07_momentum_variance_bound() {
    report(acceptance::momentum_variance_bound());
}

#[test]
fn c08_adaptive_lr_variance() {
    report(acceptance::adaptive_lr_closed_form());
}

#[test]
fn c09_optimizer_equivalence() {
    report(acceptance::optimizer_equivalence());
}

#[test]
fn c10_training_differential() {
    report(acceptance::training_differential());
}

#[test]
fn c11_storage_round_trip() {
    report(acceptance::storage_round_trip());
}

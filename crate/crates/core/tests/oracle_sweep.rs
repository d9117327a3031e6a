//! Full DP-vs-enumeration sweep across small instances. Every objective,
//! exact and pruned, must match brute force to 1e-9.

use std::time::Instant;

use lftrain::{run_sweep, SweepConfig};

#[test]
fn dynamic_programs_match_enumeration_everywhere() {
    let start = Instant::now();
    let outcome = run_sweep(&SweepConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let failures: Vec<_> = outcome.cases.iter().filter(|c| !c.pass).collect();
    assert!(
        outcome.pass,
        "{} of {} cases disagree; worst {:e}; first failure: {:?}",
        failures.len(),
        outcome.cases.len(),
        outcome.max_abs_err,
        failures.first(),
    );
    assert!(
        !outcome.cases.is_empty() && outcome.cases.len() >= 300,
        "sweep unexpectedly small: {} cases",
        outcome.cases.len()
    );
    assert!(
        elapsed.as_secs() < 60,
        "sweep took {elapsed:?}, budget is one minute"
    );
}

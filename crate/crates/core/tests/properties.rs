#[allow(dead_code)]
#[path = "properties/suites.rs"]
mod suites;

#[test]
fn monotone_propagation() {
    suites::monotone_propagation().unwrap();
}

#[test]
fn bound_preservation() {
    suites::bound_preservation().unwrap();
}

#[test]
fn projection_idempotence() {
    suites::projection_idempotence().unwrap();
}

#[test]
fn banded_gram() {
    suites::banded_gram().unwrap();
}

#[test]
fn determinism() {
    suites::determinism().unwrap();
}

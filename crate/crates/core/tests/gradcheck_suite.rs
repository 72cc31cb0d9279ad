//! The full finite-difference gradient suite at the 1e-4 tolerance.

use std::time::Instant;

use stegonet::gradcheck;

#[test]
fn every_layer_primitive_passes_at_1e4() {
    let started = Instant::now();
    let suite = gradcheck::run_suite(1e-4);
    let elapsed = started.elapsed();
    let expected = [
        "conv2d",
        "abs",
        "trunc",
        "relu",
        "batch_norm",
        "scale",
        "avg_pool",
        "global_avg_pool",
        "fully_connected",
        "softmax_xent",
    ];
    assert_eq!(suite.reports.len(), expected.len());
    for (report, name) in suite.reports.iter().zip(expected) {
        assert_eq!(report.op, name);
        assert!(report.passes(1e-4), "{report}");
        // every group actually compared something
        for g in &report.groups {
            assert!(g.checked > 0, "{}.{} checked nothing", report.op, g.group);
        }
    }
    assert!(suite.all_pass());
    assert!(
        elapsed.as_secs() < 60,
        "suite took {:?}, budget is 60 s",
        elapsed
    );
}

#[test]
fn linear_ops_check_to_roundoff() {
    let fc = gradcheck::check_fully_connected();
    assert!(fc.max_rel_err() <= 1e-8, "{fc}");
}

#[test]
fn kink_skipping_reports_skipped_elements() {
    // trunc at T=2 on inputs in [-4,4] has saturated and interior elements;
    // some elements land near the breakpoints and must be skipped, never
    // compared.
    let report = gradcheck::check_trunc();
    let g = &report.groups[0];
    assert!(g.checked + g.skipped == 50, "group sizes changed");
    assert!(report.passes(1e-4), "{report}");
}

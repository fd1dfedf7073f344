use std::time::Instant;

use easn::checks::{full_suite, run_check, CHECK_TOLERANCE};

#[test]
fn every_subject_passes_on_five_seeds() {
    let start = Instant::now();
    let mut failures = Vec::new();
    for subject in full_suite() {
        let mut worst = 0.0f64;
        for seed in 0..5 {
            let report = run_check(subject, seed).unwrap();
            worst = worst.max(report.max_rel_error());
        }
        println!("{subject:<24} max rel error {worst:.3e}");
        if worst > CHECK_TOLERANCE {
            failures.push(format!("{subject}: {worst:e}"));
        }
    }
    println!("suite took {:?}", start.elapsed());
    assert!(failures.is_empty(), "{failures:?}");
}

mod common;

use optevo::integrity::{decay_range_check, genome_passes, SphereConfig};
use optevo::mutation::schedule_decay;
use optevo::schedules::SCHEDULES;

#[test]
fn sphere_check_calibration() {
    common::integrity().unwrap();
}

#[test]
fn primitive_schedules_pass_range_check() {
    for s in SCHEDULES {
        assert!(decay_range_check(&schedule_decay(s), 1000), "{s}");
    }
}

#[test]
fn genome_filter_agrees_with_sphere_check() {
    let cfg = SphereConfig::default();
    assert!(genome_passes(&optevo::catalog::build("Adam").unwrap().genome, &cfg, 1000));
    assert!(!genome_passes(&common::u_one(), &cfg, 1000));
}

//! Scenario runs against their golden traces. Set `HRC_BLESS=1` to rewrite
//! the goldens from the current behavior, then review the diff.

use hrc_services::scenario::{self, GoldenResult, DEFAULT_SEED};
use std::path::Path;

fn run(n: u8) {
    let report = scenario::run(n, DEFAULT_SEED).unwrap();
    if std::env::var_os("HRC_BLESS").is_some() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("data/golden/scenario-{n}.trace"));
        std::fs::write(path, report.trace_text()).unwrap();
        return;
    }
    print!("{}", report.render());
    assert!(matches!(report.golden, GoldenResult::Match { .. }), "{}", report.render());
    assert!(report.passed(), "{}", report.render());
}

#[test]
fn scenario_1_buttons_zone_and_panels() {
    run(1);
}

#[test]
fn scenario_2_motion_intent_switching() {
    run(2);
}

#[test]
fn scenario_3_pressure_profile() {
    run(3);
}

#[test]
fn runs_are_reproducible() {
    for n in scenario::SCENARIOS {
        let a = scenario::run(n, 11).unwrap();
        let b = scenario::run(n, 11).unwrap();
        assert_eq!(a.trace, b.trace, "scenario {n}");
    }
}

use clonemator_scenario::bundled::{load_bundled, names, BUNDLED};
use clonemator_scenario::run_scenario;

#[test]
fn every_bundled_scenario_loads() {
    for (name, _) in BUNDLED {
        let s = load_bundled(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&s.name, name);
    }
}

#[test]
fn every_bundled_scenario_passes() {
    let mut failed = Vec::new();
    for name in names() {
        let report = run_scenario(&load_bundled(name).unwrap());
        if !report.passed {
            failed.push(name);
            for a in report.failed_assertions() {
                eprintln!("{name}: {}", serde_json::to_string(a).unwrap());
            }
            if let Some(f) = &report.failure {
                eprintln!("{name}: aborted {f:?}");
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

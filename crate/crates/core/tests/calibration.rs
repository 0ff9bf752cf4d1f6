//! Regenerates `calibration.json`; run with `cargo test -p errdist --test calibration -- --ignored`.

use errdist::acceptance::{Calibration, CALIBRATION_PATHS, CALIBRATION_SEED_BASE};

#[test]
#[ignore = "rewrites calibration.json"]
fn regenerate_calibration() {
    let cal = Calibration::generate().unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/calibration.json");
    std::fs::write(path, cal.to_json()).unwrap();
    for r in &cal.rows {
        println!("{:?}: {:e}", r.row, r.max_terminal_deviation);
    }
}

#[test]
fn committed_calibration_matches_its_settings() {
    let cal = Calibration::load().unwrap();
    assert_eq!(cal.seed_base, CALIBRATION_SEED_BASE);
    assert_eq!(cal.paths, CALIBRATION_PATHS);
    assert_eq!(cal.rows.len(), 4);
    assert!(cal.rows.iter().all(|r| r.max_terminal_deviation.is_finite() && r.max_terminal_deviation >= 0.0));
}

//! Continuation runs and escape diagnostics.

use std::f64::consts::PI;

use anisokepler::minimize::MinimizeOptions;
use anisokepler::scatter::{self, BiOptions, ScheduleSpec};
use anisokepler::PotentialParams;

#[test]
fn gutzwiller_hyperbolic_run_is_accepted_with_enough_stages() {
    let p = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
    let spec = ScheduleSpec {
        stages: 13,
        ..Default::default()
    };
    let s = [0.6, 0.8];
    let out = scatter::hyperbolic_run(&p, &[1.0, 0.0], &s, 0.5, &spec, &MinimizeOptions::default()).unwrap();
    assert!(out.accepted, "{}", out.failures.join("; "));
    assert_eq!(out.schedule.stages.len(), 13);
    let e = &out.escape_plus;
    assert!((e.s_escape[0] - s[0]).hypot(e.s_escape[1] - s[1]) <= 1e-2);
    assert!((e.radial_rate - 1.0).abs() <= 5e-2, "rate {}", e.radial_rate);
}

#[test]
fn radial_target_gives_straight_escape() {
    let p = PotentialParams::isotropic(1.0, 2).unwrap();
    let spec = ScheduleSpec {
        stages: 4,
        ..Default::default()
    };
    let out = scatter::hyperbolic_run(&p, &[1.0, 0.0], &[1.0, 0.0], 1.0, &spec, &MinimizeOptions::default()).unwrap();
    assert!(out.escape_plus.direction_residual <= 1e-8, "{}", out.escape_plus.direction_residual);
}

#[test]
fn bihyperbolic_needs_more_than_half_a_turn() {
    let p = PotentialParams::gutzwiller(1.0, &[1.0, 2.0]).unwrap();
    let spec = ScheduleSpec::default();
    let opts = MinimizeOptions::default();
    for (tm, tp) in [(0.0, PI), (0.0, 0.5 * PI), (1.0, 1.0 - PI)] {
        assert!(scatter::bihyperbolic_run(&p, tm, tp, 0.5, &spec, &opts, &BiOptions::default()).is_err());
    }
}

#[test]
fn invalid_schedule_is_rejected() {
    let spec = ScheduleSpec {
        ratio: 1.0,
        ..Default::default()
    };
    assert!(spec.validate().is_err());
}

#[test]
fn plot_data_has_header_and_one_row_per_node() {
    let p = PotentialParams::isotropic(1.0, 2).unwrap();
    let path = anisokepler::paths::Path::straight(&[1.0, 0.0], &[2.0, 1.0], 1.0, 9).unwrap();
    let text = scatter::plot_data(&p, &path);
    assert_eq!(text.lines().count(), 1 + path.len());
}

use std::sync::Arc;

use se3obs_core::linalg::Vec6;
use se3obs_core::observers::Variant;
use se3obs_core::sim::{monitors, run, Profile, Scenario};
use se3obs_core::Error;

fn short(mut sc: Scenario, duration: f64) -> Scenario {
    sc.trajectory.duration = duration;
    sc
}

#[test]
fn hybrid_observers_jump_once_at_start() {
    let sc = short(Scenario::study(), 3.0);
    for v in [Variant::H, Variant::HD1, Variant::HD2] {
        let log = run(&sc, v).unwrap();
        assert!(!log.jumps.is_empty(), "{v}");
        let first = log.jumps[0];
        assert_eq!(first.t, 0.0);
        assert!((first.gap - 3.0).abs() < 1e-9, "{v}: gap {}", first.gap);
        let d = monitors(&log, None);
        assert!(d.jumps_ok(1e-9), "{v}: {d:?}");
    }
}

#[test]
fn jump_rows_carry_incremented_counter() {
    let sc = short(Scenario::study(), 0.5);
    let log = run(&sc, Variant::H).unwrap();
    assert_eq!(log.rows[0].j, 0);
    assert!(log.rows[1].jumped);
    assert_eq!(log.rows[1].j, 1);
    assert_eq!(log.rows[1].t, 0.0);
    assert!(log.rows[2..].iter().all(|r| r.j == 1));
}

#[test]
fn noisy_runs_depend_only_on_seed() {
    let a = run(&short(Scenario::study_noisy(3), 1.0), Variant::H).unwrap();
    let b = run(&short(Scenario::study_noisy(3), 1.0), Variant::H).unwrap();
    let c = run(&short(Scenario::study_noisy(4), 1.0), Variant::H).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_ne!(a.last().g_hat, c.last().g_hat);
}

#[test]
fn zero_noise_ignores_seed() {
    let mut a = short(Scenario::study(), 0.5);
    let mut b = a.clone();
    a.seed = 1;
    b.seed = 2;
    assert_eq!(run(&a, Variant::HD1).unwrap().rows, run(&b, Variant::HD1).unwrap().rows);
}

#[test]
fn rejects_initial_bias_outside_projection_ball() {
    let mut sc = Scenario::study_noisy(0);
    sc.b_hat0 = Vec6::new([2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(matches!(run(&sc, Variant::H), Err(Error::InvalidInput(_))));
}

#[test]
fn rejects_delta_above_bound() {
    let mut sc = short(Scenario::study(), 0.1);
    sc.delta = Some(1.5);
    assert!(matches!(run(&sc, Variant::H), Err(Error::GapInfeasible(..))));
}

#[test]
fn non_finite_input_is_reported_as_divergence() {
    let mut sc = short(Scenario::study(), 1.0);
    sc.trajectory.profile = Profile::Custom(Arc::new(|t| {
        let x = if t > 0.5 { f64::NAN } else { 0.0 };
        Vec6::new([x; 6])
    }));
    match run(&sc, Variant::S) {
        Err(Error::DivergenceDetected { t, .. }) => assert!(t > 0.5 && t < 0.6),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn estimates_stay_near_truth_after_convergence() {
    let mut sc = short(Scenario::study(), 20.0);
    sc.g_hat0 = sc.trajectory.g0;
    sc.b_hat0 = sc.bias.base;
    for v in Variant::ALL {
        let log = run(&sc, v).unwrap();
        assert!(log.rows.iter().all(|r| r.dist_gi < 1e-8), "{v}");
    }
}

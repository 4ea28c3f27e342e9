use bvr_core::flightdyn::{evasive_policy_control, heading_hold_control, step_aircraft, DynamicsError};
use bvr_core::missile::{engagement_status, step_missile, MissileStatus, Phase};
use bvr_core::{AircraftParams, AircraftState, ControlCommand, GuidanceConfig, MissileState, PolicyId, Vec3};
use proptest::prelude::*;

fn fly(
    state: AircraftState,
    cmd: ControlCommand,
    params: &AircraftParams,
    dt: f64,
    duration: f64,
) -> Result<AircraftState, DynamicsError> {
    let steps = (duration / dt).round() as usize;
    (0..steps).try_fold(state, |s, _| step_aircraft(&s, &cmd, params, dt))
}

#[test]
fn dive_gains_speed_over_level_flight() {
    let params = AircraftParams::default();
    let pitch = (-20.0f64).to_radians();
    let start = AircraftState::level(Vec3::new(0.0, 0.0, 8000.0), 0.0, 250.0);
    let dive_start = AircraftState { pitch, ..start };
    let level_cmd = ControlCommand { commanded_heading: 0.0, commanded_pitch: 0.0, throttle: 0.5 };
    let dive_cmd = ControlCommand { commanded_pitch: pitch, ..level_cmd };

    let dive = fly(dive_start, dive_cmd, &params, 0.02, 10.0).unwrap();
    let level = fly(start, level_cmd, &params, 0.02, 10.0).unwrap();
    // Fine-step reference for both trajectories.
    let dive_ref = fly(dive_start, dive_cmd, &params, 0.001, 10.0).unwrap();
    let level_ref = fly(start, level_cmd, &params, 0.001, 10.0).unwrap();

    assert!(dive_ref.speed > level_ref.speed + 10.0, "{} vs {}", dive_ref.speed, level_ref.speed);
    assert!(dive.speed > level.speed);
    assert!((dive.speed - dive_ref.speed).abs() < 1e-6);
    assert!((level.speed - level_ref.speed).abs() < 1e-6);
}

#[test]
fn halving_the_step_changes_position_by_less_than_1e_4_relative() {
    let params = AircraftParams::default();
    for (i, policy) in PolicyId::ALL.into_iter().enumerate() {
        let start = AircraftState::level(Vec3::new(0.0, 0.0, 9000.0), 0.4 * i as f64, 320.0);
        let run = |dt: f64| {
            let steps = (20.0 / dt).round() as usize;
            (0..steps).fold(start, |s, _| {
                let cmd = evasive_policy_control(policy, &s, &params);
                step_aircraft(&s, &cmd, &params, dt).unwrap()
            })
        };
        let coarse = run(0.02);
        let fine = run(0.01);
        let travelled = (fine.position - start.position).norm();
        let rel = (coarse.position - fine.position).norm() / travelled;
        assert!(rel < 1e-4, "{policy}: relative position difference {rel:e}");
    }
}

#[test]
fn policy_headings_are_exact_multiples_of_45_degrees() {
    let params = AircraftParams::default();
    let state = AircraftState::level(Vec3::new(0.0, 0.0, 7000.0), 1.0, 300.0);
    for policy in PolicyId::ALL {
        let cmd = evasive_policy_control(policy, &state, &params);
        assert_eq!(cmd.commanded_heading, (policy.index() as f64 * 45.0).to_radians());
    }
}

#[test]
fn coasting_level_with_no_guidance_demand_loses_energy() {
    let cfg = GuidanceConfig::default();
    let altitude = cfg.midcourse_climb_altitude_m;
    // Target dead ahead and receding on the same line: zero LOS rate.
    let target = AircraftState::level(Vec3::new(5_000.0, 0.0, altitude), 0.0, 1.0);
    let mut missile = MissileState {
        position: Vec3::new(0.0, 0.0, altitude),
        velocity: Vec3::new(700.0, 0.0, 0.0),
        time_since_launch: cfg.boost_duration_s + cfg.sustain_duration_s + 1.0,
        phase: Phase::Coast,
        min_distance: 5_000.0,
        active: true,
    };
    let mut target_now = target;
    let mut energy = missile.speed().powi(2);
    for _ in 0..250 {
        missile = step_missile(&missile, &target_now, &cfg, 0.02).unwrap();
        target_now.position = target_now.position + target_now.velocity() * 0.02;
        let e = missile.speed().powi(2);
        assert!(e < energy);
        assert!(missile.velocity.y.abs() < 1e-9 && missile.velocity.z.abs() < 1e-9);
        energy = e;
    }
}

fn engagement(uav_heading: f64, bearing: f64, range: f64, policy: PolicyId, steps: usize) -> Vec<(f64, f64, Phase)> {
    let cfg = GuidanceConfig::default();
    let params = AircraftParams::default();
    let mut uav = AircraftState::level(Vec3::new(0.0, 0.0, 8_000.0), uav_heading, 320.0);
    let launcher = Vec3::new(range * bearing.cos(), range * bearing.sin(), 10_000.0);
    let mut missile = MissileState::launch(launcher, 300.0, &uav);
    let mut history = vec![(missile.min_distance, missile.time_since_launch, missile.phase)];
    for _ in 0..steps {
        let cmd = evasive_policy_control(policy, &uav, &params);
        missile = step_missile(&missile, &uav, &cfg, 0.02).unwrap();
        uav = step_aircraft(&uav, &cmd, &params, 0.02).unwrap();
        history.push((missile.min_distance, missile.time_since_launch, missile.phase));
        if engagement_status(&missile, &uav, &cfg) != MissileStatus::Flying {
            break;
        }
    }
    history
}

#[test]
fn every_engagement_ends_within_the_missile_lifetime() {
    let cfg = GuidanceConfig::default();
    let cap = (cfg.lifetime_s / 0.02) as usize + 10;
    for (i, policy) in PolicyId::ALL.into_iter().enumerate() {
        let history = engagement(0.3 * i as f64, 1.1 * i as f64, 70_000.0, policy, cap);
        assert!(history.len() < cap + 1, "{policy} still flying after the lifetime");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn closest_approach_never_increases_and_phases_advance(
        heading in 0.0..std::f64::consts::TAU,
        bearing in 0.0..std::f64::consts::TAU,
        range in 20_000.0..80_000.0,
        policy in 0usize..8,
    ) {
        let history = engagement(heading, bearing, range, PolicyId::from_index(policy).unwrap(), 3_000);
        for pair in history.windows(2) {
            prop_assert!(pair[1].0 <= pair[0].0);
            prop_assert!(pair[1].1 >= pair[0].1);
            prop_assert!(pair[1].2 >= pair[0].2);
        }
    }

    #[test]
    fn attitude_limits_hold_after_every_step(
        heading in 0.0..std::f64::consts::TAU,
        target in 0.0..std::f64::consts::TAU,
        pitch in -1.0f64..1.0,
        throttle in 0.0f64..1.0,
    ) {
        let params = AircraftParams::default();
        let mut s = AircraftState::level(Vec3::new(0.0, 0.0, 8_000.0), heading, 300.0);
        let cmd = ControlCommand { commanded_heading: target, commanded_pitch: pitch, throttle };
        for _ in 0..500 {
            let next = step_aircraft(&s, &cmd, &params, 0.02).unwrap();
            prop_assert_eq!(next, step_aircraft(&s, &cmd, &params, 0.02).unwrap());
            prop_assert!(next.roll.abs() <= params.max_bank());
            prop_assert!(next.pitch.abs() <= params.max_pitch());
            prop_assert!((0.0..std::f64::consts::TAU).contains(&next.heading));
            prop_assert!(next.speed > 0.0);
            s = next;
        }
    }

    #[test]
    fn heading_hold_settles_on_any_target(heading in 0.0..std::f64::consts::TAU, target in 0.0..360.0f64) {
        let params = AircraftParams::default();
        let mut s = AircraftState::level(Vec3::new(0.0, 0.0, 8_000.0), heading, 320.0);
        let cmd = heading_hold_control(target.to_radians(), &params);
        for _ in 0..2_000 {
            s = step_aircraft(&s, &cmd, &params, 0.02).unwrap();
        }
        let err = bvr_core::flightdyn::shortest_arc(s.heading, target.to_radians()).abs();
        prop_assert!(err < 0.5f64.to_radians(), "error {} deg", err.to_degrees());
    }
}

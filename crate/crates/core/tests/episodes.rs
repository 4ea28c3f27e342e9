use bvr_core::episodes::{
    collect_dataset, episode_seed, ranges, sample_initial_conditions, simulate_episode, ScenarioDraw,
};
use bvr_core::{PolicyId, SimConfig};

fn draw(firing_distance: f64, launcher_bearing: f64, uav_heading: f64) -> ScenarioDraw {
    ScenarioDraw {
        uav_speed: 330.0,
        uav_altitude: 8_000.0,
        uav_heading,
        launch_speed: 300.0,
        launch_altitude: 10_000.0,
        firing_distance,
        launcher_bearing,
        seed: 0,
    }
}

#[test]
fn fleeing_an_80_km_shot_escapes() {
    // Launcher due north, UAV heading north, fleeing south.
    let run = simulate_episode(PolicyId::S, &draw(80_000.0, 0.0, 0.0), 1.0, 0, &SimConfig::default(), false).unwrap();
    assert!(!run.hit);
    assert!(run.label > 0.0);
    // Regression baseline recorded from this simulator.
    assert!((run.label - 34_929.455).abs() < 1.0, "{}", run.label);
}

#[test]
fn flying_into_a_40_km_shot_is_hit() {
    let run = simulate_episode(PolicyId::N, &draw(40_000.0, 0.0, 0.0), 1.0, 0, &SimConfig::default(), false).unwrap();
    assert!(run.hit);
    assert_eq!(run.label, 0.0);
    assert!(run.samples.iter().all(|s| s.label == 0.0));
}

/// Closest approach over the stored trajectory, scanning each step's
/// straight-line relative motion at 1000 points.
fn brute_force_closest_approach(trajectory: &[(bvr_core::Vec3, bvr_core::Vec3)]) -> f64 {
    let mut best = f64::INFINITY;
    for pair in trajectory.windows(2) {
        let start = pair[0].1 - pair[0].0;
        let end = pair[1].1 - pair[1].0;
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            best = best.min((start + (end - start) * s).norm());
        }
    }
    best
}

#[test]
fn labels_match_a_brute_force_rescan_of_the_trajectory() {
    let cfg = SimConfig::default();
    let mut hits = 0;
    for i in 0..24u64 {
        let d = sample_initial_conditions(episode_seed(5, i));
        let policy = PolicyId::from_index(i as usize % 8).unwrap();
        let run = simulate_episode(policy, &d, 1.0, i, &cfg, true).unwrap();
        let scan = brute_force_closest_approach(&run.trajectory);
        assert!((scan - run.closest_approach).abs() < 0.5, "episode {i}: {scan} vs {}", run.closest_approach);
        if run.closest_approach < cfg.guidance.hit_radius_m {
            hits += 1;
            assert_eq!(run.label, 0.0);
        } else {
            assert_eq!(run.label, run.closest_approach);
        }
        assert!(run.samples.iter().all(|s| s.label == run.label && s.episode_id == i));
    }
    assert!(hits > 0 && hits < 24, "{hits} hits: sample should mix outcomes");
}

#[test]
fn recorded_features_stay_in_range() {
    let cfg = SimConfig::default();
    let data = collect_dataset(PolicyId::SW, 40, 9, 1.0, &cfg).unwrap();
    let (lo, hi) = ranges::FIRING_DISTANCE;
    for s in &data.samples {
        let tau = s.features.0[7];
        assert!(tau <= cfg.guidance.lifetime_s);
        if tau == 0.0 {
            let rho = s.features.0[5];
            assert!(rho >= lo - 1e-6 && rho <= hi + 1e-6, "{rho}");
        }
    }
    assert_eq!(data.samples.iter().filter(|s| s.features.0[7] == 0.0).count(), 40);
}

#[test]
fn one_episode_gives_one_episode_id() {
    let data = collect_dataset(PolicyId::E, 1, 3, 1.0, &SimConfig::default()).unwrap();
    assert!(!data.samples.is_empty());
    assert_eq!(data.episode_ids(), vec![0]);
}

#[test]
fn same_arguments_give_identical_bytes() {
    let cfg = SimConfig::default();
    let a = collect_dataset(PolicyId::NW, 6, 7, 1.0, &cfg).unwrap().to_bytes();
    let b = collect_dataset(PolicyId::NW, 6, 7, 1.0, &cfg).unwrap().to_bytes();
    assert_eq!(a, b);
    let c = collect_dataset(PolicyId::NW, 6, 8, 1.0, &cfg).unwrap().to_bytes();
    assert_ne!(a, c);
}

#[test]
fn ten_thousand_draws_cover_every_interval() {
    let draws: Vec<ScenarioDraw> = (0..10_000).map(|i| sample_initial_conditions(episode_seed(1, i))).collect();
    let fields: [(&str, fn(&ScenarioDraw) -> f64, (f64, f64)); 7] = [
        ("uav_speed", |d| d.uav_speed, ranges::UAV_SPEED),
        ("uav_altitude", |d| d.uav_altitude, ranges::UAV_ALTITUDE),
        ("launch_speed", |d| d.launch_speed, ranges::LAUNCH_SPEED),
        ("launch_altitude", |d| d.launch_altitude, ranges::LAUNCH_ALTITUDE),
        ("firing_distance", |d| d.firing_distance, ranges::FIRING_DISTANCE),
        ("uav_heading", |d| d.uav_heading, (0.0, std::f64::consts::TAU)),
        ("launcher_bearing", |d| d.launcher_bearing, (0.0, std::f64::consts::TAU)),
    ];
    for (name, get, (lo, hi)) in fields {
        let values: Vec<f64> = draws.iter().map(get).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= lo && max <= hi, "{name} outside [{lo}, {hi}]");
        assert!(max - min >= 0.95 * (hi - lo), "{name} spans only [{min}, {max}]");
    }
}

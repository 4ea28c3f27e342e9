use bvr_core::awareness::perturbed_observations;
use bvr_core::{LaunchObservation, SensorNoiseConfig};

fn threat(relative_bearing: f64) -> LaunchObservation {
    LaunchObservation {
        range: 60_000.0,
        launch_speed: 300.0,
        time_since_launch: 20.0,
        relative_bearing,
        firing_altitude: 10_000.0,
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn ten_thousand_draws_have_the_configured_spread() {
    let noise = SensorNoiseConfig { sample_count: 10_000, ..SensorNoiseConfig::default() };
    let nominal = threat(0.5);
    let draws = perturbed_observations(&[nominal], &noise, 17);
    assert_eq!(draws.len(), 10_000);
    let sigmas = noise.sigmas();
    let fields: [(fn(&LaunchObservation) -> f64, f64, f64); 5] = [
        (|o| o.range, nominal.range, sigmas[0]),
        (|o| o.time_since_launch, nominal.time_since_launch, sigmas[1]),
        (|o| o.relative_bearing, nominal.relative_bearing, sigmas[2]),
        (|o| o.firing_altitude, nominal.firing_altitude, sigmas[3]),
        (|o| o.launch_speed, nominal.launch_speed, sigmas[4]),
    ];
    for (i, (get, centre, sigma)) in fields.into_iter().enumerate() {
        let values: Vec<f64> = draws.iter().map(get).collect();
        let (mean, std) = mean_std(&values);
        // Standard error of the mean is sigma / 100; allow four of them.
        assert!((mean - centre).abs() < 4.0 * sigma / 100.0, "field {i}: mean {mean}");
        assert!((std / sigma - 1.0).abs() < 0.04, "field {i}: std {std} vs {sigma}");
    }
}

#[test]
fn clamps_keep_range_and_time_non_negative() {
    let noise = SensorNoiseConfig { sample_count: 5_000, range_m: 50.0, time_s: 1.0, ..SensorNoiseConfig::default() };
    let near = LaunchObservation { range: 20.0, time_since_launch: 0.0, ..threat(0.0) };
    let draws = perturbed_observations(&[near], &noise, 2);
    assert!(draws.iter().all(|o| o.range >= 0.0 && o.time_since_launch >= 0.0));
    assert!(draws.iter().any(|o| o.range == 0.0) && draws.iter().any(|o| o.time_since_launch == 0.0));
}

#[test]
fn bearings_near_the_seam_stay_in_the_half_open_interval() {
    let noise = SensorNoiseConfig { sample_count: 5_000, bearing_deg: 1.0, ..SensorNoiseConfig::default() };
    let draws = perturbed_observations(&[threat(std::f64::consts::PI)], &noise, 4);
    let pi = std::f64::consts::PI;
    assert!(draws.iter().all(|o| o.relative_bearing > -pi && o.relative_bearing <= pi));
    assert!(draws.iter().any(|o| o.relative_bearing < 0.0));
}

#[test]
fn same_seed_same_draws() {
    let noise = SensorNoiseConfig::default();
    let threats = [threat(0.1), threat(-2.0), threat(3.0)];
    assert_eq!(perturbed_observations(&threats, &noise, 9), perturbed_observations(&threats, &noise, 9));
    assert_ne!(perturbed_observations(&threats, &noise, 9), perturbed_observations(&threats, &noise, 10));
}

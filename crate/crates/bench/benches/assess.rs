use std::path::PathBuf;

use bvr_core::awareness::{monte_carlo_assess, SensorNoiseConfig};
use bvr_core::surrogate::load_manifest;
use bvr_core::{assess, AircraftState, FeatureVector, LaunchObservation, ModelSet, PolicyId, Vec3};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn models() -> ModelSet {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/models/manifest.txt");
    load_manifest(&path).expect("committed model set")
}

fn six_threats() -> (AircraftState, Vec<LaunchObservation>) {
    let uav = AircraftState::level(Vec3::new(0.0, 0.0, 8000.0), 0.0, 330.0);
    let threats = (0..6)
        .map(|i| LaunchObservation {
            range: 45_000.0 + 5_000.0 * i as f64,
            launch_speed: 300.0,
            time_since_launch: 2.0 * i as f64,
            relative_bearing: -2.5 + i as f64,
            firing_altitude: 10_000.0,
        })
        .collect();
    (uav, threats)
}

fn bench_assess(c: &mut Criterion) {
    let models = models();
    let (uav, threats) = six_threats();

    c.bench_function("assess_deterministic_6x8", |b| b.iter(|| assess(&uav, &threats, &models).unwrap()));

    let noise = SensorNoiseConfig::default();
    c.bench_function("assess_monte_carlo_256_6x8", |b| {
        b.iter(|| monte_carlo_assess(&uav, &threats, &models, &noise, 3).unwrap())
    });

    let model = models.get(PolicyId::N);
    let x = FeatureVector::new(&uav, &threats[0]);
    c.bench_function("forward_single", |b| b.iter(|| model.forward(&x).unwrap()));
    let batch = vec![x; 1536];
    c.bench_function("forward_batch_1536", |b| {
        b.iter_batched(|| batch.clone(), |xs| model.forward_batch(&xs).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, bench_assess);
criterion_main!(benches);

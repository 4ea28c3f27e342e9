use bvr_core::episodes::{run_episode, sample_initial_conditions};
use bvr_core::flightdyn::{evasive_policy_control, step_aircraft};
use bvr_core::missile::step_missile;
use bvr_core::{MissileState, PolicyId, SimConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_dynamics(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let dt = cfg.dt();
    let draw = sample_initial_conditions(11);
    let uav = draw.initial_uav();
    let missile = MissileState::launch(draw.launcher_position(), draw.launch_speed, &uav);
    let cmd = evasive_policy_control(PolicyId::SE, &uav, &cfg.aircraft);

    c.bench_function("step_aircraft", |b| b.iter(|| step_aircraft(&uav, &cmd, &cfg.aircraft, dt).unwrap()));
    c.bench_function("step_missile", |b| b.iter(|| step_missile(&missile, &uav, &cfg.guidance, dt).unwrap()));

    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    group.bench_function("run_episode_se", |b| b.iter(|| run_episode(PolicyId::SE, &draw, 1.0, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_dynamics);
criterion_main!(benches);

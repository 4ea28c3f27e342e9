//! Scenario sampling, single-missile episode simulation and miss-distance
//! labelling.
//!
//! An episode starts at the launch instant: the UAV switches from straight
//! and level flight to the evasive policy and the missile leaves the rail
//! pointed at the UAV. The episode ends on a hit (closest approach inside
//! the hit radius) or when the missile becomes inactive. Every state
//! recorded along the way carries the episode's final label: 0 for a hit,
//! otherwise the smallest separation reached.

use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{ConstantSet, ConstantsError, ConstantsHash};
use crate::dataset::Dataset;
use crate::flightdyn::{
    evasive_policy_control, shortest_arc, step_aircraft, wrap_two_pi, AircraftParams, AircraftState,
    DynamicsError, PolicyId,
};
use crate::missile::{engagement_status, step_missile, GuidanceConfig, MissileState, MissileStatus};
use crate::vec3::Vec3;

/// Hard wall-clock bound on a single episode. Episodes are bounded in
/// simulated time by the missile lifetime; hitting this means a bug.
pub const EPISODE_WALL_CLOCK_CAP: Duration = Duration::from_secs(30);

/// Initial-condition ranges for scenario sampling.
pub mod ranges {
    pub const UAV_SPEED: (f64, f64) = (300.0, 365.0);
    pub const UAV_ALTITUDE: (f64, f64) = (6_000.0, 10_000.0);
    pub const LAUNCH_SPEED: (f64, f64) = (280.0, 320.0);
    pub const LAUNCH_ALTITUDE: (f64, f64) = (9_000.0, 11_000.0);
    pub const FIRING_DISTANCE: (f64, f64) = (40_000.0, 80_000.0);
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("observation requested at t={now} s before launch at t={launch_time} s")]
    BeforeLaunch { now: f64, launch_time: f64 },
    #[error("episode exceeded the wall-clock cap after {simulated:.1} simulated seconds")]
    WallClock { simulated: f64 },
    #[error("sample period {0} s is shorter than the dynamics step")]
    SamplePeriod(f64),
    #[error("n_episodes must be positive")]
    NoEpisodes,
    #[error(transparent)]
    Constants(#[from] ConstantsError),
}

/// Both dynamics parameter sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub aircraft: AircraftParams,
    pub guidance: GuidanceConfig,
}

impl SimConfig {
    pub fn hashes(&self) -> (ConstantsHash, ConstantsHash) {
        (self.aircraft.hash(), self.guidance.hash())
    }

    pub fn dt(&self) -> f64 {
        self.aircraft.integration_step_s
    }
}

/// Where and when a missile was fired, as known to the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchRecord {
    pub firing_position: Vec3,
    pub launch_speed: f64,
    pub launch_time: f64,
}

/// The five launch quantities seen from the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchObservation {
    /// ρ: distance from the UAV to the firing position [m].
    pub range: f64,
    /// ν: launch velocity [m/s].
    pub launch_speed: f64,
    /// τ: time since launch [s].
    pub time_since_launch: f64,
    /// η: bearing of the firing position relative to the UAV nose, clockwise
    /// positive, in (-π, π] [rad].
    pub relative_bearing: f64,
    /// β: firing altitude [m].
    pub firing_altitude: f64,
}

impl LaunchObservation {
    pub fn is_finite(&self) -> bool {
        [self.range, self.launch_speed, self.time_since_launch, self.relative_bearing, self.firing_altitude]
            .iter()
            .all(|v| v.is_finite())
    }
}

pub const FEATURE_COUNT: usize = 10;

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "altitude",
    "roll",
    "pitch",
    "heading",
    "speed",
    "range",
    "launch_speed",
    "time_since_launch",
    "relative_bearing",
    "firing_altitude",
];

/// Network input `(h, φ, θ, ψ, v, ρ, ν, τ, η, β)` in SI units and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub const HEADING: usize = 3;
    pub const RANGE: usize = 5;
    pub const TIME_SINCE_LAUNCH: usize = 7;
    pub const RELATIVE_BEARING: usize = 8;

    /// Angles that wrap around; any value is inside the training range.
    pub fn is_periodic(index: usize) -> bool {
        index == Self::HEADING || index == Self::RELATIVE_BEARING
    }

    pub fn new(uav: &AircraftState, obs: &LaunchObservation) -> Self {
        FeatureVector([
            uav.altitude(),
            uav.roll,
            uav.pitch,
            uav.heading,
            uav.speed,
            obs.range,
            obs.launch_speed,
            obs.time_since_launch,
            obs.relative_bearing,
            obs.firing_altitude,
        ])
    }

    pub fn as_array(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Launch observation of `record` from the UAV at time `now`.
pub fn observe_launch(uav: &AircraftState, record: &LaunchRecord, now: f64) -> Result<LaunchObservation, EpisodeError> {
    if now < record.launch_time {
        return Err(EpisodeError::BeforeLaunch { now, launch_time: record.launch_time });
    }
    let offset = record.firing_position - uav.position;
    let bearing = wrap_two_pi(offset.y.atan2(offset.x));
    Ok(LaunchObservation {
        range: offset.norm(),
        launch_speed: record.launch_speed,
        time_since_launch: now - record.launch_time,
        relative_bearing: shortest_arc(uav.heading, bearing),
        firing_altitude: record.firing_position.z,
    })
}

/// Assembles the feature vector for one threat. Range and bearing refer to
/// the fixed firing position, never to the missile itself.
pub fn observe_state(uav: &AircraftState, record: &LaunchRecord, now: f64) -> Result<FeatureVector, EpisodeError> {
    Ok(FeatureVector::new(uav, &observe_launch(uav, record, now)?))
}

/// One draw of episode initial conditions. Angles in radians, distances in
/// meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDraw {
    pub uav_speed: f64,
    pub uav_altitude: f64,
    pub uav_heading: f64,
    pub launch_speed: f64,
    pub launch_altitude: f64,
    /// Slant distance from UAV to launcher at launch.
    pub firing_distance: f64,
    /// Absolute compass bearing from UAV to launcher.
    pub launcher_bearing: f64,
    pub seed: u64,
}

impl ScenarioDraw {
    /// UAV at the origin, wings level.
    pub fn initial_uav(&self) -> AircraftState {
        AircraftState::level(Vec3::new(0.0, 0.0, self.uav_altitude), self.uav_heading, self.uav_speed)
    }

    /// Launcher position placed so the slant range to the UAV equals the
    /// firing distance.
    pub fn launcher_position(&self) -> Vec3 {
        let dz = self.launch_altitude - self.uav_altitude;
        let horizontal = (self.firing_distance * self.firing_distance - dz * dz).max(0.0).sqrt();
        let (s, c) = self.launcher_bearing.sin_cos();
        Vec3::new(horizontal * c, horizontal * s, self.launch_altitude)
    }

    pub fn launch_record(&self) -> LaunchRecord {
        LaunchRecord { firing_position: self.launcher_position(), launch_speed: self.launch_speed, launch_time: 0.0 }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..=hi)
}

/// Uniform draw over the initial-condition ranges.
pub fn sample_initial_conditions(seed: u64) -> ScenarioDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScenarioDraw {
        uav_speed: uniform(&mut rng, ranges::UAV_SPEED),
        uav_altitude: uniform(&mut rng, ranges::UAV_ALTITUDE),
        uav_heading: rng.random_range(0.0..TAU),
        launch_speed: uniform(&mut rng, ranges::LAUNCH_SPEED),
        launch_altitude: uniform(&mut rng, ranges::LAUNCH_ALTITUDE),
        firing_distance: uniform(&mut rng, ranges::FIRING_DISTANCE),
        launcher_bearing: rng.random_range(0.0..TAU),
        seed,
    }
}

/// Per-episode seed derived from the master seed.
pub fn episode_seed(master_seed: u64, episode_index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(episode_index);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    /// Miss distance [m]; 0 means the missile hit.
    pub label: f64,
    pub episode_id: u64,
    /// Time since the episode started [s].
    pub t: f64,
}

/// Full result of one simulated episode.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub samples: Vec<LabeledSample>,
    pub label: f64,
    pub hit: bool,
    /// Closest approach actually reached, whatever the outcome.
    pub closest_approach: f64,
    pub duration: f64,
    /// UAV and missile positions at every dynamics step, when requested.
    pub trajectory: Vec<(Vec3, Vec3)>,
}

/// Simulates one episode and returns every detail; see [`run_episode`] for
/// the sample-only form.
pub fn simulate_episode(
    policy: PolicyId,
    draw: &ScenarioDraw,
    sample_period: f64,
    episode_id: u64,
    cfg: &SimConfig,
    record_trajectory: bool,
) -> Result<EpisodeRun, EpisodeError> {
    let dt = cfg.dt();
    if !(sample_period >= dt) {
        return Err(EpisodeError::SamplePeriod(sample_period));
    }
    let steps_per_sample = ((sample_period / dt).round() as u64).max(1);
    let record = draw.launch_record();
    let mut uav = draw.initial_uav();
    let mut missile = MissileState::launch(record.firing_position, record.launch_speed, &uav);

    let started = Instant::now();
    let mut features = vec![(0.0, observe_state(&uav, &record, 0.0)?)];
    let mut trajectory = Vec::new();
    if record_trajectory {
        trajectory.push((uav.position, missile.position));
    }
    let mut step: u64 = 0;
    let status = loop {
        let cmd = evasive_policy_control(policy, &uav, &cfg.aircraft);
        let next_missile = step_missile(&missile, &uav, &cfg.guidance, dt)?;
        uav = step_aircraft(&uav, &cmd, &cfg.aircraft, dt)?;
        missile = next_missile;
        step += 1;
        if record_trajectory {
            trajectory.push((uav.position, missile.position));
        }
        let status = engagement_status(&missile, &uav, &cfg.guidance);
        if status != MissileStatus::Flying {
            break status;
        }
        let now = step as f64 * dt;
        if step % steps_per_sample == 0 {
            features.push((now, observe_state(&uav, &record, now)?));
        }
        if step % 1_000 == 0 && started.elapsed() > EPISODE_WALL_CLOCK_CAP {
            return Err(EpisodeError::WallClock { simulated: now });
        }
    };

    let hit = status == MissileStatus::Hit;
    let label = if hit { 0.0 } else { missile.min_distance };
    let samples = features
        .into_iter()
        .map(|(t, features)| LabeledSample { features, label, episode_id, t })
        .collect();
    Ok(EpisodeRun {
        samples,
        label,
        hit,
        closest_approach: missile.min_distance,
        duration: step as f64 * dt,
        trajectory,
    })
}

/// Runs `policy` from `draw` to termination and returns the labelled states
/// recorded every `sample_period` seconds.
pub fn run_episode(
    policy: PolicyId,
    draw: &ScenarioDraw,
    sample_period: f64,
    cfg: &SimConfig,
) -> Result<Vec<LabeledSample>, EpisodeError> {
    Ok(simulate_episode(policy, draw, sample_period, 0, cfg, false)?.samples)
}

/// Runs `n_episodes` independent episodes of `policy`. Episodes may run in
/// parallel; results are merged in episode order so the dataset depends
/// only on the arguments.
pub fn collect_dataset(
    policy: PolicyId,
    n_episodes: u64,
    seed: u64,
    sample_period: f64,
    cfg: &SimConfig,
) -> Result<Dataset, EpisodeError> {
    if n_episodes == 0 {
        return Err(EpisodeError::NoEpisodes);
    }
    let runs: Vec<Vec<LabeledSample>> = (0..n_episodes)
        .into_par_iter()
        .map(|i| {
            let draw = sample_initial_conditions(episode_seed(seed, i));
            simulate_episode(policy, &draw, sample_period, i, cfg, false).map(|run| run.samples)
        })
        .collect::<Result<_, _>>()?;
    let (aircraft_hash, missile_hash) = cfg.hashes();
    Ok(Dataset {
        policy,
        seed,
        episode_count: n_episodes,
        aircraft_hash,
        missile_hash,
        samples: runs.into_iter().flatten().collect(),
    })
}

//! Scenario files: the UAV's starting state and a list of launch events,
//! authored in degrees and kilometers and converted to SI on load.
//!
//! ```toml
//! format_version = 1
//! seed = 7
//! models = "../models/manifest.txt"   # optional, relative to this file
//!
//! [uav]
//! altitude_m = 8000
//! speed_m_s = 330
//! heading_deg = 0
//!
//! [noise]                             # optional; defaults shown
//! range_m = 100
//! time_s = 1
//! bearing_deg = 0.1
//! altitude_m = 100
//! speed_m_s = 5
//! sample_count = 256
//! quantile = 0.1
//!
//! [[launch]]
//! range_km = 60        # slant range from the UAV's starting point
//! bearing_deg = 180    # compass bearing from the UAV's starting point
//! altitude_m = 10000
//! speed_m_s = 300
//! time_s = 0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::awareness::{ColorThresholds, SensorNoiseConfig};
use crate::episodes::LaunchRecord;
use crate::flightdyn::AircraftState;
use crate::vec3::Vec3;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("unsupported scenario format_version {0}")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the session computes its risk ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RingMode {
    /// Sensor-noise Monte Carlo with percentile bands.
    #[default]
    MonteCarlo,
    /// Single evaluation at the nominal observations.
    Deterministic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UavSection {
    altitude_m: f64,
    speed_m_s: f64,
    heading_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaunchSection {
    range_km: f64,
    bearing_deg: f64,
    altitude_m: f64,
    speed_m_s: f64,
    time_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format_version: u32,
    #[serde(default)]
    seed: u64,
    models: Option<String>,
    uav: UavSection,
    #[serde(default)]
    noise: SensorNoiseConfig,
    #[serde(default)]
    thresholds: ColorThresholds,
    #[serde(default)]
    ring: RingMode,
    #[serde(default)]
    launch: Vec<LaunchSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Model-set manifest, already resolved against the scenario's directory.
    pub models: Option<PathBuf>,
    pub uav: AircraftState,
    /// Launch events in time order.
    pub launches: Vec<LaunchRecord>,
    pub noise: SensorNoiseConfig,
    pub thresholds: ColorThresholds,
    pub ring: RingMode,
}

fn check(ok: bool, message: impl FnOnce() -> String) -> Result<(), ScenarioError> {
    if ok {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(message()))
    }
}

fn angle_ok(deg: f64) -> bool {
    deg.is_finite() && (0.0..360.0).contains(&deg)
}

impl Scenario {
    /// Parses scenario text; relative model paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))?;
        if file.format_version != SCENARIO_FORMAT_VERSION {
            return Err(ScenarioError::Version(file.format_version));
        }
        let u = &file.uav;
        check(u.altitude_m.is_finite() && u.altitude_m > 0.0, || format!("uav altitude {} m", u.altitude_m))?;
        check(u.speed_m_s.is_finite() && u.speed_m_s > 0.0, || format!("uav speed {} m/s", u.speed_m_s))?;
        check(angle_ok(u.heading_deg), || format!("uav heading {}° outside [0, 360)", u.heading_deg))?;
        let start = Vec3::new(0.0, 0.0, u.altitude_m);
        let uav = AircraftState::level(start, u.heading_deg.to_radians(), u.speed_m_s);

        let mut launches = Vec::with_capacity(file.launch.len());
        let mut last_time = f64::NEG_INFINITY;
        for (i, l) in file.launch.iter().enumerate() {
            let n = i + 1;
            check(l.range_km.is_finite() && l.range_km > 0.0, || format!("launch {n}: range {} km", l.range_km))?;
            check(angle_ok(l.bearing_deg), || format!("launch {n}: bearing {}° outside [0, 360)", l.bearing_deg))?;
            check(l.altitude_m.is_finite() && l.altitude_m >= 0.0, || format!("launch {n}: altitude {} m", l.altitude_m))?;
            check(l.speed_m_s.is_finite() && l.speed_m_s > 0.0, || format!("launch {n}: speed {} m/s", l.speed_m_s))?;
            check(l.time_s.is_finite() && l.time_s >= 0.0, || format!("launch {n}: time {} s", l.time_s))?;
            check(l.time_s >= last_time, || format!("launch {n}: launch times must be non-decreasing"))?;
            last_time = l.time_s;
            let range = l.range_km * 1000.0;
            let dz = l.altitude_m - u.altitude_m;
            check(range >= dz.abs(), || format!("launch {n}: range shorter than the altitude difference"))?;
            let horizontal = (range * range - dz * dz).sqrt();
            let (s, c) = l.bearing_deg.to_radians().sin_cos();
            launches.push(LaunchRecord {
                firing_position: Vec3::new(horizontal * c, horizontal * s, l.altitude_m),
                launch_speed: l.speed_m_s,
                launch_time: l.time_s,
            });
        }
        file.noise.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let t = &file.thresholds;
        check(t.red_below_m.is_finite() && t.red_below_m <= t.orange_below_m, || {
            "thresholds must satisfy red_below_m <= orange_below_m".into()
        })?;
        Ok(Scenario {
            seed: file.seed,
            models: file.models.map(|m| base.join(m)),
            uav,
            launches,
            noise: file.noise,
            thresholds: file.thresholds,
            ring: file.ring,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Time of the last launch event, or 0 with none.
    pub fn last_launch_time(&self) -> f64 {
        self.launches.last().map_or(0.0, |l| l.launch_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
format_version = 1
seed = 3
models = "m/manifest.txt"

[uav]
altitude_m = 8000
speed_m_s = 330
heading_deg = 90

[[launch]]
range_km = 50
bearing_deg = 0
altitude_m = 8000
speed_m_s = 300
time_s = 0

[[launch]]
range_km = 5
bearing_deg = 90
altitude_m = 11000
speed_m_s = 290
time_s = 4.5
"#;

    #[test]
    fn parses_and_converts_units() {
        let s = Scenario::parse(BASIC, Path::new("/tmp/x")).unwrap();
        assert_eq!(s.seed, 3);
        assert_eq!(s.models.as_deref(), Some(Path::new("/tmp/x/m/manifest.txt")));
        assert!((s.uav.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(s.uav.altitude(), 8000.0);
        assert_eq!(s.launches[0].firing_position, Vec3::new(50_000.0, 0.0, 8000.0));
        let p = s.launches[1].firing_position;
        assert!((p - s.uav.position).norm() - 5000.0 < 1e-9);
        assert!(p.x.abs() < 1e-9 && p.y > 0.0);
        assert_eq!(s.launches[1].launch_time, 4.5);
        assert_eq!(s.noise, SensorNoiseConfig::default());
        assert_eq!(s.ring, RingMode::MonteCarlo);
        assert_eq!(s.last_launch_time(), 4.5);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = |from: &str, to: &str| Scenario::parse(&BASIC.replacen(from, to, 1), Path::new("."));
        assert!(matches!(bad("format_version = 1", "format_version = 2"), Err(ScenarioError::Version(2))));
        assert!(matches!(bad("heading_deg = 90", "heading_deg = 360"), Err(ScenarioError::Invalid(_))));
        assert!(matches!(bad("time_s = 4.5", "time_s = -1"), Err(ScenarioError::Invalid(_))));
        assert!(matches!(bad("time_s = 0", "time_s = 9"), Err(ScenarioError::Invalid(_))));
        assert!(matches!(bad("range_km = 5\n", "range_km = 2\n"), Err(ScenarioError::Invalid(_))));
        assert!(matches!(bad("seed = 3", "seed = 3\nbogus = 1"), Err(ScenarioError::Syntax(_))));
        assert!(matches!(bad("speed_m_s = 330", "speed_m_s = nan"), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn no_launches_is_valid() {
        let text = "format_version = 1\n[uav]\naltitude_m = 8000\nspeed_m_s = 320\nheading_deg = 0\n";
        let s = Scenario::parse(text, Path::new(".")).unwrap();
        assert!(s.launches.is_empty());
        assert!(s.models.is_none());
    }
}

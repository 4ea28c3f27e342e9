//! Risk ring: per-policy worst-case miss distance over all observed
//! threats, the safest policy, Monte-Carlo sensor-noise bands and display
//! colors.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episodes::{FeatureVector, LaunchObservation, FEATURE_COUNT};
use crate::flightdyn::{wrap_pi, AircraftState, PolicyId};
use crate::surrogate::{ModelError, ModelSet};

pub const RING_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AssessError {
    #[error("no threats to assess")]
    NoThreats,
    #[error("threat {0} has a non-finite or out-of-range observation")]
    BadObservation(usize),
    #[error("invalid sensor noise config: {0}")]
    BadNoise(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything that predicts miss distance per policy.
pub trait Surrogate {
    /// Predicted miss distances [m] for `policy`, one per input.
    fn predict(&self, policy: PolicyId, xs: &[FeatureVector]) -> Result<Vec<f64>, ModelError>;

    /// Per-feature `(min, max)` seen in training, if known.
    fn training_range(&self, _policy: PolicyId) -> Option<([f64; FEATURE_COUNT], [f64; FEATURE_COUNT])> {
        None
    }
}

impl Surrogate for ModelSet {
    fn predict(&self, policy: PolicyId, xs: &[FeatureVector]) -> Result<Vec<f64>, ModelError> {
        self.get(policy).forward_batch(xs)
    }

    fn training_range(&self, policy: PolicyId) -> Option<([f64; FEATURE_COUNT], [f64; FEATURE_COUNT])> {
        let m = self.get(policy);
        Some((m.feature_min, m.feature_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Red,
    Orange,
    Green,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Red => "red",
            Category::Orange => "orange",
            Category::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColorThresholds {
    /// Miss distances below this are red [m].
    pub red_below_m: f64,
    /// Miss distances below this (and not red) are orange [m].
    pub orange_below_m: f64,
}

impl Default for ColorThresholds {
    fn default() -> Self {
        Self { red_below_m: 200.0, orange_below_m: 2000.0 }
    }
}

pub fn color_map(md: f64, thresholds: &ColorThresholds) -> Category {
    if md < thresholds.red_below_m {
        Category::Red
    } else if md < thresholds.orange_below_m {
        Category::Orange
    } else {
        Category::Green
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub median: f64,
    pub high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingEntry {
    pub policy: PolicyId,
    /// Lowest predicted miss distance over all threats [m].
    pub min_md_estimate: f64,
    /// Some contributing feature lay outside the model's training range.
    pub extrapolated: bool,
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRing {
    /// One entry per policy in [`PolicyId::ALL`] order.
    pub entries: Vec<RingEntry>,
    pub safest_policy: PolicyId,
}

impl RiskRing {
    /// Ring with the given estimates, no flags and no bands.
    pub fn from_estimates(estimates: [f64; PolicyId::COUNT]) -> Self {
        let entries = PolicyId::ALL
            .into_iter()
            .zip(estimates)
            .map(|(policy, md)| RingEntry { policy, min_md_estimate: md, extrapolated: false, band: None })
            .collect();
        let mut ring = RiskRing { entries, safest_policy: PolicyId::N };
        ring.safest_policy = safest_policy(&ring);
        ring
    }

    pub fn estimates(&self) -> [f64; PolicyId::COUNT] {
        std::array::from_fn(|i| self.entries[i].min_md_estimate)
    }

    pub fn entry(&self, policy: PolicyId) -> &RingEntry {
        &self.entries[policy.index()]
    }

    /// Versioned text form: one line per policy from N clockwise, then
    /// the safest policy on the last line.
    pub fn to_text(&self, thresholds: &ColorThresholds) -> String {
        let mut out = format!("format_version = {RING_FORMAT_VERSION}\n");
        out.push_str("# policy heading_deg md_m category extrapolated low_m median_m high_m\n");
        for e in &self.entries {
            let _ = write!(
                out,
                "{} {} {:.1} {} {}",
                e.policy.name(),
                e.policy.index() * 45,
                e.min_md_estimate,
                color_map(e.min_md_estimate, thresholds).as_str(),
                if e.extrapolated { "yes" } else { "no" },
            );
            match e.band {
                Some(b) => {
                    let _ = writeln!(out, " {:.1} {:.1} {:.1}", b.low, b.median, b.high);
                }
                None => out.push_str(" - - -\n"),
            }
        }
        let safest = self.entry(self.safest_policy);
        let _ = writeln!(
            out,
            "safest = {} {:.1} {}",
            safest.policy.name(),
            safest.min_md_estimate,
            color_map(safest.min_md_estimate, thresholds).as_str()
        );
        out
    }

    /// Display payload with categories resolved against `thresholds`.
    pub fn to_payload(&self, thresholds: &ColorThresholds) -> RingPayload {
        RingPayload {
            format_version: RING_FORMAT_VERSION,
            entries: self
                .entries
                .iter()
                .map(|e| EntryPayload {
                    policy: e.policy.name(),
                    index: e.policy.index(),
                    heading_deg: e.policy.index() as f64 * 45.0,
                    md_m: e.min_md_estimate,
                    category: color_map(e.min_md_estimate, thresholds),
                    extrapolated: e.extrapolated,
                    band: e.band,
                })
                .collect(),
            safest_policy: self.safest_policy.name(),
            safest_index: self.safest_policy.index(),
            thresholds: *thresholds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryPayload {
    pub policy: &'static str,
    pub index: usize,
    pub heading_deg: f64,
    pub md_m: f64,
    pub category: Category,
    pub extrapolated: bool,
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingPayload {
    pub format_version: u32,
    pub entries: Vec<EntryPayload>,
    pub safest_policy: &'static str,
    pub safest_index: usize,
    pub thresholds: ColorThresholds,
}

/// Index of the largest estimate; ties go to the lowest index.
fn argmax(values: &[f64; PolicyId::COUNT]) -> PolicyId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    PolicyId::from_index(best).expect("index < COUNT")
}

/// The policy with the largest estimate, lowest index on ties.
pub fn safest_policy(ring: &RiskRing) -> PolicyId {
    argmax(&ring.estimates())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AssessOptions {
    /// Clamp features into the training range before predicting instead
    /// of only flagging them.
    pub clamp_to_training_range: bool,
}

fn check_threats(threats: &[LaunchObservation]) -> Result<(), AssessError> {
    if threats.is_empty() {
        return Err(AssessError::NoThreats);
    }
    for (i, t) in threats.iter().enumerate() {
        if !t.is_finite() || t.range < 0.0 || t.time_since_launch < 0.0 {
            return Err(AssessError::BadObservation(i));
        }
    }
    Ok(())
}

fn out_of_range(range: &Option<([f64; FEATURE_COUNT], [f64; FEATURE_COUNT])>, x: &FeatureVector) -> bool {
    range.as_ref().is_some_and(|(lo, hi)| {
        (0..FEATURE_COUNT).any(|i| !FeatureVector::is_periodic(i) && (x.0[i] < lo[i] || x.0[i] > hi[i]))
    })
}

fn clamp(range: &Option<([f64; FEATURE_COUNT], [f64; FEATURE_COUNT])>, x: &FeatureVector) -> FeatureVector {
    match range {
        Some((lo, hi)) => FeatureVector(std::array::from_fn(|i| {
            if FeatureVector::is_periodic(i) {
                x.0[i]
            } else {
                x.0[i].clamp(lo[i], hi[i])
            }
        })),
        None => *x,
    }
}

/// Predictions for `features` laid out as `groups` consecutive blocks of
/// `per_group` threats, reduced to the minimum per block.
fn group_minima<S: Surrogate + ?Sized>(
    models: &S,
    policy: PolicyId,
    features: &[FeatureVector],
    per_group: usize,
    options: &AssessOptions,
) -> Result<Vec<f64>, ModelError> {
    let range = models.training_range(policy);
    let predictions = if options.clamp_to_training_range {
        let clamped: Vec<FeatureVector> = features.iter().map(|x| clamp(&range, x)).collect();
        models.predict(policy, &clamped)?
    } else {
        models.predict(policy, features)?
    };
    Ok(predictions.chunks(per_group).map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect())
}

/// Deterministic risk ring with default options.
pub fn assess<S: Surrogate + ?Sized>(
    uav: &AircraftState,
    threats: &[LaunchObservation],
    models: &S,
) -> Result<RiskRing, AssessError> {
    assess_with(uav, threats, models, &AssessOptions::default())
}

pub fn assess_with<S: Surrogate + ?Sized>(
    uav: &AircraftState,
    threats: &[LaunchObservation],
    models: &S,
    options: &AssessOptions,
) -> Result<RiskRing, AssessError> {
    check_threats(threats)?;
    let features: Vec<FeatureVector> = threats.iter().map(|t| FeatureVector::new(uav, t)).collect();
    let mut entries = Vec::with_capacity(PolicyId::COUNT);
    for policy in PolicyId::ALL {
        let md = group_minima(models, policy, &features, features.len(), options)?[0];
        let range = models.training_range(policy);
        let extrapolated = features.iter().any(|x| out_of_range(&range, x));
        entries.push(RingEntry { policy, min_md_estimate: md, extrapolated, band: None });
    }
    let mut ring = RiskRing { entries, safest_policy: PolicyId::N };
    ring.safest_policy = safest_policy(&ring);
    Ok(ring)
}

/// How the configured noise magnitudes are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseInterpretation {
    StandardDeviation,
    /// Values are variances in the listed units squared.
    Variance,
}

/// Which statistic of the Monte-Carlo draws the ring entries and the
/// safest policy use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionBasis {
    /// The lower `quantile` of the draws.
    Quantile,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseConfig {
    pub range_m: f64,
    pub time_s: f64,
    pub bearing_deg: f64,
    pub altitude_m: f64,
    pub speed_m_s: f64,
    pub interpretation: NoiseInterpretation,
    pub sample_count: usize,
    pub quantile: f64,
    pub basis: SelectionBasis,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        Self {
            range_m: 100.0,
            time_s: 1.0,
            bearing_deg: 0.1,
            altitude_m: 100.0,
            speed_m_s: 5.0,
            interpretation: NoiseInterpretation::StandardDeviation,
            sample_count: 256,
            quantile: 0.1,
            basis: SelectionBasis::Quantile,
        }
    }
}

impl SensorNoiseConfig {
    /// All noise zero, otherwise defaults.
    pub fn noiseless() -> Self {
        Self { range_m: 0.0, time_s: 0.0, bearing_deg: 0.0, altitude_m: 0.0, speed_m_s: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), AssessError> {
        let values = [self.range_m, self.time_s, self.bearing_deg, self.altitude_m, self.speed_m_s];
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(AssessError::BadNoise("noise magnitudes must be finite and non-negative".into()));
        }
        if self.sample_count == 0 {
            return Err(AssessError::BadNoise("sample count must be at least 1".into()));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(AssessError::BadNoise(format!("quantile must be in (0, 1), got {}", self.quantile)));
        }
        Ok(())
    }

    /// Standard deviations in SI units and radians, ordered
    /// (range, time, bearing, altitude, speed).
    pub fn sigmas(&self) -> [f64; 5] {
        let read = |v: f64| match self.interpretation {
            NoiseInterpretation::StandardDeviation => v,
            NoiseInterpretation::Variance => v.sqrt(),
        };
        [
            read(self.range_m),
            read(self.time_s),
            read(self.bearing_deg).to_radians(),
            read(self.altitude_m),
            read(self.speed_m_s),
        ]
    }
}

/// Nearest-rank quantile of an ascending slice: element `ceil(q·n) − 1`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Perturbed copies of `threats`: `sample_count` blocks of
/// `threats.len()` observations each. Draw order per threat is range,
/// time, bearing, altitude, speed.
pub fn perturbed_observations(
    threats: &[LaunchObservation],
    noise: &SensorNoiseConfig,
    seed: u64,
) -> Vec<LaunchObservation> {
    let [s_range, s_time, s_bearing, s_altitude, s_speed] = noise.sigmas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma: f64| -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    let mut out = Vec::with_capacity(noise.sample_count * threats.len());
    for _ in 0..noise.sample_count {
        for t in threats {
            let range = (t.range + draw(s_range)).max(0.0);
            let time_since_launch = (t.time_since_launch + draw(s_time)).max(0.0);
            let mut relative_bearing = t.relative_bearing + draw(s_bearing);
            if !(relative_bearing > -std::f64::consts::PI && relative_bearing <= std::f64::consts::PI) {
                relative_bearing = wrap_pi(relative_bearing);
            }
            let firing_altitude = t.firing_altitude + draw(s_altitude);
            let launch_speed = t.launch_speed + draw(s_speed);
            out.push(LaunchObservation { range, launch_speed, time_since_launch, relative_bearing, firing_altitude });
        }
    }
    out
}

/// Per-policy worst-case miss distance of every Monte-Carlo draw,
/// `[policy][draw]`.
pub fn monte_carlo_samples<S: Surrogate + ?Sized>(
    uav: &AircraftState,
    threats: &[LaunchObservation],
    models: &S,
    noise: &SensorNoiseConfig,
    seed: u64,
    options: &AssessOptions,
) -> Result<Vec<Vec<f64>>, AssessError> {
    check_threats(threats)?;
    noise.validate()?;
    let features: Vec<FeatureVector> =
        perturbed_observations(threats, noise, seed).iter().map(|t| FeatureVector::new(uav, t)).collect();
    PolicyId::ALL
        .into_iter()
        .map(|policy| group_minima(models, policy, &features, threats.len(), options).map_err(AssessError::from))
        .collect()
}

/// Risk ring under sensor noise. Each entry carries a band of the
/// `quantile`, median and `1 − quantile` draws; the entry estimate and
/// the safest policy use `noise.basis`.
pub fn monte_carlo_assess<S: Surrogate + ?Sized>(
    uav: &AircraftState,
    threats: &[LaunchObservation],
    models: &S,
    noise: &SensorNoiseConfig,
    seed: u64,
) -> Result<RiskRing, AssessError> {
    monte_carlo_assess_with(uav, threats, models, noise, seed, &AssessOptions::default())
}

pub fn monte_carlo_assess_with<S: Surrogate + ?Sized>(
    uav: &AircraftState,
    threats: &[LaunchObservation],
    models: &S,
    noise: &SensorNoiseConfig,
    seed: u64,
    options: &AssessOptions,
) -> Result<RiskRing, AssessError> {
    let samples = monte_carlo_samples(uav, threats, models, noise, seed, options)?;
    let nominal: Vec<FeatureVector> = threats.iter().map(|t| FeatureVector::new(uav, t)).collect();
    let mut entries = Vec::with_capacity(PolicyId::COUNT);
    for (policy, mut draws) in PolicyId::ALL.into_iter().zip(samples) {
        draws.sort_by(f64::total_cmp);
        let band = Band {
            low: nearest_rank(&draws, noise.quantile),
            median: nearest_rank(&draws, 0.5),
            high: nearest_rank(&draws, 1.0 - noise.quantile),
        };
        let min_md_estimate = match noise.basis {
            SelectionBasis::Quantile => band.low,
            SelectionBasis::Mean => draws.iter().sum::<f64>() / draws.len() as f64,
        };
        let range = models.training_range(policy);
        let extrapolated = nominal.iter().any(|x| out_of_range(&range, x));
        entries.push(RingEntry { policy, min_md_estimate, extrapolated, band: Some(band) });
    }
    let mut ring = RiskRing { entries, safest_policy: PolicyId::N };
    ring.safest_policy = safest_policy(&ring);
    Ok(ring)
}

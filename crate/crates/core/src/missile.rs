//! Proportional-navigation missile with boost/sustain/coast propulsion.
//!
//! Guidance runs separately in the horizontal and vertical LOS planes.
//! Outside `terminal_range_m` the vertical channel flies a climb to the
//! mid-course altitude instead of PN, which keeps the missile in thin air
//! for most of its flight. Lift supports the missile's weight (the normal
//! component of gravity is cancelled inside the lateral acceleration
//! budget) so only the along-track component of gravity trades energy.

use serde::{Deserialize, Serialize};

use crate::atmosphere::{self, GRAVITY};
use crate::constants::{constant_set, ConstantsError};
use crate::flightdyn::{AircraftState, DynamicsError, MAX_STEP};
use crate::vec3::Vec3;

constant_set! {
    /// Missile propulsion, aerodynamics and guidance parameters.
    pub struct GuidanceConfig("missile") {
        /// PN navigation constant N.
        navigation_constant = 4.0,
        /// Altitude tracked by the vertical channel during mid-course [m].
        midcourse_climb_altitude_m = 13_000.0,
        /// Desired climb rate per meter of altitude error in mid-course [1/s].
        climb_rate_gain_per_s = 0.05,
        /// Climb/descent rate limit in mid-course [m/s].
        max_climb_rate_m_s = 150.0,
        /// Vertical-speed tracking gain in mid-course [1/s].
        vertical_speed_gain_per_s = 1.0,
        /// Horizontal range below which PN takes over the vertical channel [m].
        terminal_range_m = 10_000.0,
        /// Boost phase duration [s].
        boost_duration_s = 6.0,
        /// Axial thrust acceleration during boost [m/s^2].
        boost_accel_m_s2 = 150.0,
        /// Sustain phase duration [s].
        sustain_duration_s = 10.0,
        /// Axial thrust acceleration during sustain [m/s^2].
        sustain_accel_m_s2 = 25.0,
        /// Missile mass used for drag [kg].
        mass_kg = 150.0,
        /// Aerodynamic reference area [m^2].
        reference_area_m2 = 0.0249,
        /// Zero-lift drag coefficient.
        drag_coefficient = 0.6,
        /// Induced drag factor k in CD = CD0 + k CL^2.
        induced_drag_factor = 0.01,
        /// Maximum lift coefficient; caps lateral acceleration at low dynamic pressure.
        max_lift_coefficient = 10.0,
        /// Lateral acceleration limit [m/s^2].
        max_lateral_accel_m_s2 = 300.0,
        /// Flight time after which the missile is spent [s].
        lifetime_s = 120.0,
        /// Closest approach below which the engagement is a hit [m].
        hit_radius_m = 100.0,
    }
}

impl GuidanceConfig {
    fn check(&self) -> Result<(), ConstantsError> {
        if !(self.navigation_constant > 0.0) {
            return Err(ConstantsError::Invalid("navigation_constant must be positive".into()));
        }
        if !(self.lifetime_s > 0.0) {
            return Err(ConstantsError::Invalid("lifetime_s must be positive".into()));
        }
        let positive = [
            ("mass_kg", self.mass_kg),
            ("reference_area_m2", self.reference_area_m2),
            ("max_lateral_accel_m_s2", self.max_lateral_accel_m_s2),
            ("hit_radius_m", self.hit_radius_m),
            ("max_lift_coefficient", self.max_lift_coefficient),
        ];
        for (key, value) in positive {
            if value <= 0.0 {
                return Err(ConstantsError::Invalid(format!("{key} must be positive")));
            }
        }
        if self.boost_duration_s < 0.0 || self.sustain_duration_s < 0.0 {
            return Err(ConstantsError::Invalid("phase durations must be non-negative".into()));
        }
        Ok(())
    }

    pub fn phase_at(&self, time_since_launch: f64) -> Phase {
        if time_since_launch < self.boost_duration_s {
            Phase::Boost
        } else if time_since_launch < self.boost_duration_s + self.sustain_duration_s {
            Phase::Sustain
        } else {
            Phase::Coast
        }
    }

    fn thrust_accel(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Boost => self.boost_accel_m_s2,
            Phase::Sustain => self.sustain_accel_m_s2,
            Phase::Coast => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Boost,
    Sustain,
    Coast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissileState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Time since launch τ [s].
    pub time_since_launch: f64,
    pub phase: Phase,
    /// Smallest missile–target separation seen so far [m], including
    /// within-step closest approaches.
    pub min_distance: f64,
    pub active: bool,
}

/// How an engagement stands after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissileStatus {
    Flying,
    Hit,
    Inactive,
}

impl MissileState {
    /// Fires a missile from `launcher` at `launch_speed`, pointed straight at
    /// the target.
    pub fn launch(launcher: Vec3, launch_speed: f64, target: &AircraftState) -> Self {
        let offset = target.position - launcher;
        Self {
            position: launcher,
            velocity: offset.normalized() * launch_speed,
            time_since_launch: 0.0,
            phase: Phase::Boost,
            min_distance: offset.norm(),
            active: true,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    pub fn altitude(&self) -> f64 {
        self.position.z
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if self.position.is_finite() && self.velocity.is_finite() && self.time_since_launch.is_finite() {
            Ok(())
        } else {
            Err(DynamicsError::NonFinite("missile state"))
        }
    }
}

/// Scalar PN command `N * los_rate * closing_speed`, saturated at `limit`.
pub fn pn_lateral_accel(los_rate: f64, closing_speed: f64, navigation_constant: f64, limit: f64) -> f64 {
    (navigation_constant * los_rate * closing_speed).clamp(-limit, limit)
}

/// Component of `v` perpendicular to the unit vector `axis`.
fn reject(v: Vec3, axis: Vec3) -> Vec3 {
    v - axis * v.dot(axis)
}

fn clamp_norm(v: Vec3, limit: f64) -> Vec3 {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        v
    }
}

fn guidance_accel(position: Vec3, velocity: Vec3, target_position: Vec3, target_velocity: Vec3, cfg: &GuidanceConfig) -> Vec3 {
    let limit = cfg.max_lateral_accel_m_s2;
    let nav = cfg.navigation_constant;
    let r = target_position - position;
    let vr = target_velocity - velocity;
    let range = r.norm();
    let horizontal = r.horizontal_norm();
    let mut command = Vec3::ZERO;
    if horizontal > 0.0 {
        let h2 = horizontal * horizontal;
        let los_rate = (r.x * vr.y - r.y * vr.x) / h2;
        let closing = (-(r.x * vr.x + r.y * vr.y) / horizontal).max(0.0);
        let normal = Vec3::new(-r.y / horizontal, r.x / horizontal, 0.0);
        command += normal * pn_lateral_accel(los_rate, closing, nav, limit);
    }
    if horizontal > cfg.terminal_range_m {
        let desired_climb = (cfg.climb_rate_gain_per_s * (cfg.midcourse_climb_altitude_m - position.z))
            .clamp(-cfg.max_climb_rate_m_s, cfg.max_climb_rate_m_s);
        let vertical = (cfg.vertical_speed_gain_per_s * (desired_climb - velocity.z)).clamp(-limit, limit);
        command += Vec3::new(0.0, 0.0, vertical);
    } else if range > 0.0 && horizontal > 0.0 {
        let range_rate_h = (r.x * vr.x + r.y * vr.y) / horizontal;
        let los_rate = (horizontal * vr.z - r.z * range_rate_h) / (range * range);
        let closing = (-r.dot(vr) / range).max(0.0);
        let (sin_el, cos_el) = (r.z / range, horizontal / range);
        let normal = Vec3::new(-sin_el * r.x / horizontal, -sin_el * r.y / horizontal, cos_el);
        command += normal * pn_lateral_accel(los_rate, closing, nav, limit);
    }
    let axis = velocity.normalized();
    clamp_norm(reject(command, axis), limit)
}

/// Guidance acceleration demanded for the current geometry: planar PN in
/// both LOS planes, with the vertical channel replaced by the mid-course
/// climb while range exceeds the terminal range. The result is lateral
/// (perpendicular to the missile velocity) and saturated.
pub fn guidance_command(missile: &MissileState, target: &AircraftState, cfg: &GuidanceConfig) -> Vec3 {
    guidance_accel(missile.position, missile.velocity, target.position, target.velocity(), cfg)
}

fn acceleration(
    position: Vec3,
    velocity: Vec3,
    target_position: Vec3,
    target_velocity: Vec3,
    phase: Phase,
    cfg: &GuidanceConfig,
) -> Vec3 {
    let speed = velocity.norm().max(1.0);
    let axis = velocity.normalized();
    let rho = atmosphere::density(position.z);
    let qs = 0.5 * rho * speed * speed * cfg.reference_area_m2;
    let lift_limit = cfg.max_lift_coefficient * qs / cfg.mass_kg;

    let guidance = guidance_accel(position, velocity, target_position, target_velocity, cfg);
    let weight_support = reject(Vec3::UP * GRAVITY, axis);
    let lateral = clamp_norm(guidance + weight_support, cfg.max_lateral_accel_m_s2.min(lift_limit));

    let lift_coefficient = cfg.mass_kg * lateral.norm() / qs;
    let drag_coefficient = cfg.drag_coefficient + cfg.induced_drag_factor * lift_coefficient * lift_coefficient;
    let axial = cfg.thrust_accel(phase) - qs * drag_coefficient / cfg.mass_kg;

    lateral + axis * axial - Vec3::UP * GRAVITY
}

/// Minimum of `|p_rel + v_rel t|` over `t` in `[0, dt]`.
pub fn cpa_within_step(p_rel: Vec3, v_rel: Vec3, dt: f64) -> f64 {
    let speed_sq = v_rel.norm_squared();
    let t = if speed_sq > 0.0 { (-p_rel.dot(v_rel) / speed_sq).clamp(0.0, dt) } else { 0.0 };
    (p_rel + v_rel * t).norm()
}

/// Advances the missile `dt` seconds with one RK4 step against a target
/// extrapolated at constant velocity over the step, then folds the
/// within-step closest approach into `min_distance`.
pub fn step_missile(
    missile: &MissileState,
    target: &AircraftState,
    cfg: &GuidanceConfig,
    dt: f64,
) -> Result<MissileState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::StepOutOfRange(dt));
    }
    if !missile.active {
        return Err(DynamicsError::InactiveMissile);
    }
    missile.validate()?;
    target.validate()?;

    let phase = cfg.phase_at(missile.time_since_launch).max(missile.phase);
    let tp = target.position;
    let tv = target.velocity();
    let at = |s: f64, p: Vec3, v: Vec3| acceleration(p, v, tp + tv * s, tv, phase, cfg);

    let (p0, v0) = (missile.position, missile.velocity);
    let a1 = at(0.0, p0, v0);
    let (p2, v2) = (p0 + v0 * (dt / 2.0), v0 + a1 * (dt / 2.0));
    let a2 = at(dt / 2.0, p2, v2);
    let (p3, v3) = (p0 + v2 * (dt / 2.0), v0 + a2 * (dt / 2.0));
    let a3 = at(dt / 2.0, p3, v3);
    let (p4, v4) = (p0 + v3 * dt, v0 + a3 * dt);
    let a4 = at(dt, p4, v4);
    let position = p0 + (v0 + v2 * 2.0 + v3 * 2.0 + v4) * (dt / 6.0);
    let velocity = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);

    let rel_start = p0 - tp;
    let rel_end = position - (tp + tv * dt);
    let cpa = cpa_within_step(rel_start, (rel_end - rel_start) / dt, dt);

    let time_since_launch = missile.time_since_launch + dt;
    let next = MissileState {
        position,
        velocity,
        time_since_launch,
        phase: cfg.phase_at(time_since_launch).max(phase),
        min_distance: missile.min_distance.min(cpa),
        active: true,
    };
    next.validate()?;
    Ok(next)
}

/// True once the missile can no longer intercept: past its lifetime, on
/// the ground, or (after boost) slower than the target while the range
/// opens.
pub fn missile_inactive(missile: &MissileState, target: &AircraftState, cfg: &GuidanceConfig) -> bool {
    if missile.time_since_launch > cfg.lifetime_s || missile.altitude() <= 0.0 {
        return true;
    }
    if missile.phase == Phase::Boost {
        return false;
    }
    let r = target.position - missile.position;
    let range = r.norm();
    let range_rate = if range > 0.0 { r.dot(target.velocity() - missile.velocity) / range } else { 0.0 };
    missile.speed() < target.speed && range_rate > 0.0
}

/// Classifies the engagement after a step: a closest approach inside the
/// hit radius is a hit, otherwise the missile is checked for inactivity.
pub fn engagement_status(missile: &MissileState, target: &AircraftState, cfg: &GuidanceConfig) -> MissileStatus {
    if missile.min_distance < cfg.hit_radius_m {
        MissileStatus::Hit
    } else if missile_inactive(missile, target, cfg) {
        MissileStatus::Inactive
    } else {
        MissileStatus::Flying
    }
}

//! Point-mass aircraft dynamics and the eight compass evasive policies.
//!
//! The vehicle is a 3-DOF point mass: lift always balances the normal
//! component of weight (coordinated turns), the roll and pitch autopilots
//! are first-order slews with rate limits, and speed follows the energy
//! equation `v' = (T - D)/m - g sin(theta)` with quadratic drag, induced
//! drag from the turn load factor and a transonic drag rise. Integration is
//! classic fixed-step RK4.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atmosphere::{self, GRAVITY};
use crate::constants::{constant_set, ConstantsError};
use crate::vec3::Vec3;

/// Largest accepted integration step.
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time step {0} s outside (0, {MAX_STEP}]")]
    StepOutOfRange(f64),
    #[error("airspeed dropped to {0} m/s")]
    Stall(f64),
    #[error("missile is no longer active")]
    InactiveMissile,
}

constant_set! {
    /// Fighter-class point-mass model parameters.
    pub struct AircraftParams("aircraft") {
        /// Vehicle mass [kg].
        mass_kg = 12_000.0,
        /// Reference wing area [m^2].
        wing_area_m2 = 27.87,
        /// Subsonic zero-lift drag coefficient.
        zero_lift_drag = 0.021,
        /// Induced drag factor k in CD = CD0 + k CL^2.
        induced_drag_factor = 0.12,
        /// Full-throttle thrust at sea level [N]; scales with air density.
        max_thrust_n = 110_000.0,
        /// Mach number where the transonic drag rise starts.
        critical_mach = 0.9,
        /// Drag-rise factor: CD0 *= 1 + factor (M - Mcrit)^2 above critical Mach.
        wave_drag_factor = 30.0,
        /// Bank angle limit [deg].
        max_bank_deg = 80.0,
        /// Pitch (flight-path angle) limit [deg].
        max_pitch_deg = 30.0,
        /// Descent pitch flown by the evasive policies [deg].
        dive_pitch_deg = -15.0,
        /// Altitude where the evasive descent levels off [m].
        floor_altitude_m = 1_000.0,
        /// Pitch command per meter above the floor while capturing it [rad/m].
        floor_capture_gain = 0.001,
        /// Maximum sustained load factor [g].
        max_load_factor = 9.0,
        /// Roll autopilot time constant [s].
        roll_time_constant_s = 0.4,
        /// Roll rate limit [deg/s].
        max_roll_rate_deg_s = 180.0,
        /// Pitch autopilot gain [1/s].
        pitch_gain_per_s = 1.5,
        /// Pitch rate limit [deg/s].
        max_pitch_rate_deg_s = 10.0,
        /// Desired turn rate per radian of heading error [1/s].
        heading_gain_per_s = 1.0,
        /// Throttle used by operator heading-hold flight.
        cruise_throttle = 0.7,
        /// Fixed RK4 step [s].
        integration_step_s = 0.02,
    }
}

impl AircraftParams {
    fn check(&self) -> Result<(), ConstantsError> {
        let positive = [
            ("mass_kg", self.mass_kg),
            ("wing_area_m2", self.wing_area_m2),
            ("max_thrust_n", self.max_thrust_n),
            ("max_bank_deg", self.max_bank_deg),
            ("max_pitch_deg", self.max_pitch_deg),
            ("max_load_factor", self.max_load_factor - 1.0),
            ("roll_time_constant_s", self.roll_time_constant_s),
            ("max_roll_rate_deg_s", self.max_roll_rate_deg_s),
            ("max_pitch_rate_deg_s", self.max_pitch_rate_deg_s),
            ("integration_step_s", self.integration_step_s),
        ];
        for (key, value) in positive {
            if value <= 0.0 {
                return Err(ConstantsError::Invalid(format!("{key} must be positive")));
            }
        }
        if self.max_bank_deg >= 90.0 {
            return Err(ConstantsError::Invalid("max_bank_deg must be below 90".into()));
        }
        if self.dive_pitch_deg >= 0.0 || self.dive_pitch_deg < -self.max_pitch_deg {
            return Err(ConstantsError::Invalid(
                "dive_pitch_deg must be negative and within the pitch limit".into(),
            ));
        }
        if self.integration_step_s > MAX_STEP {
            return Err(ConstantsError::Invalid(format!("integration_step_s above {MAX_STEP}")));
        }
        if !(0.0..=1.0).contains(&self.cruise_throttle) {
            return Err(ConstantsError::Invalid("cruise_throttle outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn max_bank(&self) -> f64 {
        self.max_bank_deg.to_radians()
    }

    pub fn max_pitch(&self) -> f64 {
        self.max_pitch_deg.to_radians()
    }

    /// Bank angle reachable in a level coordinated turn, taking the tighter
    /// of the bank limit and the load-factor limit.
    pub fn effective_bank_limit(&self) -> f64 {
        self.max_bank().min((1.0 / self.max_load_factor).acos())
    }
}

/// Kinematic truth for the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    /// North/East/Up position [m]; `z` is the altitude.
    pub position: Vec3,
    /// Roll [rad], positive right wing down.
    pub roll: f64,
    /// Pitch, i.e. flight-path angle [rad], positive nose up.
    pub pitch: f64,
    /// Heading [rad] in [0, 2π), 0 = North, clockwise positive.
    pub heading: f64,
    /// True airspeed [m/s].
    pub speed: f64,
}

impl AircraftState {
    /// Wings-level, zero-pitch state at the given point.
    pub fn level(position: Vec3, heading: f64, speed: f64) -> Self {
        Self { position, roll: 0.0, pitch: 0.0, heading: wrap_two_pi(heading), speed }
    }

    pub fn altitude(&self) -> f64 {
        self.position.z
    }

    pub fn velocity(&self) -> Vec3 {
        let (sp, cp) = self.pitch.sin_cos();
        let (sh, ch) = self.heading.sin_cos();
        Vec3::new(self.speed * cp * ch, self.speed * cp * sh, self.speed * sp)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let finite = self.position.is_finite()
            && self.roll.is_finite()
            && self.pitch.is_finite()
            && self.heading.is_finite()
            && self.speed.is_finite();
        if !finite {
            return Err(DynamicsError::NonFinite("aircraft state"));
        }
        if self.speed <= 0.0 {
            return Err(DynamicsError::Stall(self.speed));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Absolute heading to turn toward [rad].
    pub commanded_heading: f64,
    /// Flight-path angle to slew toward [rad].
    pub commanded_pitch: f64,
    /// Throttle in [0, 1].
    pub throttle: f64,
}

/// One of the eight compass-direction evasive maneuvers, ordered clockwise
/// from North.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyId {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl PolicyId {
    pub const COUNT: usize = 8;
    pub const ALL: [PolicyId; 8] = [
        PolicyId::N,
        PolicyId::NE,
        PolicyId::E,
        PolicyId::SE,
        PolicyId::S,
        PolicyId::SW,
        PolicyId::W,
        PolicyId::NW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<PolicyId> {
        Self::ALL.get(index).copied()
    }

    /// Absolute compass heading flown by the policy [rad].
    pub fn heading(self) -> f64 {
        (self.index() as f64 * 45.0).to_radians()
    }

    pub fn name(self) -> &'static str {
        ["N", "NE", "E", "SE", "S", "SW", "W", "NW"][self.index()]
    }

    pub fn from_name(name: &str) -> Option<PolicyId> {
        Self::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Wraps an angle into [0, 2π).
pub fn wrap_two_pi(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_pi(angle: f64) -> f64 {
    let wrapped = wrap_two_pi(angle);
    if wrapped > PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Signed turn from `from` to `to` in (-π, π]. An exact reversal resolves
/// clockwise (+π).
pub fn shortest_arc(from: f64, to: f64) -> f64 {
    wrap_pi(to - from)
}

/// Command for flying `policy`: turn to the policy heading, dive at the
/// configured pitch and level off at the floor altitude, full throttle.
pub fn evasive_policy_control(policy: PolicyId, state: &AircraftState, params: &AircraftParams) -> ControlCommand {
    let above_floor = state.altitude() - params.floor_altitude_m;
    let commanded_pitch = if above_floor <= 0.0 {
        0.0
    } else {
        (-params.floor_capture_gain * above_floor).max(params.dive_pitch_deg.to_radians())
    };
    ControlCommand { commanded_heading: policy.heading(), commanded_pitch, throttle: 1.0 }
}

/// Command for level flight toward an operator-selected heading.
pub fn heading_hold_control(heading: f64, params: &AircraftParams) -> ControlCommand {
    ControlCommand { commanded_heading: wrap_two_pi(heading), commanded_pitch: 0.0, throttle: params.cruise_throttle }
}

// [north, east, up, roll, pitch, heading (unwrapped), speed]
type Ode = [f64; 7];

fn derivative(s: &Ode, cmd: &ControlCommand, p: &AircraftParams) -> Ode {
    let [_, _, altitude, roll, pitch, heading, speed] = *s;
    let speed = speed.max(1.0);

    let error = shortest_arc(heading, cmd.commanded_heading);
    let desired_rate = p.heading_gain_per_s * error;
    let bank_limit = p.effective_bank_limit();
    let desired_bank = (speed * desired_rate / GRAVITY).atan().clamp(-bank_limit, bank_limit);
    let max_roll_rate = p.max_roll_rate_deg_s.to_radians();
    let roll_rate = ((desired_bank - roll) / p.roll_time_constant_s).clamp(-max_roll_rate, max_roll_rate);

    let max_pitch_rate = p.max_pitch_rate_deg_s.to_radians();
    let pitch_rate = (p.pitch_gain_per_s * (cmd.commanded_pitch - pitch)).clamp(-max_pitch_rate, max_pitch_rate);

    let heading_rate = GRAVITY * roll.tan() / speed;

    let rho = atmosphere::density(altitude);
    let dynamic_pressure = 0.5 * rho * speed * speed;
    let qs = dynamic_pressure * p.wing_area_m2;
    let mach = speed / atmosphere::speed_of_sound(altitude);
    let rise = (mach - p.critical_mach).max(0.0);
    let cd0 = p.zero_lift_drag * (1.0 + p.wave_drag_factor * rise * rise);
    let weight = p.mass_kg * GRAVITY;
    let lift = weight * pitch.cos() / roll.cos();
    let cl = lift / qs;
    let drag = qs * (cd0 + p.induced_drag_factor * cl * cl);
    let thrust = cmd.throttle * p.max_thrust_n * rho / atmosphere::SEA_LEVEL_DENSITY;
    let speed_rate = (thrust - drag) / p.mass_kg - GRAVITY * pitch.sin();

    let (sp, cp) = pitch.sin_cos();
    let (sh, ch) = heading.sin_cos();
    [speed * cp * ch, speed * cp * sh, speed * sp, roll_rate, pitch_rate, heading_rate, speed_rate]
}

fn axpy(base: &Ode, k: &Ode, h: f64) -> Ode {
    std::array::from_fn(|i| base[i] + h * k[i])
}

/// Advances the aircraft `dt` seconds with one RK4 step.
pub fn step_aircraft(
    state: &AircraftState,
    cmd: &ControlCommand,
    params: &AircraftParams,
    dt: f64,
) -> Result<AircraftState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::StepOutOfRange(dt));
    }
    state.validate()?;
    if !(cmd.commanded_heading.is_finite() && cmd.commanded_pitch.is_finite() && cmd.throttle.is_finite()) {
        return Err(DynamicsError::NonFinite("control command"));
    }
    let max_pitch = params.max_pitch();
    let cmd = ControlCommand {
        commanded_heading: cmd.commanded_heading,
        commanded_pitch: cmd.commanded_pitch.clamp(-max_pitch, max_pitch),
        throttle: cmd.throttle.clamp(0.0, 1.0),
    };

    let s0: Ode = [
        state.position.x,
        state.position.y,
        state.position.z,
        state.roll,
        state.pitch,
        state.heading,
        state.speed,
    ];
    let k1 = derivative(&s0, &cmd, params);
    let k2 = derivative(&axpy(&s0, &k1, dt / 2.0), &cmd, params);
    let k3 = derivative(&axpy(&s0, &k2, dt / 2.0), &cmd, params);
    let k4 = derivative(&axpy(&s0, &k3, dt), &cmd, params);
    let s1: Ode = std::array::from_fn(|i| s0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));

    let max_bank = params.max_bank();
    let next = AircraftState {
        position: Vec3::new(s1[0], s1[1], s1[2]),
        roll: s1[3].clamp(-max_bank, max_bank),
        pitch: s1[4].clamp(-max_pitch, max_pitch),
        heading: wrap_two_pi(s1[5]),
        speed: s1[6],
    };
    next.validate()?;
    Ok(next)
}

/// Advances `duration` seconds in fixed steps of the configured size (the
/// last step is shortened to land exactly on `duration`).
pub fn advance_aircraft(
    state: &AircraftState,
    cmd: &ControlCommand,
    params: &AircraftParams,
    duration: f64,
) -> Result<AircraftState, DynamicsError> {
    let dt = params.integration_step_s;
    let steps = (duration / dt).floor() as usize;
    let mut current = *state;
    for _ in 0..steps {
        current = step_aircraft(&current, cmd, params, dt)?;
    }
    let rest = duration - steps as f64 * dt;
    if rest > 1e-12 {
        current = step_aircraft(&current, cmd, params, rest)?;
    }
    Ok(current)
}

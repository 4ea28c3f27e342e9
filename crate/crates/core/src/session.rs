//! Live engagement sessions: the UAV, every launched missile and the
//! operator's command advance together in simulated time, and the risk
//! ring is rebuilt once per simulated second from launch observations.
//!
//! The missiles' true states drive the engagement outcome only. Ring
//! features come from [`observe_launch`] on the scenario's launch records,
//! and every feature vector used is kept in [`Session::feature_log`].

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awareness::{assess, monte_carlo_assess, AssessError, RingPayload, RiskRing, Surrogate};
use crate::episodes::{episode_seed, observe_launch, EpisodeError, FeatureVector, LaunchObservation, SimConfig};
use crate::flightdyn::{
    evasive_policy_control, heading_hold_control, step_aircraft, wrap_two_pi, AircraftState, DynamicsError, PolicyId,
};
use crate::missile::{engagement_status, step_missile, MissileState, MissileStatus};
use crate::scenario::{RingMode, Scenario};

pub const TRACE_FORMAT_VERSION: u32 = 1;
/// Ring recomputation period [s].
pub const RING_PERIOD_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session has ended ({0:?})")]
    Terminal(Outcome),
    #[error("invalid step duration {0} s")]
    BadStep(f64),
    #[error("invalid command: {0}")]
    BadCommand(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Assess(#[from] AssessError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ongoing,
    Hit,
    AllThreatsInactive,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Hit => "hit",
            Outcome::AllThreatsInactive => "all_threats_inactive",
        }
    }
}

/// What the operator asked the UAV to do.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorCommand {
    /// Fly level toward a compass heading.
    Heading { heading_deg: f64 },
    /// Fly one evasive policy.
    Policy { policy: PolicyId },
    /// Fly whichever policy the latest ring rates safest.
    Safest,
}

impl OperatorCommand {
    fn validate(&self) -> Result<(), SessionError> {
        match *self {
            OperatorCommand::Heading { heading_deg } if !heading_deg.is_finite() => {
                Err(SessionError::BadCommand(format!("heading {heading_deg}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
struct Threat {
    missile: Option<MissileState>,
    status: MissileStatus,
}

/// One feature vector used for a ring.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLogEntry {
    pub clock: f64,
    pub uav: AircraftState,
    pub threat: usize,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UavView {
    pub x_m: f64,
    pub y_m: f64,
    pub altitude_m: f64,
    pub heading_deg: f64,
    pub speed_m_s: f64,
    pub roll_deg: f64,
    pub pitch_deg: f64,
}

impl From<&AircraftState> for UavView {
    fn from(s: &AircraftState) -> Self {
        Self {
            x_m: s.position.x,
            y_m: s.position.y,
            altitude_m: s.altitude(),
            heading_deg: s.heading.to_degrees(),
            speed_m_s: s.speed,
            roll_deg: s.roll.to_degrees(),
            pitch_deg: s.pitch.to_degrees(),
        }
    }
}

/// What the operator knows about one threat: where and when it was fired.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThreatView {
    pub index: usize,
    pub launch_time_s: f64,
    pub firing_x_m: f64,
    pub firing_y_m: f64,
    pub firing_altitude_m: f64,
    pub launch_speed_m_s: f64,
    pub launched: bool,
}

/// Immutable view of a session for display.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub clock_s: f64,
    pub running: bool,
    pub outcome: Outcome,
    pub command: OperatorCommand,
    /// Policy flown during the last step, if the UAV is flying one.
    pub active_policy: Option<PolicyId>,
    pub uav: UavView,
    pub threats: Vec<ThreatView>,
    pub ring: Option<RingPayload>,
    pub ring_clock_s: Option<f64>,
    /// Closest approach per launched threat, revealed once the session ends.
    pub miss_distances_m: Option<Vec<f64>>,
}

pub struct Session {
    scenario: Scenario,
    cfg: SimConfig,
    models: Arc<dyn Surrogate + Send + Sync>,
    steps: u64,
    steps_per_ring: u64,
    uav: AircraftState,
    threats: Vec<Threat>,
    next_launch: usize,
    ring: Option<RiskRing>,
    ring_clock: Option<f64>,
    ring_count: u64,
    command: OperatorCommand,
    active_policy: Option<PolicyId>,
    running: bool,
    outcome: Outcome,
    feature_log: Vec<FeatureLogEntry>,
}

impl Session {
    /// New paused session at clock 0 holding the initial heading.
    pub fn new(scenario: Scenario, models: Arc<dyn Surrogate + Send + Sync>, cfg: SimConfig) -> Self {
        let dt = cfg.dt();
        let uav = scenario.uav;
        let threats = scenario.launches.iter().map(|_| Threat { missile: None, status: MissileStatus::Flying }).collect();
        Self {
            command: OperatorCommand::Heading { heading_deg: uav.heading.to_degrees() },
            steps_per_ring: ((RING_PERIOD_S / dt).round() as u64).max(1),
            scenario,
            cfg,
            models,
            steps: 0,
            uav,
            threats,
            next_launch: 0,
            ring: None,
            ring_clock: None,
            ring_count: 0,
            active_policy: None,
            running: false,
            outcome: Outcome::Ongoing,
            feature_log: Vec::new(),
        }
    }

    pub fn clock(&self) -> f64 {
        self.steps as f64 * self.cfg.dt()
    }

    pub fn uav(&self) -> &AircraftState {
        &self.uav
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn ring(&self) -> Option<&RiskRing> {
        self.ring.as_ref()
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// Number of launch events fired so far.
    pub fn launched(&self) -> usize {
        self.next_launch
    }

    pub fn ring_clock(&self) -> Option<f64> {
        self.ring_clock
    }

    pub fn feature_log(&self) -> &[FeatureLogEntry] {
        &self.feature_log
    }

    /// Closest approach of every launched missile so far [m].
    pub fn miss_distances(&self) -> Vec<f64> {
        self.threats.iter().filter_map(|t| t.missile.map(|m| m.min_distance)).collect()
    }

    fn ensure_ongoing(&self) -> Result<(), SessionError> {
        match self.outcome {
            Outcome::Ongoing => Ok(()),
            done => Err(SessionError::Terminal(done)),
        }
    }

    pub fn set_running(&mut self, running: bool) -> Result<(), SessionError> {
        self.ensure_ongoing()?;
        self.running = running;
        Ok(())
    }

    pub fn command(&mut self, command: OperatorCommand) -> Result<(), SessionError> {
        self.ensure_ongoing()?;
        command.validate()?;
        self.command = command;
        Ok(())
    }

    /// Advances a running session by `dt` simulated seconds, rounded to
    /// whole integration steps. A paused session is left unchanged.
    pub fn step(&mut self, dt: f64) -> Result<(), SessionError> {
        self.ensure_ongoing()?;
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(SessionError::BadStep(dt));
        }
        if !self.running {
            return Ok(());
        }
        let n = (dt / self.cfg.dt()).round() as u64;
        for _ in 0..n {
            self.tick()?;
            if self.outcome != Outcome::Ongoing {
                break;
            }
        }
        Ok(())
    }

    /// One integration step regardless of the run flag.
    fn tick(&mut self) -> Result<(), SessionError> {
        let now = self.clock();
        while let Some(record) = self.scenario.launches.get(self.next_launch) {
            if record.launch_time > now {
                break;
            }
            let missile = MissileState::launch(record.firing_position, record.launch_speed, &self.uav);
            self.threats[self.next_launch].missile = Some(missile);
            self.next_launch += 1;
        }
        if self.steps % self.steps_per_ring == 0 && self.next_launch > 0 {
            self.recompute_ring(now)?;
        }

        let (cmd, policy) = match self.command {
            OperatorCommand::Heading { heading_deg } => {
                (heading_hold_control(wrap_two_pi(heading_deg.to_radians()), &self.cfg.aircraft), None)
            }
            OperatorCommand::Policy { policy } => {
                (evasive_policy_control(policy, &self.uav, &self.cfg.aircraft), Some(policy))
            }
            OperatorCommand::Safest => match &self.ring {
                Some(ring) => {
                    let p = ring.safest_policy;
                    (evasive_policy_control(p, &self.uav, &self.cfg.aircraft), Some(p))
                }
                None => (heading_hold_control(self.uav.heading, &self.cfg.aircraft), None),
            },
        };
        self.active_policy = policy;

        let dt = self.cfg.dt();
        for threat in &mut self.threats {
            if let (Some(m), MissileStatus::Flying) = (&threat.missile, threat.status) {
                threat.missile = Some(step_missile(m, &self.uav, &self.cfg.guidance, dt)?);
            }
        }
        self.uav = step_aircraft(&self.uav, &cmd, &self.cfg.aircraft, dt)?;
        self.steps += 1;

        for threat in &mut self.threats {
            if let (Some(m), MissileStatus::Flying) = (&threat.missile, threat.status) {
                threat.status = engagement_status(m, &self.uav, &self.cfg.guidance);
            }
        }
        if self.threats.iter().any(|t| t.status == MissileStatus::Hit) {
            self.outcome = Outcome::Hit;
        } else if self.next_launch == self.threats.len()
            && !self.threats.is_empty()
            && self.threats.iter().all(|t| t.status == MissileStatus::Inactive)
        {
            self.outcome = Outcome::AllThreatsInactive;
        }
        if self.outcome != Outcome::Ongoing {
            self.running = false;
        }
        Ok(())
    }

    /// Launch observations of every fired threat still within the missile
    /// lifetime, with their threat indices.
    fn observations(&self, now: f64) -> Result<Vec<(usize, LaunchObservation)>, SessionError> {
        let mut out = Vec::new();
        for (i, record) in self.scenario.launches[..self.next_launch].iter().enumerate() {
            let obs = observe_launch(&self.uav, record, now)?;
            if obs.time_since_launch <= self.cfg.guidance.lifetime_s {
                out.push((i, obs));
            }
        }
        Ok(out)
    }

    fn recompute_ring(&mut self, now: f64) -> Result<(), SessionError> {
        let observed = self.observations(now)?;
        if observed.is_empty() {
            self.ring = None;
            return Ok(());
        }
        for &(threat, ref obs) in &observed {
            self.feature_log.push(FeatureLogEntry {
                clock: now,
                uav: self.uav,
                threat,
                features: FeatureVector::new(&self.uav, obs),
            });
        }
        let obs: Vec<LaunchObservation> = observed.into_iter().map(|(_, o)| o).collect();
        let ring = match self.scenario.ring {
            RingMode::Deterministic => assess(&self.uav, &obs, self.models.as_ref())?,
            RingMode::MonteCarlo => {
                let seed = episode_seed(self.scenario.seed, self.ring_count);
                monte_carlo_assess(&self.uav, &obs, self.models.as_ref(), &self.scenario.noise, seed)?
            }
        };
        self.ring = Some(ring);
        self.ring_clock = Some(now);
        self.ring_count += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            clock_s: self.clock(),
            running: self.running,
            outcome: self.outcome,
            command: self.command,
            active_policy: self.active_policy,
            uav: UavView::from(&self.uav),
            threats: self
                .scenario
                .launches
                .iter()
                .enumerate()
                .map(|(index, l)| ThreatView {
                    index,
                    launch_time_s: l.launch_time,
                    firing_x_m: l.firing_position.x,
                    firing_y_m: l.firing_position.y,
                    firing_altitude_m: l.firing_position.z,
                    launch_speed_m_s: l.launch_speed,
                    launched: index < self.next_launch,
                })
                .collect(),
            ring: self.ring.as_ref().map(|r| r.to_payload(&self.scenario.thresholds)),
            ring_clock_s: self.ring_clock,
            miss_distances_m: (self.outcome != Outcome::Ongoing).then(|| self.miss_distances()),
        }
    }
}

/// The first ring that accounts for every launch in `scenario`, with the
/// UAV holding its initial heading until then. `None` without launches.
pub fn assess_scenario(
    scenario: &Scenario,
    models: Arc<dyn Surrogate + Send + Sync>,
    cfg: &SimConfig,
) -> Result<Option<RiskRing>, SessionError> {
    if scenario.launches.is_empty() {
        return Ok(None);
    }
    let mut session = Session::new(scenario.clone(), models, cfg.clone());
    session.set_running(true)?;
    let last = scenario.last_launch_time();
    while session.outcome() == Outcome::Ongoing {
        session.step(cfg.dt())?;
        let complete = session.launched() == scenario.launches.len();
        if complete && session.ring_clock().is_some_and(|t| t >= last) {
            break;
        }
    }
    Ok(session.ring().cloned())
}

/// Result of running a scenario to its end.
#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub outcome: Outcome,
    pub clock: f64,
    /// Smallest closest approach over all threats [m]; infinite with none.
    pub miss_distance: f64,
    /// Ring in force at the first launch, if any.
    pub first_ring: Option<RiskRing>,
    pub trace: String,
    pub feature_log: Vec<FeatureLogEntry>,
}

/// Runs `scenario` with `initial` as the operator command, applying each
/// scripted `(clock, command)` once the clock reaches it, until the
/// engagement ends or every missile has outlived its lifetime. Writes one
/// trace line per ring period.
pub fn replay(
    scenario: &Scenario,
    models: Arc<dyn Surrogate + Send + Sync>,
    cfg: &SimConfig,
    initial: OperatorCommand,
    script: &[(f64, OperatorCommand)],
) -> Result<ReplayResult, SessionError> {
    let mut session = Session::new(scenario.clone(), models, cfg.clone());
    session.command(initial)?;
    session.set_running(true)?;
    let horizon = scenario.last_launch_time() + cfg.guidance.lifetime_s + 2.0 * RING_PERIOD_S;
    let mut pending = script.to_vec();
    pending.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pending = pending.into_iter().peekable();

    let mut trace = format!("format_version = {TRACE_FORMAT_VERSION}\n");
    trace.push_str(
        "# clock_s x_m y_m altitude_m heading_deg speed_m_s command active_policy safest md_N md_NE md_E md_SE md_S md_SW md_W md_NW\n",
    );
    let mut first_ring = None;
    while session.outcome() == Outcome::Ongoing && session.clock() < horizon {
        while let Some(&(at, cmd)) = pending.peek() {
            if at > session.clock() {
                break;
            }
            session.command(cmd)?;
            pending.next();
        }
        session.step(RING_PERIOD_S)?;
        if first_ring.is_none() {
            first_ring = session.ring().cloned();
        }
        write_trace_line(&mut trace, &session);
    }
    let miss_distance = session.miss_distances().into_iter().fold(f64::INFINITY, f64::min);
    let _ = writeln!(trace, "outcome = {} {:.3}", session.outcome().as_str(), session.clock());
    for (i, md) in session.miss_distances().iter().enumerate() {
        let _ = writeln!(trace, "miss_distance {i} = {md:.3}");
    }
    Ok(ReplayResult {
        outcome: session.outcome(),
        clock: session.clock(),
        miss_distance,
        first_ring,
        trace,
        feature_log: session.feature_log().to_vec(),
    })
}

fn write_trace_line(out: &mut String, session: &Session) {
    let u = session.uav();
    let command = match session.command {
        OperatorCommand::Heading { heading_deg } => format!("heading:{heading_deg:.1}"),
        OperatorCommand::Policy { policy } => format!("policy:{policy}"),
        OperatorCommand::Safest => "safest".to_string(),
    };
    let _ = write!(
        out,
        "{:.3} {:.3} {:.3} {:.3} {:.3} {:.3} {} {}",
        session.clock(),
        u.position.x,
        u.position.y,
        u.altitude(),
        u.heading.to_degrees(),
        u.speed,
        command,
        session.active_policy.map_or("-", |p| p.name()),
    );
    match session.ring() {
        Some(ring) => {
            let _ = write!(out, " {}", ring.safest_policy);
            for md in ring.estimates() {
                let _ = write!(out, " {md:.1}");
            }
            out.push('\n');
        }
        None => out.push_str(" - - - - - - - - -\n"),
    }
}

//! Multi-threat miss-distance risk assessment for a UAV in beyond-visual-range
//! engagements.
//!
//! The pipeline has three stages:
//!
//! 1. [`episodes`] simulates single-missile engagements under each of the
//!    eight compass evasive policies ([`flightdyn`], [`missile`]) and labels
//!    every recorded state with the engagement's miss distance.
//! 2. [`surrogate`] trains one feed-forward network per policy that maps the
//!    ten-component observation to a predicted miss distance.
//! 3. [`awareness`] evaluates all policies against every observed launch,
//!    keeps the worst case per policy and picks the safest heading.
//!
//! [`scenario`] and [`session`] drive the whole thing over a scripted or live
//! engagement.

pub mod atmosphere;
pub mod awareness;
pub mod constants;
pub mod dataset;
pub mod episodes;
pub mod flightdyn;
pub mod missile;
pub mod scenario;
pub mod session;
pub mod surrogate;
pub mod vec3;

pub use awareness::{assess, monte_carlo_assess, safest_policy, Category, RiskRing, SensorNoiseConfig};
pub use constants::ConstantSet;
pub use dataset::Dataset;
pub use episodes::{FeatureVector, LaunchObservation, ScenarioDraw, SimConfig};
pub use flightdyn::{AircraftParams, AircraftState, ControlCommand, PolicyId};
pub use missile::{GuidanceConfig, MissileState};
pub use scenario::Scenario;
pub use session::{OperatorCommand, Outcome, Session};
pub use surrogate::{MlpModel, ModelSet, TrainConfig};
pub use vec3::Vec3;

//! The batch subcommands as plain functions over the core library.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bvr_core::constants::{ConstantSet, ConstantsError};
use bvr_core::dataset::{Dataset, DatasetError};
use bvr_core::episodes::{collect_dataset, EpisodeError};
use bvr_core::scenario::ScenarioError;
use bvr_core::session::{self, OperatorCommand, ReplayResult, SessionError};
use bvr_core::surrogate::{self, ModelError, TrainReport};
use bvr_core::{AircraftParams, GuidanceConfig, MlpModel, ModelSet, PolicyId, Scenario, SimConfig, TrainConfig};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("constants: {0}")]
    Constants(#[from] ConstantsError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
    #[error("episodes: {0}")]
    Episodes(#[from] EpisodeError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("session: {0}")]
    Session(#[from] SessionError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Dynamics constants, each from a file when given and default otherwise.
pub fn load_sim_config(aircraft: Option<&Path>, missile: Option<&Path>) -> Result<SimConfig, CliError> {
    Ok(SimConfig {
        aircraft: aircraft.map(AircraftParams::load).transpose()?.unwrap_or_default(),
        guidance: missile.map(GuidanceConfig::load).transpose()?.unwrap_or_default(),
    })
}

pub fn load_train_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    match path {
        Some(p) => Ok(TrainConfig::from_toml(&std::fs::read_to_string(p).map_err(io_error(p))?)?),
        None => Ok(TrainConfig::default()),
    }
}

pub fn collect(
    policy: PolicyId,
    episodes: u64,
    seed: u64,
    sample_period: f64,
    cfg: &SimConfig,
    out: &Path,
) -> Result<Dataset, CliError> {
    let dataset = collect_dataset(policy, episodes, seed, sample_period, cfg)?;
    dataset.save(out)?;
    Ok(dataset)
}

pub fn train(
    dataset: &Path,
    cfg: &TrainConfig,
    out: &Path,
    progress: impl FnMut(u32, f64),
) -> Result<(MlpModel, TrainReport), CliError> {
    let data = Dataset::load(dataset)?;
    let (model, report) = surrogate::train_with_progress(&data, cfg, progress)?;
    model.save(out)?;
    Ok((model, report))
}

/// Collects and trains all eight policies into `out_dir`, writing a
/// manifest. Policy `i` collects with seed `seed + i`.
pub fn build_models(
    episodes: u64,
    seed: u64,
    sample_period: f64,
    train_cfg: &TrainConfig,
    cfg: &SimConfig,
    out_dir: &Path,
    mut progress: impl FnMut(PolicyId, &TrainReport),
) -> Result<PathBuf, CliError> {
    let mut models = Vec::with_capacity(PolicyId::COUNT);
    for policy in PolicyId::ALL {
        let data = collect_dataset(policy, episodes, seed.wrapping_add(policy.index() as u64), sample_period, cfg)?;
        let (model, report) = surrogate::train_with_progress(&data, train_cfg, |_, _| {})?;
        progress(policy, &report);
        models.push(model);
    }
    Ok(surrogate::save_manifest(&ModelSet::new(models)?, out_dir)?)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    Ok(Scenario::load(path)?)
}

/// Model set from an explicit manifest, else the one the scenario names.
pub fn load_models(explicit: Option<&Path>, scenario: &Scenario) -> Result<ModelSet, CliError> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| scenario.models.clone())
        .ok_or_else(|| CliError::Usage("no model set: pass --models or set `models` in the scenario".into()))?;
    Ok(surrogate::load_manifest(&path)?)
}

/// Ring text for a scenario once every launch has been observed.
pub fn assess(scenario: &Scenario, models: ModelSet, cfg: &SimConfig) -> Result<String, CliError> {
    let ring = session::assess_scenario(scenario, Arc::new(models), cfg)?
        .ok_or_else(|| CliError::Usage("scenario has no launch events".into()))?;
    Ok(ring.to_text(&scenario.thresholds))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    format_version: u32,
    #[serde(default)]
    command: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
struct ScriptEntry {
    at_s: f64,
    #[serde(flatten)]
    command: OperatorCommand,
}

/// Parses a command script:
///
/// ```toml
/// format_version = 1
/// [[command]]
/// at_s = 10
/// kind = "heading"      # or "policy" with `policy = "NE"`, or "safest"
/// heading_deg = 200
/// ```
pub fn parse_script(text: &str) -> Result<Vec<(f64, OperatorCommand)>, CliError> {
    let file: ScriptFile = toml::from_str(text).map_err(|e| CliError::Usage(format!("command script: {e}")))?;
    if file.format_version != 1 {
        return Err(CliError::Usage(format!("command script: unsupported format_version {}", file.format_version)));
    }
    Ok(file.command.into_iter().map(|e| (e.at_s, e.command)).collect())
}

pub fn replay(
    scenario: &Scenario,
    models: ModelSet,
    cfg: &SimConfig,
    initial: OperatorCommand,
    script: Option<&Path>,
    out: &Path,
) -> Result<ReplayResult, CliError> {
    let script = match script {
        Some(p) => parse_script(&std::fs::read_to_string(p).map_err(io_error(p))?)?,
        None => Vec::new(),
    };
    let result = session::replay(scenario, Arc::new(models), cfg, initial, &script)?;
    std::fs::write(out, &result.trace).map_err(io_error(out))?;
    Ok(result)
}

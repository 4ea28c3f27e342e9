use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use bvr_cli::commands::{self, CliError};
use bvr_cli::service::{self, ServiceConfig};
use bvr_core::session::OperatorCommand;
use bvr_core::surrogate::load_manifest;
use bvr_core::PolicyId;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bvr", version, about = "Miss-distance risk assessment for multi-missile BVR engagements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Constants {
    /// Aircraft constants file (defaults built in).
    #[arg(long, global = true)]
    aircraft: Option<PathBuf>,
    /// Missile constants file (defaults built in).
    #[arg(long, global = true)]
    missile: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate episodes of one policy and write a dataset.
    Collect {
        #[arg(long, value_parser = parse_policy)]
        policy: PolicyId,
        #[arg(long, short = 'n')]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sample_period: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        constants: Constants,
    },
    /// Train one policy's model from a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Training config (TOML); defaults to 400 epochs, rate 0.0003, batch 64.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect and train all eight policies and write a model-set manifest.
    BuildModels {
        #[arg(long, short = 'n')]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        sample_period: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        constants: Constants,
    },
    /// Print the risk ring for a scenario once every launch is observed.
    Assess {
        #[arg(long)]
        scenario: PathBuf,
        /// Model-set manifest; overrides the scenario's.
        #[arg(long)]
        models: Option<PathBuf>,
        #[command(flatten)]
        constants: Constants,
    },
    /// Run a scenario to its end and write a trace.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Follow the safest policy, re-evaluated every second.
        #[arg(long, conflicts_with = "policy")]
        auto: bool,
        /// Fly one fixed policy.
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyId>,
        /// Timed operator commands (TOML).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        constants: Constants,
    },
    /// Serve the live-session API.
    Serve {
        #[arg(long, env = "BVR_BIND", default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        #[arg(long, env = "BVR_PORT", default_value_t = 8080)]
        port: u16,
        /// Model-set manifest used for every session.
        #[arg(long, env = "BVR_MODELS")]
        models: Option<PathBuf>,
        /// Simulated seconds per wall-clock second.
        #[arg(long, env = "BVR_SPEED", default_value_t = 1.0)]
        speed: f64,
        #[command(flatten)]
        constants: Constants,
    },
}

fn parse_policy(s: &str) -> Result<PolicyId, String> {
    PolicyId::from_name(s).ok_or_else(|| format!("unknown policy `{s}` (expected one of N NE E SE S SW W NW)"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Collect { policy, n, seed, sample_period, out, constants } => {
            let cfg = commands::load_sim_config(constants.aircraft.as_deref(), constants.missile.as_deref())?;
            let data = commands::collect(policy, n, seed, sample_period, &cfg, &out)?;
            eprintln!("{} samples from {} episodes -> {}", data.len(), n, out.display());
        }
        Command::Train { dataset, config, out } => {
            let cfg = commands::load_train_config(config.as_deref())?;
            let (_, report) = commands::train(&dataset, &cfg, &out, |epoch, loss| {
                eprintln!("epoch {epoch:>4}  loss {loss:.6}");
            })?;
            eprintln!(
                "train mse {:.6}  validation mse {:.6}  (mean predictor {:.6}) -> {}",
                report.train_mse,
                report.validation_mse,
                report.validation_baseline_mse,
                out.display()
            );
        }
        Command::BuildModels { n, seed, sample_period, config, out_dir, constants } => {
            let cfg = commands::load_sim_config(constants.aircraft.as_deref(), constants.missile.as_deref())?;
            let train_cfg = commands::load_train_config(config.as_deref())?;
            let manifest = commands::build_models(n, seed, sample_period, &train_cfg, &cfg, &out_dir, |p, r| {
                eprintln!("{p:>2}: validation mse {:.4} (mean predictor {:.4})", r.validation_mse, r.validation_baseline_mse);
            })?;
            eprintln!("manifest -> {}", manifest.display());
        }
        Command::Assess { scenario, models, constants } => {
            let cfg = commands::load_sim_config(constants.aircraft.as_deref(), constants.missile.as_deref())?;
            let scenario = commands::load_scenario(&scenario)?;
            let models = commands::load_models(models.as_deref(), &scenario)?;
            print!("{}", commands::assess(&scenario, models, &cfg)?);
        }
        Command::Replay { scenario, models, auto, policy, script, out, constants } => {
            let cfg = commands::load_sim_config(constants.aircraft.as_deref(), constants.missile.as_deref())?;
            let scenario = commands::load_scenario(&scenario)?;
            let models = commands::load_models(models.as_deref(), &scenario)?;
            let initial = match (auto, policy) {
                (_, Some(policy)) => OperatorCommand::Policy { policy },
                (true, None) => OperatorCommand::Safest,
                (false, None) => OperatorCommand::Heading { heading_deg: scenario.uav.heading.to_degrees() },
            };
            let result = commands::replay(&scenario, models, &cfg, initial, script.as_deref(), &out)?;
            println!(
                "outcome={} clock={:.2} miss_distance={:.1}",
                result.outcome.as_str(),
                result.clock,
                result.miss_distance
            );
        }
        Command::Serve { bind, port, models, speed, constants } => {
            let sim = commands::load_sim_config(constants.aircraft.as_deref(), constants.missile.as_deref())?;
            let models = models.as_deref().map(load_manifest).transpose()?.map(Arc::new);
            let state = service::new_state(ServiceConfig { sim, speed, models });
            let addr = SocketAddr::new(bind, port);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Usage(e.to_string()))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .map_err(|source| CliError::Io { path: addr.to_string().into(), source })?;
                eprintln!("listening on http://{addr}/v1");
                axum::serve(listener, service::router(state))
                    .await
                    .map_err(|source| CliError::Io { path: addr.to_string().into(), source })
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{CommandFactory, Parser, Subcommand};
use meterless::pipeline::{ExperimentConfig, Pipeline};

/// Output directory override; takes precedence over the config file but
/// not over `--out`.
const OUT_ENV: &str = "METERLESS_OUT";

#[derive(Parser, Debug)]
#[command(name = "meterless", version, about = "Hourly load reconstruction from monthly bills")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment config, or `default` for the built-in experiment.
    #[arg(long, global = true, default_value = "default")]
    config: String,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config and METERLESS_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate metered customers, feeder customers, bills and head measurements.
    GenData,
    /// Cluster metered customers into typical daily patterns.
    Cluster,
    /// Train a disaggregation cascade per pattern.
    TrainMtsl,
    /// Identify the pattern of each feeder customer.
    Identify,
    /// Turn bills into hourly pseudo-loads and measurement sets.
    Disaggregate,
    /// Run state estimation for every hour.
    Estimate,
    /// Score the run and write the metrics report.
    Evaluate,
    /// Run every stage in order.
    RunAll,
}

impl Command {
    fn stage(self) -> Option<&'static str> {
        Some(match self {
            Command::GenData => "gen-data",
            Command::Cluster => "cluster",
            Command::TrainMtsl => "train-mtsl",
            Command::Identify => "identify",
            Command::Disaggregate => "disaggregate",
            Command::Estimate => "estimate",
            Command::Evaluate => "evaluate",
            Command::RunAll => return None,
        })
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config =
        ExperimentConfig::load(&cli.config).with_context(|| format!("cannot load config '{}'", cli.config))?;
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = cli.out.clone() {
        config.output_dir = out;
    } else if let Some(out) = std::env::var_os(OUT_ENV) {
        config.output_dir = out.into();
    }
    Ok(config)
}

fn run(cli: &Cli, config: ExperimentConfig) -> anyhow::Result<()> {
    let pipeline = Pipeline::new(config)?;
    match cli.command.stage() {
        Some(stage) => pipeline.run(stage)?,
        None => {
            let report = pipeline.run_all()?;
            println!("{}", summary(&report));
        }
    }
    Ok(())
}

fn summary(report: &meterless::metrics::MetricsReport) -> String {
    let mut lines = Vec::new();
    for m in report.load_estimation.iter().chain(&report.baselines) {
        lines.push(format!("{:<36} MAPE {:7.2} %  R {:.4}", m.scope, m.mape, m.r));
    }
    if let Some(id) = report.identification {
        lines.push(format!("identification accuracy {:.1} %", 100.0 * id.accuracy));
    }
    if let Some(v) = report.state_estimation {
        lines.push(format!(
            "voltage error: magnitude {:.3} %, phase {:.3} %",
            v.magnitude_pct, v.phase_pct
        ));
    }
    lines.join("\n")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    if !e.to_string().contains("Usage:") {
                        eprintln!("\n{}", Cli::command().render_usage());
                    }
                    ExitCode::from(1)
                }
            };
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

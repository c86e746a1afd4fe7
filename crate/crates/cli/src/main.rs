mod commands;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gaitlr_core::pipeline::{PipelineConfig, WithinSource};

/// Likelihood ratios for feature-of-gait comparisons.
#[derive(Parser)]
#[command(name = "gaitlr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// pipeline configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// number of principal components M
    #[arg(long)]
    pcs: Option<usize>,
    /// `dataset-a`, `dataset-b`, `estimate`, or a JSON file of variances
    #[arg(long)]
    variance_preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the models and evaluate them on the repeated dataset
    Run(Common),
    /// Fit the projection, between- and within-individual models
    Fit(Common),
    /// Evaluate one questioned profile against one reference profile
    Compare {
        #[command(flatten)]
        common: Common,
        /// questioned profile CSV (one or more occasions)
        #[arg(long)]
        query: PathBuf,
        /// reference profile CSV (one or more occasions)
        #[arg(long)]
        reference: PathBuf,
    },
    /// Validate a fitted model on the repeated dataset(s)
    Validate(Common),
    /// Empirical cross-entropy curves from a comparisons file
    Ece(Common),
    /// Tippett curves from a comparisons file
    Tippett(Common),
    /// Polychoric correlation matrix of the population features
    Polychoric(Common),
    /// Demographic association models per feature
    Assoc(Common),
    /// Generate synthetic population and repeated datasets
    Simulate(Common),
}

/// How a command failed; decides the exit code.
pub enum Failure {
    Config(anyhow::Error),
    Stage(&'static str, anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Stage(..) => 1,
        }
    }
}

pub trait StageExt<T> {
    fn stage(self, name: &'static str) -> Result<T, Failure>;
}

impl<T> StageExt<T> for gaitlr_core::Result<T> {
    fn stage(self, name: &'static str) -> Result<T, Failure> {
        self.map_err(|e| match e {
            gaitlr_core::Error::ConfigInvalid(_) => Failure::Config(e.into()),
            other => Failure::Stage(name, other.into()),
        })
    }
}

impl<T> StageExt<T> for anyhow::Result<T> {
    fn stage(self, name: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::Stage(name, e))
    }
}

/// Parsed configuration with command-line overrides applied.
pub struct Context {
    pub cfg: PipelineConfig,
    pub config_sha256: String,
    pub overrides: serde_json::Value,
}

fn load_config(common: &Common) -> Result<Context, Failure> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Failure::Config(anyhow::anyhow!("cannot read {}: {e}", common.config.display())))?;
    let base = common.config.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let mut cfg = PipelineConfig::from_json(&text, &base).map_err(|e| Failure::Config(e.into()))?;
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(m) = common.pcs {
        cfg.pca.pcs = m;
    }
    if let Some(v) = &common.variance_preset {
        cfg.within_variance = WithinSource::from_arg(v);
    }
    cfg.validate().map_err(|e| Failure::Config(e.into()))?;
    Ok(Context {
        cfg,
        config_sha256: output::sha256_hex(text.as_bytes()),
        overrides: serde_json::json!({
            "seed": common.seed,
            "pcs": common.pcs,
            "variance_preset": common.variance_preset,
        }),
    })
}

fn configure_threads() {
    let Ok(value) = std::env::var("GAITLR_THREADS") else { return };
    match value.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("GAITLR_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("GAITLR_THREADS must be a positive integer, got '{value}'"),
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(c) => commands::run(&load_config(&c)?),
        Command::Fit(c) => commands::fit(&load_config(&c)?),
        Command::Compare { common, query, reference } => commands::compare(&load_config(&common)?, &query, &reference),
        Command::Validate(c) => commands::validate(&load_config(&c)?),
        Command::Ece(c) => commands::ece(&load_config(&c)?, c.pcs),
        Command::Tippett(c) => commands::tippett(&load_config(&c)?, c.pcs),
        Command::Polychoric(c) => commands::polychoric(&load_config(&c)?),
        Command::Assoc(c) => commands::assoc(&load_config(&c)?),
        Command::Simulate(c) => commands::simulate(&load_config(&c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Config(e) => eprintln!("gaitlr: configuration error: {e:#}"),
                Failure::Stage(stage, e) => eprintln!("gaitlr: error in stage {stage}: {e:#}"),
            }
            ExitCode::from(failure.exit_code())
        }
    }
}

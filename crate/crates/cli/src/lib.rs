//! Ingestion, configuration and orchestration for the `stpp` command.

pub mod config;
pub mod ingest;
pub mod manifest;
pub mod pipeline;
pub mod projection;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ConfigOverrides, RunConfig};
pub use manifest::Manifest;
pub use pipeline::{execute, rerun, Step};

#[derive(Debug, Parser)]
#[command(name = "stpp", version, about = "Separable spatio-temporal Poisson intensity models for fire detections")]
pub struct Cli {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: ConfigOverrides,

    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    #[command(flatten)]
    Step(Step),
    /// Re-runs a recorded step and checks that its outputs are identical.
    Rerun {
        manifest: PathBuf,
    },
}

impl Cli {
    /// Configuration file (if any) with flag overrides applied.
    pub fn resolve_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        self.overrides.apply(&mut cfg);
        Ok(cfg)
    }
}

use std::process::ExitCode;

use clap::Parser;
use stpp_cli::{execute, rerun, Action, Cli, Manifest};

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.action {
        Action::Step(step) => {
            let cfg = cli.resolve_config()?;
            let manifest = execute(*step, &cfg)?;
            for name in manifest.outputs.keys() {
                println!("{}", cfg.output.join(name).display());
            }
        }
        Action::Rerun { manifest } => {
            let recorded = Manifest::read(manifest)?;
            let output = cli.overrides.output.as_deref();
            let (fresh, diff) = rerun(&recorded, output)?;
            if !diff.is_empty() {
                anyhow::bail!("re-run outputs differ from the manifest: {}", diff.join(", "));
            }
            println!("{} outputs reproduced in {}", fresh.outputs.len(), fresh.config.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let causes: Vec<String> = err.chain().skip(1).map(ToString::to_string).collect();
            let msg = serde_json::json!({ "error": err.to_string(), "causes": causes });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}

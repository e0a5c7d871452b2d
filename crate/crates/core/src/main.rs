use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use dynperc::config::ExperimentConfig;
use dynperc::runner;

#[derive(Parser)]
#[command(name = "dynperc", version, about = "Random walk on dynamical percolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run(Common),
    /// Run every point of the config's sweep grid.
    Sweep(Common),
    /// Re-derive replica-0 seeds and spot values of a finished run.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding `output_path`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(c) => {
            let (cfg, out) = c.load()?;
            let m = runner::run_to_dir(&cfg, &out)
                .with_context(|| format!("running {} experiment", cfg.experiment.id()))?;
            println!("wrote {} files to {} in {:.2}s", m.files.len() + 1, out.display(), m.wall_time_seconds);
        }
        Command::Sweep(c) => {
            let (cfg, out) = c.load()?;
            let m = runner::sweep_to_dir(&cfg, &out)
                .with_context(|| format!("sweeping {} experiment", cfg.experiment.id()))?;
            println!(
                "{} grid points, wrote {} files to {} in {:.2}s",
                m.spot_checks.len(),
                m.files.len() + 1,
                out.display(),
                m.wall_time_seconds
            );
        }
        Command::Verify(c) => {
            let (cfg, out) = c.load()?;
            let report = runner::verify_dir(&cfg, &out).with_context(|| format!("verifying {}", out.display()))?;
            println!("verified {} spot checks in {}", report.checked, out.display());
        }
    }
    Ok(())
}

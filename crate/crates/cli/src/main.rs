use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use trendfield::pipeline::{run_bands, run_fit, run_prepare, run_report, run_simulate, Config, RunRecord};
use trendfield::{Error, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "trendfield", version, about = "Space-time trend fields with simultaneous credible bands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Daily data to standardized seasonal anomalies.
    Prepare(RunArgs),
    /// Fit the model to anomalies.
    Fit(RunArgs),
    /// Credible bands and avoidance sets from a fit.
    Bands(RunArgs),
    /// Synthetic anomalies from the configured parameters.
    Simulate(RunArgs),
    /// Summarize the outputs in a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated error levels, overriding the configured ones.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
}

impl RunArgs {
    fn config(&self) -> Result<Config, Error> {
        let mut cfg = Config::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(alpha) = &self.alpha {
            cfg.bands.alpha = alpha.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn error_path(e: &Error) -> Option<&Path> {
    match e {
        Error::InputMissing(p) => Some(p),
        Error::InputMalformed { path, .. } | Error::Io { path, .. } => Some(path),
        _ => None,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let report = |rec: RunRecord| {
        for w in &rec.warnings {
            eprintln!("warning: {w}");
        }
        for name in rec.outputs.keys() {
            println!("{name}");
        }
    };
    match cli.command {
        Command::Prepare(a) => report(run_prepare(&a.config()?, &a.out)?),
        Command::Fit(a) => report(run_fit(&a.config()?, &a.out)?),
        Command::Bands(a) => report(run_bands(&a.config()?, &a.out)?),
        Command::Simulate(a) => report(run_simulate(&a.config()?, &a.out)?),
        Command::Report { out } => print!("{}", run_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind: ErrorKind = e.kind();
            let record = json!({
                "error": kind.as_str(),
                "message": e.to_string(),
                "path": error_path(&e).map(|p| p.display().to_string()),
            });
            eprintln!("{record}");
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}

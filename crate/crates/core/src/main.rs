use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use cardsim::cli::{write_summary, Experiment, ExperimentConfig, PolicyKind, SweepOutcome};
use cardsim::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cardsim",
    version,
    about = "Variance-aware RRAM crossbar simulator and wordline scheduler"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep cells and trials.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Profile readout PMFs on the calibration inputs.
    Profile,
    /// Build trade-off tables and LUTs at `device.sigma` for every threshold.
    Optimize,
    /// Simulate at `device.sigma`.
    Simulate {
        /// Only this policy.
        #[arg(long)]
        policy: Option<String>,
        /// Only this counting-cards threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Simulate the full `sweep.sigmas` x policies x thresholds grid.
    Sweep,
    /// Collect `report_*.json` files into `summary.csv`.
    Summarize,
}

fn load(cli: &Cli) -> Result<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut c = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    if let Some(w) = cli.workers {
        c.workers = Some(w);
    }
    c.validate()?;
    let out = cli.out.clone().unwrap_or_else(|| c.output_dir.clone());
    Ok((c, out))
}

fn report(outcome: &SweepOutcome) {
    for f in &outcome.failures {
        eprintln!(
            "{}",
            json!({ "warning": f.kind, "cell": f.cell, "layer": f.layer, "message": f.message })
        );
    }
    let written: Vec<String> = outcome
        .written
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    println!(
        "{}",
        json!({ "written": written, "failures": outcome.failures.len() })
    );
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Summarize => {
            let dir = match (&cli.out, &cli.config) {
                (Some(d), _) => d.clone(),
                (None, Some(_)) => load(cli)?.1,
                (None, None) => PathBuf::from("out"),
            };
            let path = write_summary(Path::new(&dir))?;
            println!("{}", json!({ "written": [path.display().to_string()] }));
        }
        Command::Profile => {
            let (c, out) = load(cli)?;
            let path = Experiment::new(c)?.write_profile(&out)?;
            println!("{}", json!({ "written": [path.display().to_string()] }));
        }
        Command::Optimize => {
            let (c, out) = load(cli)?;
            report(&Experiment::new(c)?.write_luts(&out)?);
        }
        Command::Simulate { policy, threshold } => {
            let (mut c, out) = load(cli)?;
            if let Some(p) = policy {
                c.sweep.policies = vec![PolicyKind::parse(p)?];
            }
            if let Some(t) = threshold {
                c.sweep.thresholds = vec![*t];
            }
            c.validate()?;
            let sigma = c.device.sigma;
            report(&Experiment::new(c)?.run_grid(&[sigma], &out)?);
        }
        Command::Sweep => {
            let (c, out) = load(cli)?;
            let sigmas = c.sweep.sigmas.clone();
            report(&Experiment::new(c)?.run_grid(&sigmas, &out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                json!({ "error": "usage", "message": e.to_string().trim_end() })
            );
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

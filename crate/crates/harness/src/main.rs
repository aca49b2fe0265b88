use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use upsense_harness::run::{write_results, write_summary};
use upsense_harness::{preset, run_experiment, run_trial, write_outputs, ExperimentSpec, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "upsense", version, about = "Monte Carlo experiments for uplink passive sensing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files.
    Run {
        #[command(flatten)]
        source: Source,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    List,
    /// Re-run a single trial and print its records as CSV.
    Replay {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        trial: usize,
    },
}

#[derive(Args)]
struct Source {
    /// Built-in experiment name.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> Result<ExperimentSpec, Box<dyn std::error::Error>> {
        let mut spec = match (&self.preset, &self.config) {
            (Some(name), _) => preset(name)?,
            (None, Some(path)) => ExperimentSpec::from_config(&std::fs::read_to_string(path)?)?,
            (None, None) => unreachable!("clap requires one source"),
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        Ok(spec)
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::List => {
            for name in PRESET_NAMES {
                let spec = preset(name)?;
                println!("{name:<6} {:<12} {} trials, {} points", spec.kind.as_str(), spec.n_trials, spec.n_points());
            }
        }
        Command::Run { source, trials, out } => {
            let mut spec = source.load()?;
            if let Some(n) = trials {
                spec.n_trials = n;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(&spec.output_dir));
            let started = Instant::now();
            let output = run_experiment(&spec)?;
            write_outputs(&spec, &output, &dir)?;
            write_summary(&spec, &output.summary, std::io::stdout().lock())?;
            eprintln!(
                "{}: {} records in {:.1} s, written to {}",
                spec.name,
                output.records.len(),
                started.elapsed().as_secs_f64(),
                dir.display()
            );
        }
        Command::Replay { source, trial } => {
            let spec = source.load()?;
            spec.validate()?;
            let records = run_trial(&spec, trial)?;
            write_results(&spec, &records, std::io::stdout().lock())?;
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

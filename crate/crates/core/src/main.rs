use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dgsem::harness::{self, Experiment, RunConfig};
use dgsem::Error;

#[derive(Parser)]
#[command(name = "dgsem", version, about = "High-order DGSEM experiments for the compressible Euler equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON configuration or a preset.
    Run {
        /// JSON configuration; keys left out take the experiment preset.
        #[arg(long, conflicts_with = "experiment")]
        config: Option<PathBuf>,
        /// Run a preset without a configuration file.
        #[arg(long)]
        experiment: Option<String>,
        /// Output directory (overrides the configuration).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Use the full-size meshes of the reference runs.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a configuration, then print it fully resolved.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available experiments.
    ListExperiments,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

fn parse_experiment(name: &str) -> Result<Experiment, Error> {
    Experiment::ALL
        .into_iter()
        .find(|e| e.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown experiment `{name}`; see list-experiments")))
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::ListExperiments => {
            for e in Experiment::ALL {
                println!("{:<14} {}", e.name(), e.description());
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = RunConfig::load(&config)?;
            println!("{}", cfg.to_json());
        }
        Command::Run {
            config,
            experiment,
            output,
            paper_scale,
            seed,
        } => {
            let mut cfg = match (config, experiment) {
                (Some(path), _) => RunConfig::load(&path)?,
                (None, Some(name)) => RunConfig::preset(parse_experiment(&name)?),
                (None, None) => return Err(Error::Config("run needs --config or --experiment".into())),
            };
            if paper_scale {
                cfg.apply_paper_scale();
            }
            if let Some(dir) = output {
                cfg.output = Some(dir);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let start = Instant::now();
            let report = harness::run(&cfg)?;
            print!("{report}");
            println!("wall time: {:.2} s", start.elapsed().as_secs_f64());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

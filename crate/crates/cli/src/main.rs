use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use nic_cli::config::{load_config_file, Experiment, ExperimentConfig, Overrides};
use nic_cli::manifest::{verify, MANIFEST_FILE};
use nic_cli::{experiment_dir, run, RunOptions};
use nic_core::estimation::IntervalMethod;

#[derive(Parser)]
#[command(
    name = "nic",
    version,
    about = "Run and verify the information-causality experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its outputs and manifest.
    Run(RunArgs),
    /// Recompute checksums and verdicts for a manifest.
    Verify {
        /// Path to a manifest.json, or the experiment directory holding it.
        manifest: PathBuf,
    },
    /// List experiments and what they reproduce.
    List,
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    experiment: Experiment,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    /// Output root.
    #[arg(long, env = "NIC_OUT", default_value = "results")]
    out: PathBuf,
    /// Primary parameter grid, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    grid: Option<Vec<f64>>,
    /// Depths, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    depths: Option<Vec<u32>>,
    /// Scan depths 1..=n-max.
    #[arg(long)]
    n_max: Option<u32>,
    /// wilson, cp or hoeffding.
    #[arg(long)]
    interval: Option<IntervalMethod>,
    #[arg(long)]
    level: Option<f64>,
    /// Training steps per strict model.
    #[arg(long)]
    steps: Option<usize>,
    /// Training seeds per bottleneck size.
    #[arg(long)]
    seeds: Option<u64>,
    /// Episodes exported as JSON lines per Monte Carlo point.
    #[arg(long)]
    trace: Option<u64>,
    /// Worker threads (default: one per processor).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// TOML file with top-level defaults and per-experiment sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            episodes: self.episodes,
            grid: self.grid.clone(),
            depths: self.depths.clone(),
            n_max: self.n_max,
            interval: self.interval,
            level: self.level,
            steps: self.steps,
            seeds: self.seeds,
            trace: self.trace,
        }
    }
}

fn run_command(args: RunArgs) -> Result<bool> {
    let file = match &args.config {
        Some(path) => load_config_file(path, args.experiment)?,
        None => Overrides::default(),
    };
    let config = ExperimentConfig::resolve(args.experiment, file.merge(args.overrides()))?;
    let options = RunOptions {
        out: args.out.clone(),
        workers: args.workers,
    };
    let manifest = run(&config, &options)?;
    for v in &manifest.verdicts {
        println!(
            "{} {} ({}): observed {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.file,
            v.observed
        );
    }
    let dir = experiment_dir(&options.out, &config);
    println!(
        "{}: {} outputs, {}/{} verdicts passed, manifest {}",
        manifest.experiment,
        manifest.outputs.len(),
        manifest.verdicts.iter().filter(|v| v.pass).count(),
        manifest.verdicts.len(),
        dir.join(MANIFEST_FILE).display()
    );
    Ok(manifest.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Verify { manifest } => {
            let path = if manifest.is_dir() {
                manifest.join(MANIFEST_FILE)
            } else {
                manifest
            };
            verify(&path).map(|report| {
                for line in &report.lines {
                    println!("{line}");
                }
                println!("{} failure(s)", report.failures);
                report.pass()
            })
        }
        Command::List => {
            for e in Experiment::ALL {
                let seed = if e.requires_seed() {
                    " [needs --seed]"
                } else {
                    ""
                };
                println!("{:<16} {}{seed}", e.name(), e.exhibit());
            }
            Ok(true)
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

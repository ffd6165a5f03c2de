use std::path::PathBuf;
use std::process::ExitCode;

use adimpact::pipeline::{self, RunConfig};
use adimpact::Result;
use clap::{Args, Parser, Subcommand};
use log::info;

/// Attributable events from high-exposure days by propensity-score matching.
#[derive(Debug, Parser)]
#[command(name = "adimpact", version)]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Input CSV.
    #[arg(short, long)]
    input: Option<PathBuf>,

    /// Directory for artifacts and reports.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,

    /// Exposure threshold defining treated days.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate the input, then summarise it.
    IngestCheck(Overrides),
    /// Assign treatment and fit the propensity model (outcomes are not read).
    Design(Overrides),
    /// Match treated days to control days from the design artifact.
    Match(Overrides),
    /// Covariate balance before and after matching.
    Balance(Overrides),
    /// Attributable-event tables from the match map.
    Impact(Overrides),
    /// Every stage in order.
    All(Overrides),
    /// Write a synthetic series with known potential outcomes.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        /// Number of days.
        #[arg(long)]
        days: Option<usize>,
        /// Expected extra events per treated day.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    match &cli.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn apply(mut cfg: RunConfig, o: &Overrides) -> RunConfig {
    if let Some(i) = &o.input {
        cfg.input = Some(i.clone());
    }
    if let Some(d) = &o.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(t) = o.threshold {
        cfg.threshold = t;
    }
    cfg
}

fn run(cli: &Cli) -> Result<()> {
    let base = config(cli)?;
    match &cli.command {
        Command::IngestCheck(o) => {
            let path = pipeline::run_ingest_check(&apply(base, o))?;
            print!("{}", std::fs::read_to_string(path)?);
        }
        Command::Design(o) => {
            let d = pipeline::run_design(&apply(base, o))?;
            println!(
                "{} treated, {} control days; propensity model {}",
                d.treatment.n_treated(),
                d.treatment.n_controls(),
                if d.fit.converged {
                    "converged"
                } else {
                    "did not converge"
                }
            );
        }
        Command::Match(o) => {
            let m = pipeline::run_match(&apply(base, o))?;
            println!(
                "{} pairs, {} distinct controls, {} beyond caliper",
                m.map.pairs().len(),
                m.map.matched_controls().len(),
                m.overlap.n_flagged()
            );
        }
        Command::Balance(o) => {
            let cfg = apply(base, o);
            pipeline::run_balance(&cfg)?;
            print!(
                "{}",
                std::fs::read_to_string(cfg.output_dir.join(pipeline::file_names::BALANCE_TXT))?
            );
        }
        Command::Impact(o) | Command::All(o) => {
            let cfg = apply(base, o);
            if matches!(cli.command, Command::All(_)) {
                pipeline::run_all(&cfg)?;
            } else {
                pipeline::run_impact(&cfg)?;
            }
            print!(
                "{}",
                std::fs::read_to_string(cfg.output_dir.join(pipeline::file_names::IMPACT_TXT))?
            );
        }
        Command::Synth {
            seed,
            days,
            tau,
            output_dir,
        } => {
            let mut spec = base.synth.clone();
            if let Some(n) = days {
                spec.n_days = *n;
            }
            if let Some(t) = tau {
                spec.tau = *t;
            }
            let dir = output_dir.clone().unwrap_or(base.output_dir.clone());
            let path = pipeline::run_synth(&spec, seed.unwrap_or(base.seed), &dir)?;
            info!("wrote {}", path.display());
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

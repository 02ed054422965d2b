use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Parser;
use msra::harness::{export, paper_config, render_table, run_experiment, ExperimentConfig};

/// Runs autoscaling experiments on the simulated cluster and writes reports.
#[derive(Debug, Parser)]
#[command(name = "msra", version)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long, value_name = "PATH", conflicts_with = "paper")]
    config: Option<PathBuf>,

    /// Use the built-in six-profile preset.
    #[arg(long)]
    paper: bool,

    /// Comma-separated profile names to run, in order.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    profiles: Option<Vec<String>>,

    /// Override the repetition count.
    #[arg(long, value_name = "N")]
    reps: Option<u32>,

    /// Override the base seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,

    /// Also write raw telemetry samples for every run.
    #[arg(long)]
    export_timeseries: bool,

    /// Print the configuration JSON schema and exit.
    #[arg(long)]
    print_schema: bool,

    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn load(args: &Args) -> Result<ExperimentConfig> {
    let mut cfg = match (&args.config, args.paper) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, true) => paper_config(),
        (None, false) => bail!("pass --config PATH or --paper"),
    };
    if let Some(names) = &args.profiles {
        cfg.select_profiles(names)?;
    }
    if let Some(reps) = args.reps {
        cfg.repetitions = reps;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    for w in cfg.validate()? {
        eprintln!("warning: service `{}`: {}", w.service, w.message);
    }
    Ok(cfg)
}

fn run(args: Args) -> Result<()> {
    if args.print_schema {
        println!("{}", ExperimentConfig::json_schema());
        return Ok(());
    }
    let cfg = load(&args)?;
    if args.print_config {
        println!("{}", cfg.to_json()?);
        return Ok(());
    }
    let started = Instant::now();
    let reports = run_experiment(&cfg, args.export_timeseries)?;
    let summary = export(&reports, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", render_table(&summary));
    eprintln!("{} runs in {:.1}s, results in {}", reports.len(), started.elapsed().as_secs_f64(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

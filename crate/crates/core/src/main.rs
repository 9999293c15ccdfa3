use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fairsandbox::cli_io::{parse_config, read_csv, render_figure, write_artifacts};
use fairsandbox::harness::{aggregate, preset, run_experiment, ExperimentConfig, Metric, PRESET_NAMES};

#[derive(Parser)]
#[command(name = "fairsandbox", version, about = "Bias-injection experiments for fairness interventions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per sweep point.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: Option<u64>,
    /// Worker threads; 1 runs serially. Output does not depend on this.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one of the built-in experiment presets.
    Replicate {
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Draw one metric from a results CSV.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        /// accuracy, eo_disparity or fidelity_agreement
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bias level")]
        x_label: String,
    },
    /// List preset names.
    Presets,
}

fn execute(mut cfg: ExperimentConfig, o: &Overrides, out: &Path) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = o.reps {
        cfg.repetitions = r as usize;
    }
    cfg.validate()?;
    let result = run_experiment(&cfg, o.workers.map(|k| k as usize))?;
    let excluded: usize = result.aggregates.iter().map(|a| a.excluded).sum();
    if excluded > 0 {
        eprintln!("{excluded} metric values excluded (intervention not applicable); see the excluded column of aggregates.csv");
    }
    for p in write_artifacts(&cfg, &result, out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, overrides } => std::fs::read_to_string(&config)
            .with_context(|| format!("reading {}", config.display()))
            .and_then(|text| Ok(parse_config(&text)?))
            .and_then(|cfg| execute(cfg, &overrides, &out)),
        Command::Replicate { preset: name, out, overrides } => {
            preset(&name).map_err(Into::into).and_then(|cfg| execute(cfg, &overrides, &out))
        }
        Command::Plot { input, metric, out, x_label } => read_csv(&input).and_then(|records| {
            let svg = render_figure(&aggregate(&records), metric, &x_label)?;
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))
        }),
        Command::Presets => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

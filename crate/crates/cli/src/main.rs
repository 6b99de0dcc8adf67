//! Command line front end for the wreath-walk experiments.
//!
//! Exit status: 0 when every acceptance check passes, 2 when a check fails,
//! 1 on any error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use wreathwalk::experiment::{
    run_config, run_design, run_experiment, run_fit, run_product_experiment, ExperimentConfig, FitSection,
    Report, Stages, PRESETS,
};
use wreathwalk::fit::FitModel;

#[derive(Parser)]
#[command(name = "wreathwalk", version, about = "Switch-walk-switch random walk experiments")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the first-return tail of the orbit walk.
    Tail,
    /// Simulate trajectories and fit the speed and entropy proxies.
    Walk,
    /// Design a degree sequence for a target return tail.
    Design,
    /// Return tail, trajectories and the bound curves.
    Bounds,
    /// Fit a power law to one column of a CSV file.
    Fit {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        column: Option<String>,
        #[arg(long, value_parser = parse_model)]
        model: Option<FitModel>,
    },
    /// Product of two independent walks.
    Product,
    /// Run a named preset end to end.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
    },
}

fn parse_model(s: &str) -> std::result::Result<FitModel, String> {
    match s {
        "power" => Ok(FitModel::Power),
        "log_corrected" => Ok(FitModel::LogCorrected),
        _ => Err(format!("unknown model {s:?} (power or log_corrected)")),
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.command, &cli.config) {
        (Command::Preset { .. }, Some(_)) => bail!("--config cannot be combined with a preset"),
        (Command::Preset { name }, None) => ExperimentConfig::preset(name)?,
        (_, Some(path)) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        (_, None) => ExperimentConfig::default(),
    };
    match &cli.command {
        Command::Design if cfg.design.is_none() => {
            cfg.design = ExperimentConfig::preset("design_g06")?.design;
        }
        Command::Product if cfg.product.is_none() => {
            cfg.product = ExperimentConfig::preset("product_clause1_clause2")?.product;
        }
        Command::Fit { input, column, model } => {
            let mut f = cfg.fit.take().unwrap_or_else(FitSection::default);
            f.input = input.clone().or(f.input);
            f.column = column.clone().or(f.column);
            f.model = model.or(f.model);
            cfg.fit = Some(f);
        }
        _ => {}
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Report> {
    let cfg = load(cli)?;
    let report = match &cli.command {
        Command::Tail => run_experiment(&cfg, Stages::TAIL)?,
        Command::Walk => run_experiment(&cfg, Stages::WALK)?,
        Command::Bounds => run_experiment(&cfg, Stages::ALL)?,
        Command::Design => run_design(&cfg)?,
        Command::Fit { .. } => run_fit(&cfg)?,
        Command::Product => run_product_experiment(&cfg)?,
        Command::Preset { .. } => run_config(&cfg)?,
    };
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(report) => {
            for c in &report.checks {
                println!(
                    "{} {}: {:.4} in [{}, {}]",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.band[0],
                    c.band[1]
                );
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

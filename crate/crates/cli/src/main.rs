//! `climpact` command-line pipeline.
//!
//! Exit codes: 0 on success, 1 when the inputs are valid but the analysis is
//! infeasible, 2 for bad invocations and unreadable or invalid files.

mod config;
mod error;
mod output;
mod pipeline;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use climpact::ingest::EventKind;

use config::{RunConfig, Settings};
use error::CliError;
use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "climpact", version, about = "Extreme climate events and orchard yield impact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate inputs and link farms to stations.
    Ingest(Settings),
    /// Score every station-variable series and flag anomalous days.
    Detect(Settings),
    /// Standardised Precipitation Index per station, plus the drought panel.
    Spi(Settings),
    /// Yield reductions in event years, window sensitivity and counterexamples.
    Impact(Settings),
    /// Compare flagged days with the event catalog.
    Align(Settings),
    /// Write the seeded demo corpus.
    Synth(Settings),
    /// Full chain. Without inputs, runs on a freshly generated demo corpus.
    Run(Settings),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Detect(_) => "detect",
            Command::Spi(_) => "spi",
            Command::Impact(_) => "impact",
            Command::Align(_) => "align",
            Command::Synth(_) => "synth",
            Command::Run(_) => "run",
        }
    }

    fn settings(&self) -> &Settings {
        match self {
            Command::Ingest(s)
            | Command::Detect(s)
            | Command::Spi(s)
            | Command::Impact(s)
            | Command::Align(s)
            | Command::Synth(s)
            | Command::Run(s) => s,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(out) => {
            println!("{}: outputs in {}", cli.command.name(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("climpact {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: &Command) -> Result<std::path::PathBuf, CliError> {
    let name = command.name();
    let config = RunConfig::resolve(command.settings())?;
    let mut out = Outputs::new(&config.out)?;
    let need = |path, flag| RunConfig::require(path, flag, name);

    match command {
        Command::Ingest(_) => {
            let data = pipeline::load_climate(need(&config.climate, "climate")?, &mut out)?;
            let yields = match &config.yields {
                Some(p) => Some(pipeline::load_yields(p, &mut out)?),
                None => None,
            };
            let events = match &config.events {
                Some(p) => Some(pipeline::load_events(p, &mut out)?),
                None => None,
            };
            pipeline::ingest_summary(&data, yields.as_deref(), events.as_deref(), &mut out)?;
        }
        Command::Detect(_) => {
            let data = pipeline::load_climate(need(&config.climate, "climate")?, &mut out)?;
            let events = match &config.events {
                Some(p) => Some(pipeline::load_events(p, &mut out)?),
                None => None,
            };
            let cleaned = pipeline::clean(&data, config.max_gap_days, &mut out)?;
            pipeline::detect(&config, &cleaned, events.as_deref(), &mut out)?;
        }
        Command::Spi(_) => {
            let data = pipeline::load_climate(need(&config.climate, "climate")?, &mut out)?;
            let events = match &config.events {
                Some(p) => Some(pipeline::load_events(p, &mut out)?),
                None => None,
            };
            let cleaned = pipeline::clean(&data, config.max_gap_days, &mut out)?;
            pipeline::spi(&config, &cleaned, events.as_deref(), &mut out)?;
        }
        Command::Impact(_) => {
            let data = pipeline::load_climate(need(&config.climate, "climate")?, &mut out)?;
            let yields = pipeline::load_yields(need(&config.yields, "yields")?, &mut out)?;
            let events = pipeline::load_events(need(&config.events, "events")?, &mut out)?;
            pipeline::impact(&config, &data, &yields, &events, &mut out)?;
        }
        Command::Align(_) => {
            let data = pipeline::load_climate(need(&config.climate, "climate")?, &mut out)?;
            let events = pipeline::load_events(need(&config.events, "events")?, &mut out)?;
            let cleaned = pipeline::clean(&data, config.max_gap_days, &mut out)?;
            let reports = pipeline::detect(&config, &cleaned, Some(&events), &mut out)?;
            pipeline::align(&config, &reports, &events, &mut out)?;
        }
        Command::Synth(_) => {
            pipeline::synth(config.seed, &mut out)?;
        }
        Command::Run(_) => run_all(&config, &mut out)?,
    }
    let root = out.root().to_path_buf();
    out.finish(name, &config)?;
    Ok(root)
}

#[derive(Debug, Serialize)]
struct RunSummary {
    /// Event kinds by descending mean yield loss.
    loss_ordering: Vec<EventKind>,
    impacts: Vec<pipeline::KindImpact>,
    recall: Vec<(EventKind, climpact::ingest::Variable, f64)>,
}

fn run_all(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let given = [&config.climate, &config.yields, &config.events]
        .iter()
        .filter(|p| p.is_some())
        .count();
    let (climate, yields, events) = match given {
        0 => {
            let paths = pipeline::synth(config.seed, out)?;
            (paths.climate, paths.yields, paths.events)
        }
        3 => (
            config.climate.clone().unwrap(),
            config.yields.clone().unwrap(),
            config.events.clone().unwrap(),
        ),
        _ => {
            return Err(CliError::Usage(
                "`run` takes all of --climate, --yields, --events, or none for the demo corpus"
                    .into(),
            ))
        }
    };
    let data = pipeline::load_climate(&climate, out)?;
    let yields = pipeline::load_yields(&yields, out)?;
    let events = pipeline::load_events(&events, out)?;
    pipeline::ingest_summary(&data, Some(&yields), Some(&events), out)?;
    let cleaned = pipeline::clean(&data, config.max_gap_days, out)?;
    let reports = pipeline::detect(config, &cleaned, Some(&events), out)?;
    pipeline::spi(config, &cleaned, Some(&events), out)?;
    let aligned = pipeline::align(config, &reports, &events, out)?;
    let impacts = pipeline::impact(config, &data, &yields, &events, out)?;

    let mut ranked: Vec<&pipeline::KindImpact> =
        impacts.iter().filter(|k| k.mean_reduction_pct.is_some()).collect();
    ranked.sort_by(|a, b| {
        b.mean_reduction_pct
            .unwrap()
            .total_cmp(&a.mean_reduction_pct.unwrap())
    });
    let summary = RunSummary {
        loss_ordering: ranked.iter().map(|k| k.event_kind).collect(),
        recall: aligned
            .pairs
            .iter()
            .map(|p| (p.event_kind, p.variable, p.pooled.recall))
            .collect(),
        impacts,
    };
    out.write_json("summary.json", &summary)
}

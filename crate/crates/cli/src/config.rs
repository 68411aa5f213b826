//! Run configuration: a flat TOML file merged under command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use climpact::iforest::ForestConfig;
use climpact::impact::{DEFAULT_COUNTEREXAMPLE_THRESHOLD, DEFAULT_WINDOW};
use climpact::preprocess::DEFAULT_MAX_GAP_DAYS;
use climpact::spi::{DEFAULT_TIMESCALE, TIMESCALES};
use climpact::synth::DEMO_SEED;

use crate::error::CliError;

/// Settings shared by every subcommand. Each may also come from `--config`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Flat TOML file of the same keys (underscores for dashes).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Station climate CSV.
    #[arg(long)]
    pub climate: Option<PathBuf>,
    /// Farm yield CSV.
    #[arg(long)]
    pub yields: Option<PathBuf>,
    /// Extreme event catalog CSV.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the forest and the synthetic generator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of station-days to flag.
    #[arg(long)]
    pub contamination: Option<f64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub subsample_size: Option<usize>,
    /// Years in the baseline yield window.
    #[arg(long)]
    pub window: Option<usize>,
    /// SPI accumulation period in months.
    #[arg(long)]
    pub timescale: Option<usize>,
    /// Days a flag may sit from an event day and still count.
    #[arg(long)]
    pub tolerance_days: Option<u32>,
    /// Missing runs shorter than this are forward-filled.
    #[arg(long)]
    pub max_gap_days: Option<usize>,
    /// Pick contamination per series by F1 against the event catalog.
    #[arg(long)]
    #[serde(default)]
    pub tune: bool,
    /// Reductions at or below this percentage are reported as counterexamples.
    #[arg(long, allow_negative_numbers = true)]
    pub counterexample_threshold: Option<f64>,
}

/// Fully resolved settings, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub climate: Option<PathBuf>,
    pub yields: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub forest: ForestConfig,
    pub window: usize,
    pub timescale: usize,
    pub tolerance_days: u32,
    pub max_gap_days: usize,
    pub tune: bool,
    pub counterexample_threshold: f64,
}

fn read_file_settings(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::input(path, e))
}

impl RunConfig {
    /// Flags win over the config file, which wins over defaults.
    pub fn resolve(flags: &Settings) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => read_file_settings(p)?,
            None => Settings::default(),
        };
        let pick_path = |a: &Option<PathBuf>, b: &Option<PathBuf>| a.clone().or_else(|| b.clone());
        let seed = flags.seed.or(file.seed).unwrap_or(DEMO_SEED);
        let defaults = ForestConfig::default();
        let forest = ForestConfig {
            n_trees: flags.n_trees.or(file.n_trees).unwrap_or(defaults.n_trees),
            subsample_size: flags
                .subsample_size
                .or(file.subsample_size)
                .unwrap_or(defaults.subsample_size),
            contamination: flags
                .contamination
                .or(file.contamination)
                .unwrap_or(defaults.contamination),
            rng_seed: seed,
        };
        let config = RunConfig {
            climate: pick_path(&flags.climate, &file.climate),
            yields: pick_path(&flags.yields, &file.yields),
            events: pick_path(&flags.events, &file.events),
            out: pick_path(&flags.out, &file.out).unwrap_or_else(|| PathBuf::from("out")),
            seed,
            forest,
            window: flags.window.or(file.window).unwrap_or(DEFAULT_WINDOW),
            timescale: flags.timescale.or(file.timescale).unwrap_or(DEFAULT_TIMESCALE),
            tolerance_days: flags
                .tolerance_days
                .or(file.tolerance_days)
                .unwrap_or(climpact::alignment::DEFAULT_TOLERANCE_DAYS),
            max_gap_days: flags
                .max_gap_days
                .or(file.max_gap_days)
                .unwrap_or(DEFAULT_MAX_GAP_DAYS),
            tune: flags.tune || file.tune,
            counterexample_threshold: flags
                .counterexample_threshold
                .or(file.counterexample_threshold)
                .unwrap_or(DEFAULT_COUNTEREXAMPLE_THRESHOLD),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.forest
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if self.window == 0 {
            return Err(CliError::Usage("--window must be at least 1".into()));
        }
        if !TIMESCALES.contains(&self.timescale) {
            return Err(CliError::Usage(format!(
                "--timescale must be one of {TIMESCALES:?}"
            )));
        }
        if self.max_gap_days == 0 {
            return Err(CliError::Usage("--max-gap-days must be at least 1".into()));
        }
        if !self.counterexample_threshold.is_finite() {
            return Err(CliError::Usage("--counterexample-threshold must be finite".into()));
        }
        let inputs: Vec<&PathBuf> = [&self.climate, &self.yields, &self.events]
            .into_iter()
            .flatten()
            .collect();
        for (i, a) in inputs.iter().enumerate() {
            if inputs[i + 1..].contains(a) {
                return Err(CliError::Usage(format!(
                    "{} is given for more than one input",
                    a.display()
                )));
            }
            if *a == &self.out {
                return Err(CliError::Usage(format!(
                    "output directory {} is also an input",
                    a.display()
                )));
            }
        }
        Ok(())
    }

    pub fn require<'a>(
        path: &'a Option<PathBuf>,
        flag: &str,
        command: &str,
    ) -> Result<&'a Path, CliError> {
        path.as_deref()
            .ok_or_else(|| CliError::Usage(format!("`{command}` needs --{flag}")))
    }
}

use serde::{Deserialize, Serialize};

use super::{detect_series, ForestConfig, ForestError, SeriesReport};
use crate::alignment::{align, kinds_for, AlignmentMetrics};
use crate::ingest::ExtremeEvent;
use crate::preprocess::ClimateSeries;

/// 0.005, 0.010, ..., 0.050.
pub fn default_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.005).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunePoint {
    pub contamination: f64,
    /// Mean day-level F1 over the event kinds this variable indicates.
    pub f1: f64,
    pub metrics: Vec<AlignmentMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: f64,
    pub points: Vec<TunePoint>,
    /// Report re-flagged at `best`.
    pub report: SeriesReport,
}

/// Sweeps contamination over `grid` and keeps the value with the highest F1
/// against the catalog; ties go to the smaller contamination.
///
/// The forest is fitted once: scores do not depend on contamination, so each
/// grid value only re-ranks the same scores.
pub fn tune_contamination(
    series: &ClimateSeries,
    config: &ForestConfig,
    catalog: &[ExtremeEvent],
    grid: &[f64],
    tolerance_days: u32,
) -> Result<TuneResult, ForestError> {
    if catalog.is_empty() {
        return Err(ForestError::EmptyCatalog);
    }
    if grid.is_empty() {
        return Err(ForestError::InvalidConfig("empty contamination grid".into()));
    }
    let mut kinds = kinds_for(series.variable);
    if kinds.is_empty() {
        return Err(ForestError::UnmappedVariable(series.variable));
    }
    // Kinds absent from the catalog score zero everywhere and would only
    // dilute the mean.
    if kinds.iter().any(|k| catalog.iter().any(|e| e.kind == *k)) {
        kinds.retain(|k| catalog.iter().any(|e| e.kind == *k));
    }

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();

    let base = detect_series(series, &config.with_contamination(sorted[0]))?;
    let mut points = Vec::with_capacity(sorted.len());
    let mut best: Option<(f64, f64, SeriesReport)> = None;
    for &c in &sorted {
        let report = base.rethreshold(c)?;
        let metrics: Vec<AlignmentMetrics> = kinds
            .iter()
            .map(|&k| align(&report, catalog, k, tolerance_days).expect("mapped kind, nonempty catalog"))
            .collect();
        let f1 = metrics.iter().map(|m| m.f1).sum::<f64>() / metrics.len() as f64;
        if best.as_ref().is_none_or(|(_, bf, _)| f1 > *bf) {
            best = Some((c, f1, report));
        }
        points.push(TunePoint {
            contamination: c,
            f1,
            metrics,
        });
    }
    let (best, _, report) = best.expect("grid nonempty");
    Ok(TuneResult {
        best,
        points,
        report,
    })
}

//! Validation of detected anomalies against the extreme-event catalog.
//!
//! Each event kind is checked against the variables that characterise it,
//! and only flags on the expected side of the station median count:
//!
//! | kind     | variable | side |
//! |----------|----------|------|
//! | DROUGHT  | RAIN_MM  | low  |
//! | DROUGHT  | RH_PCT   | low  |
//! | HEATWAVE | TMAX_C   | high |
//! | HEATWAVE | TMIN_C   | high |
//! | RAINFALL | RAIN_MM  | high |
//! | FROST    | TMIN_C   | low  |
//! | FROST    | RH_PCT   | high |
//! | FROST    | GUST_MS  | low  |
//!
//! Counting is day-level. A flag within `tolerance_days` of an event day is
//! matched; an event day with a matching flag within `tolerance_days` is a
//! true positive and otherwise a false negative; unmatched flags are false
//! positives. Precision is matched flags over all side-correct flags and
//! recall is true positives over event days, so `TP + FN` always equals the
//! number of distinct event days inside the report's date range.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::iforest::{SeriesReport, Side};
use crate::ingest::{EventKind, ExtremeEvent, Variable};

pub const DEFAULT_TOLERANCE_DAYS: u32 = 1;

pub const KIND_VARIABLE_SIDES: &[(EventKind, Variable, Side)] = &[
    (EventKind::Drought, Variable::RainMm, Side::Low),
    (EventKind::Drought, Variable::RhPct, Side::Low),
    (EventKind::Heatwave, Variable::TmaxC, Side::High),
    (EventKind::Heatwave, Variable::TminC, Side::High),
    (EventKind::Rainfall, Variable::RainMm, Side::High),
    (EventKind::Frost, Variable::TminC, Side::Low),
    (EventKind::Frost, Variable::RhPct, Side::High),
    (EventKind::Frost, Variable::GustMs, Side::Low),
];

pub fn required_side(kind: EventKind, variable: Variable) -> Option<Side> {
    KIND_VARIABLE_SIDES
        .iter()
        .find(|(k, v, _)| *k == kind && *v == variable)
        .map(|&(_, _, s)| s)
}

pub fn kinds_for(variable: Variable) -> Vec<EventKind> {
    KIND_VARIABLE_SIDES
        .iter()
        .filter(|(_, v, _)| *v == variable)
        .map(|&(k, _, _)| k)
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("event catalog is empty")]
    EmptyCatalog,
    #[error("{0} is not an indicator of {1}")]
    UnmappedPair(Variable, EventKind),
    #[error("station {station_id} has no report for {variable}")]
    MissingVariable {
        station_id: String,
        variable: Variable,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMetrics {
    pub event_kind: EventKind,
    pub variable: Variable,
    pub true_positive_days: usize,
    pub false_positive_days: usize,
    pub false_negative_days: usize,
    /// Side-correct flags within tolerance of an event day.
    pub matched_flag_days: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tolerance_days: u32,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl AlignmentMetrics {
    fn from_counts(
        event_kind: EventKind,
        variable: Variable,
        tp: usize,
        fp: usize,
        fn_: usize,
        matched: usize,
        tolerance_days: u32,
    ) -> Self {
        let precision = ratio(matched, matched + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        AlignmentMetrics {
            event_kind,
            variable,
            true_positive_days: tp,
            false_positive_days: fp,
            false_negative_days: fn_,
            matched_flag_days: matched,
            precision,
            recall,
            f1,
            tolerance_days,
        }
    }

    pub fn event_days(&self) -> usize {
        self.true_positive_days + self.false_negative_days
    }

    /// Sums counts over several stations for the same kind, variable and
    /// tolerance, then recomputes the ratios.
    pub fn pooled(parts: &[AlignmentMetrics]) -> Option<AlignmentMetrics> {
        let first = parts.first()?;
        let sum = |f: fn(&AlignmentMetrics) -> usize| parts.iter().map(f).sum::<usize>();
        Some(Self::from_counts(
            first.event_kind,
            first.variable,
            sum(|m| m.true_positive_days),
            sum(|m| m.false_positive_days),
            sum(|m| m.false_negative_days),
            sum(|m| m.matched_flag_days),
            first.tolerance_days,
        ))
    }
}

fn near(set: &BTreeSet<NaiveDate>, day: NaiveDate, tolerance: u32) -> bool {
    let tol = Days::new(tolerance as u64);
    let lo = day.checked_sub_days(tol).unwrap_or(NaiveDate::MIN);
    let hi = day.checked_add_days(tol).unwrap_or(NaiveDate::MAX);
    set.range(lo..=hi).next().is_some()
}

/// Event days of `kind` that apply to `station_id`, clipped to `[first, last]`.
pub fn event_days(
    catalog: &[ExtremeEvent],
    kind: EventKind,
    station_id: &str,
    first: NaiveDate,
    last: NaiveDate,
) -> BTreeSet<NaiveDate> {
    let mut days = BTreeSet::new();
    for e in catalog
        .iter()
        .filter(|e| e.kind == kind && e.applies_to_station(station_id))
    {
        let start = e.start_date.max(first);
        let end = e.end_date.min(last);
        let mut d = start;
        while d <= end {
            days.insert(d);
            d = match d.succ_opt() {
                Some(n) => n,
                None => break,
            };
        }
    }
    days
}

/// Day-level agreement between one series report and the catalog events of
/// `kind` that apply to the report's station.
pub fn align(
    report: &SeriesReport,
    catalog: &[ExtremeEvent],
    kind: EventKind,
    tolerance_days: u32,
) -> Result<AlignmentMetrics, AlignError> {
    if catalog.is_empty() {
        return Err(AlignError::EmptyCatalog);
    }
    let side = required_side(kind, report.variable)
        .ok_or(AlignError::UnmappedPair(report.variable, kind))?;
    let (Some(first), Some(last)) = (report.first_date(), report.last_date()) else {
        return Ok(AlignmentMetrics::from_counts(
            kind,
            report.variable,
            0,
            0,
            0,
            0,
            tolerance_days,
        ));
    };
    let events = event_days(catalog, kind, &report.station_id, first, last);
    let flags: BTreeSet<NaiveDate> = report
        .rows
        .iter()
        .filter(|r| r.flag && report.side(r) == side)
        .map(|r| r.date)
        .collect();

    let matched = flags
        .iter()
        .filter(|&&f| near(&events, f, tolerance_days))
        .count();
    let tp = events
        .iter()
        .filter(|&&e| near(&flags, e, tolerance_days))
        .count();
    Ok(AlignmentMetrics::from_counts(
        kind,
        report.variable,
        tp,
        flags.len() - matched,
        events.len() - tp,
        matched,
        tolerance_days,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostPanelRow {
    pub date: NaiveDate,
    pub rh_pct: f64,
    pub tmin_c: f64,
    pub gust_ms: f64,
    pub rh_flag: bool,
    pub tmin_flag: bool,
    pub gust_flag: bool,
    pub frost_candidate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrostPanel {
    pub station_id: String,
    pub rows: Vec<FrostPanelRow>,
}

pub const FROST_PANEL_HEADER: [&str; 9] = [
    "station_id",
    "date",
    "rh_pct",
    "tmin_c",
    "gust_ms",
    "rh_flag",
    "tmin_flag",
    "gust_flag",
    "frost_candidate",
];

impl FrostPanel {
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(FROST_PANEL_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                self.station_id.clone(),
                r.date.to_string(),
                r.rh_pct.to_string(),
                r.tmin_c.to_string(),
                r.gust_ms.to_string(),
                r.rh_flag.to_string(),
                r.tmin_flag.to_string(),
                r.gust_flag.to_string(),
                r.frost_candidate.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
    }
}

/// Joins the RH, Tmin and gust reports of one station on date (days present
/// in all three) and marks frost candidates: a low-side Tmin flag on a day
/// that is calmer and more humid than the station medians.
pub fn frost_panel(station_id: &str, reports: &[SeriesReport]) -> Result<FrostPanel, AlignError> {
    let find = |variable: Variable| {
        reports
            .iter()
            .find(|r| r.station_id == station_id && r.variable == variable)
            .ok_or_else(|| AlignError::MissingVariable {
                station_id: station_id.to_string(),
                variable,
            })
    };
    let rh = find(Variable::RhPct)?;
    let tmin = find(Variable::TminC)?;
    let gust = find(Variable::GustMs)?;

    let index = |r: &SeriesReport| -> BTreeMap<NaiveDate, (f64, bool)> {
        r.rows.iter().map(|row| (row.date, (row.value, row.flag))).collect()
    };
    let rh_rows = index(rh);
    let gust_rows = index(gust);

    let rows = tmin
        .rows
        .iter()
        .filter_map(|t| {
            let &(rh_v, rh_f) = rh_rows.get(&t.date)?;
            let &(gust_v, gust_f) = gust_rows.get(&t.date)?;
            let frost_candidate = t.flag
                && tmin.side(t) == Side::Low
                && gust_v < gust.median
                && rh_v > rh.median;
            Some(FrostPanelRow {
                date: t.date,
                rh_pct: rh_v,
                tmin_c: t.value,
                gust_ms: gust_v,
                rh_flag: rh_f,
                tmin_flag: t.flag,
                gust_flag: gust_f,
                frost_candidate,
            })
        })
        .collect();
    Ok(FrostPanel {
        station_id: station_id.to_string(),
        rows,
    })
}

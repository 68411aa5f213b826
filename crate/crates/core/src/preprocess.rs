//! Series cleaning: gap scanning, bounded forward fill and monthly aggregation.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::ingest::{ClimateObservation, Variable};

/// Default forward-fill budget: runs strictly shorter than this are filled.
pub const DEFAULT_MAX_GAP_DAYS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreprocessError {
    #[error("series has no complete calendar month")]
    EmptySeries,
    #[error("gap budget must be at least one day")]
    InvalidBudget,
}

/// Dense daily series for one station and variable: `values[i]` is the value
/// on `start + i` days, `None` where missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateSeries {
    pub station_id: String,
    pub variable: Variable,
    pub start: NaiveDate,
    pub values: Vec<Option<f64>>,
}

impl ClimateSeries {
    pub fn new(
        station_id: impl Into<String>,
        variable: Variable,
        start: NaiveDate,
        values: Vec<Option<f64>>,
    ) -> Self {
        ClimateSeries {
            station_id: station_id.into(),
            variable,
            start,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }

    /// Present `(date, value)` pairs in day order.
    pub fn present(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (self.date_at(i), v)))
    }
}

/// Groups observations into dense per-(station, variable) series spanning
/// each group's first to last observed date. Sorted by station then variable.
pub fn series_from_observations(observations: &[ClimateObservation]) -> Vec<ClimateSeries> {
    let mut groups: BTreeMap<(&str, Variable), BTreeMap<NaiveDate, Option<f64>>> = BTreeMap::new();
    for o in observations {
        groups
            .entry((o.station_id.as_str(), o.variable))
            .or_default()
            .insert(o.date, o.value);
    }
    groups
        .into_iter()
        .filter_map(|((sid, var), days)| {
            let (&first, _) = days.first_key_value()?;
            let (&last, _) = days.last_key_value()?;
            let len = (last - first).num_days() as usize + 1;
            let mut values = vec![None; len];
            for (date, v) in days {
                values[(date - first).num_days() as usize] = v;
            }
            Some(ClimateSeries::new(sid, var, first, values))
        })
        .collect()
}

/// A maximal run of missing days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: NaiveDate,
    /// Day index of the first missing day within the series.
    pub offset: usize,
    pub length: usize,
}

impl Gap {
    /// A gap at the very start of the series has no value to fill from.
    pub fn is_leading(&self) -> bool {
        self.offset == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapReport {
    /// Sorted by start.
    pub gaps: Vec<Gap>,
    pub max_gap_days: usize,
}

impl GapReport {
    fn from_gaps(gaps: Vec<Gap>) -> Self {
        let max_gap_days = gaps.iter().map(|g| g.length).max().unwrap_or(0);
        GapReport { gaps, max_gap_days }
    }

    pub fn missing_days(&self) -> usize {
        self.gaps.iter().map(|g| g.length).sum()
    }
}

pub fn scan_gaps(series: &ClimateSeries) -> GapReport {
    let mut gaps = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, v) in series.values.iter().enumerate() {
        match (v, run_start) {
            (None, None) => run_start = Some(i),
            (Some(_), Some(s)) => {
                gaps.push(Gap {
                    start: series.date_at(s),
                    offset: s,
                    length: i - s,
                });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        gaps.push(Gap {
            start: series.date_at(s),
            offset: s,
            length: series.len() - s,
        });
    }
    GapReport::from_gaps(gaps)
}

/// Replaces each missing run shorter than `max_gap_days` with the last
/// observed value. Longer runs and leading runs stay missing and are listed
/// in the returned report, which describes the residual gaps.
pub fn forward_fill(
    series: &ClimateSeries,
    max_gap_days: usize,
) -> Result<(ClimateSeries, GapReport), PreprocessError> {
    if max_gap_days == 0 {
        return Err(PreprocessError::InvalidBudget);
    }
    let mut out = series.clone();
    for gap in scan_gaps(series).gaps {
        if gap.is_leading() || gap.length >= max_gap_days {
            continue;
        }
        let fill = series.values[gap.offset - 1];
        out.values[gap.offset..gap.offset + gap.length].fill(fill);
    }
    let residual = scan_gaps(&out);
    Ok((out, residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    /// 1..=12
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        YearMonth { year, month }
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth::new(date.year(), date.month())
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        YearMonth::new(ord.div_euclid(12) as i32, ord.rem_euclid(12) as u32 + 1)
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    pub fn months_since(self, earlier: YearMonth) -> i64 {
        self.ordinal() - earlier.ordinal()
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }

    pub fn days(self) -> usize {
        (self.plus(1).first_day() - self.first_day()).num_days() as usize
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Dense month-indexed series: `values[i]` belongs to `start.plus(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    pub start: YearMonth,
    pub values: Vec<Option<f64>>,
}

impl MonthlySeries {
    pub fn new(start: YearMonth, values: Vec<Option<f64>>) -> Self {
        MonthlySeries { start, values }
    }

    pub fn from_values(start: YearMonth, values: &[f64]) -> Self {
        MonthlySeries::new(start, values.iter().copied().map(Some).collect())
    }

    pub fn month_at(&self, index: usize) -> YearMonth {
        self.start.plus(index as i64)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AggregateMode {
    Sum,
    Mean,
}

impl AggregateMode {
    /// Rain is totalled, everything else averaged.
    pub fn for_variable(variable: Variable) -> Self {
        match variable {
            Variable::RainMm => AggregateMode::Sum,
            _ => AggregateMode::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyAggregate {
    /// One slot per calendar month fully covered by the daily series; `None`
    /// where the month still held missing days.
    pub series: MonthlySeries,
    /// Months dropped because of residual missing values.
    pub omitted: Vec<YearMonth>,
}

pub fn aggregate_monthly(
    series: &ClimateSeries,
    mode: AggregateMode,
) -> Result<MonthlyAggregate, PreprocessError> {
    if series.is_empty() {
        return Err(PreprocessError::EmptySeries);
    }
    let first_day = series.start;
    let last_day = series.date_at(series.len() - 1);
    let mut first_month = YearMonth::of(first_day);
    if first_day.day() != 1 {
        first_month = first_month.plus(1);
    }
    let mut last_month = YearMonth::of(last_day);
    if last_day.succ_opt().is_none_or(|next| next.day() != 1) {
        last_month = last_month.plus(-1);
    }
    let n_months = last_month.months_since(first_month) + 1;
    if n_months <= 0 {
        return Err(PreprocessError::EmptySeries);
    }

    let mut values = Vec::with_capacity(n_months as usize);
    let mut omitted = Vec::new();
    for m in 0..n_months {
        let month = first_month.plus(m);
        let offset = (month.first_day() - first_day).num_days() as usize;
        let days = &series.values[offset..offset + month.days()];
        let total: Option<f64> = days.iter().copied().sum();
        match total {
            Some(total) => values.push(Some(match mode {
                AggregateMode::Sum => total,
                AggregateMode::Mean => total / days.len() as f64,
            })),
            None => {
                omitted.push(month);
                values.push(None);
            }
        }
    }
    Ok(MonthlyAggregate {
        series: MonthlySeries::new(first_month, values),
        omitted,
    })
}

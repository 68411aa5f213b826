use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{score_all, AnomalyReport, FeatureMatrix, ForestConfig, ForestError};
use crate::ingest::Variable;
use crate::preprocess::ClimateSeries;

pub const REPORT_CSV_HEADER: [&str; 6] =
    ["station_id", "date", "variable", "score", "mean_path", "flag"];

/// Which side of the station-variable median a value falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Low,
    Median,
    High,
}

impl Side {
    pub fn of(value: f64, median: f64) -> Self {
        if value > median {
            Side::High
        } else if value < median {
            Side::Low
        } else {
            Side::Median
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub date: NaiveDate,
    pub value: f64,
    pub score: f64,
    pub mean_path: f64,
    pub flag: bool,
}

/// Univariate anomaly report for one station-variable series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub station_id: String,
    pub variable: Variable,
    /// Median of the scored values; orients flags as low- or high-side.
    pub median: f64,
    pub threshold: f64,
    pub n_flagged: usize,
    pub sample_size: usize,
    pub config: ForestConfig,
    pub rows: Vec<ReportRow>,
}

impl SeriesReport {
    pub fn side(&self, row: &ReportRow) -> Side {
        Side::of(row.value, self.median)
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.rows.iter().map(|r| r.date).min()
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.rows.iter().map(|r| r.date).max()
    }

    pub fn anomaly_report(&self) -> AnomalyReport {
        AnomalyReport {
            rows: self
                .rows
                .iter()
                .map(|r| super::RowScore {
                    score: r.score,
                    mean_path: r.mean_path,
                    flag: r.flag,
                })
                .collect(),
            threshold: self.threshold,
            n_flagged: self.n_flagged,
            sample_size: self.sample_size,
            config: self.config,
        }
    }

    /// Same scores, flags recomputed at another contamination.
    pub fn rethreshold(&self, contamination: f64) -> Result<Self, ForestError> {
        let report = self.anomaly_report().rethreshold(contamination)?;
        Ok(self.with_report(report))
    }

    fn with_report(&self, report: AnomalyReport) -> Self {
        let rows = self
            .rows
            .iter()
            .zip(&report.rows)
            .map(|(r, s)| ReportRow {
                flag: s.flag,
                ..r.clone()
            })
            .collect();
        SeriesReport {
            threshold: report.threshold,
            n_flagged: report.n_flagged,
            config: report.config,
            rows,
            ..self.clone()
        }
    }

    /// Writes `station_id,date,variable,score,mean_path,flag` rows.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(REPORT_CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                self.station_id.as_str(),
                &r.date.to_string(),
                self.variable.as_str(),
                &r.score.to_string(),
                &r.mean_path.to_string(),
                if r.flag { "true" } else { "false" },
            ])
            .map_err(io)?;
        }
        w.flush()
    }
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs a univariate forest over the present days of a cleaned series.
/// Days still missing after cleaning are skipped.
pub fn detect_series(
    series: &ClimateSeries,
    config: &ForestConfig,
) -> Result<SeriesReport, ForestError> {
    let (dates, values): (Vec<NaiveDate>, Vec<f64>) = series.present().unzip();
    if values.len() < 2 {
        return Err(ForestError::TooFewRows(values.len()));
    }
    let report = score_all(&FeatureMatrix::from_column(&values)?, config)?;
    let rows = dates
        .into_iter()
        .zip(&values)
        .zip(&report.rows)
        .map(|((date, &value), s)| ReportRow {
            date,
            value,
            score: s.score,
            mean_path: s.mean_path,
            flag: s.flag,
        })
        .collect();
    Ok(SeriesReport {
        station_id: series.station_id.clone(),
        variable: series.variable,
        median: median(&values),
        threshold: report.threshold,
        n_flagged: report.n_flagged,
        sample_size: report.sample_size,
        config: *config,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<Option<f64>>) -> ClimateSeries {
        ClimateSeries::new(
            "s1",
            Variable::TmaxC,
            NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            values,
        )
    }

    #[test]
    fn sides() {
        assert_eq!(Side::of(3.0, 2.0), Side::High);
        assert_eq!(Side::of(1.0, 2.0), Side::Low);
        assert_eq!(Side::of(2.0, 2.0), Side::Median);
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn missing_days_are_skipped() {
        let mut v: Vec<Option<f64>> = (0..60).map(|i| Some(20.0 + (i % 7) as f64)).collect();
        v[10] = None;
        v[30] = Some(45.0);
        let report = detect_series(&series(v), &ForestConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 59);
        assert!(report.rows.iter().all(|r| r.date != NaiveDate::from_ymd_opt(2021, 1, 11).unwrap()));
        let top = report.rows.iter().find(|r| r.flag).unwrap();
        assert_eq!(top.value, 45.0);
        assert_eq!(report.side(top), Side::High);
    }

    #[test]
    fn csv_layout() {
        let v = (0..10).map(|i| Some(i as f64)).collect();
        let report = detect_series(&series(v), &ForestConfig::default()).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("station_id,date,variable,score,mean_path,flag"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(&first[..3], &["s1", "2021-01-01", "TMAX_C"]);
        assert_eq!(text.lines().count(), 11);
    }

    #[test]
    fn too_short_series() {
        assert_eq!(
            detect_series(&series(vec![Some(1.0), None]), &ForestConfig::default()).unwrap_err(),
            ForestError::TooFewRows(1)
        );
    }
}

//! Standardised Precipitation Index.
//!
//! Monthly totals are summed over a rolling window of `k` months. For each
//! calendar month the rolling sums from every year are pooled: `q` is the
//! fraction of exact zeros and a gamma distribution is fitted to the
//! positive sums. A value `v` then maps to the cumulative probability
//!
//! ```text
//! H(v) = q + (1 - q) G(v)   for v > 0
//! H(0) = q / 2
//! ```
//!
//! which is clamped to `[1e-6, 1 - 1e-6]` and sent through the standard
//! normal quantile function.

mod gamma;

pub use gamma::{fit_gamma, gamma_cdf, trigamma, GammaFit, MIN_FIT_SAMPLES};

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::preprocess::{MonthlySeries, YearMonth};

pub const DEFAULT_TIMESCALE: usize = 3;
pub const TIMESCALES: [usize; 4] = [1, 3, 6, 12];
/// Tail mass kept away from 0 and 1 before quantile inversion.
pub const TAIL_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpiError {
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("non-positive sample {0}")]
    NonPositiveSample(f64),
    #[error("timescale {0} not one of 1, 3, 6, 12 months")]
    InvalidTimescale(usize),
}

/// Sum of months `m - k + 1 ..= m`; `None` until `k` months have accumulated
/// or when any month in the window is missing.
pub fn rolling_precip(monthly: &MonthlySeries, k: usize) -> Result<MonthlySeries, SpiError> {
    if k == 0 {
        return Err(SpiError::InvalidTimescale(k));
    }
    if monthly.len() < k {
        return Err(SpiError::InsufficientHistory(format!(
            "{} months for a {k}-month window",
            monthly.len()
        )));
    }
    let values = (0..monthly.len())
        .map(|m| {
            if m + 1 < k {
                None
            } else {
                monthly.values[m + 1 - k..=m].iter().copied().sum()
            }
        })
        .collect();
    Ok(MonthlySeries::new(monthly.start, values))
}

/// Standard normal quantile Φ⁻¹(p).
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Standard normal CDF Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Per-calendar-month distribution of rolling precipitation sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiFit {
    pub shape: f64,
    pub scale: f64,
    /// Probability of an exactly-zero sum, in `[0, 1)`.
    pub zero_prob: f64,
}

impl SpiFit {
    pub fn new(gamma: GammaFit, zero_prob: f64) -> Self {
        SpiFit {
            shape: gamma.shape,
            scale: gamma.scale,
            zero_prob,
        }
    }

    pub fn cumulative(&self, value: f64) -> f64 {
        let q = self.zero_prob;
        if value <= 0.0 {
            q / 2.0
        } else {
            q + (1.0 - q) * gamma_cdf(value, self.shape, self.scale)
        }
    }
}

pub fn spi_transform(value: f64, fit: &SpiFit) -> f64 {
    let h = fit.cumulative(value).clamp(TAIL_CLAMP, 1.0 - TAIL_CLAMP);
    normal_quantile(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DroughtClass {
    None,
    Moderate,
    Severe,
    Extreme,
}

impl DroughtClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DroughtClass::None => "NONE",
            DroughtClass::Moderate => "MODERATE",
            DroughtClass::Severe => "SEVERE",
            DroughtClass::Extreme => "EXTREME",
        }
    }
}

impl fmt::Display for DroughtClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Boundaries belong to the more severe class.
pub fn classify_drought(spi: f64) -> DroughtClass {
    if spi <= -2.0 {
        DroughtClass::Extreme
    } else if spi <= -1.5 {
        DroughtClass::Severe
    } else if spi <= -1.0 {
        DroughtClass::Moderate
    } else {
        DroughtClass::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiSeries {
    pub station_id: String,
    pub timescale_months: usize,
    pub start: YearMonth,
    pub values: Vec<Option<f64>>,
    /// Indexed by calendar month − 1.
    pub fits: Vec<SpiFit>,
}

pub const SPI_CSV_HEADER: [&str; 4] = ["station_id", "month", "spi", "drought_class"];

impl SpiSeries {
    pub fn defined(&self) -> impl Iterator<Item = (YearMonth, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (self.start.plus(i as i64), v)))
    }

    pub fn fit_for(&self, month: YearMonth) -> &SpiFit {
        &self.fits[month.month as usize - 1]
    }

    /// Writes `station_id,month,spi,drought_class`, skipping undefined months.
    pub fn write_csv<W: Write>(&self, sink: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        let io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(SPI_CSV_HEADER).map_err(io)?;
        self.write_rows(&mut w).map_err(io)?;
        w.flush()
    }

    /// Appends data rows to an existing writer, for multi-station files.
    pub fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        for (month, spi) in self.defined() {
            w.write_record([
                self.station_id.as_str(),
                &month.to_string(),
                &spi.to_string(),
                classify_drought(spi).as_str(),
            ])?;
        }
        Ok(())
    }
}

/// SPI at timescale `k` for a monthly precipitation total series.
pub fn compute_spi(
    station_id: &str,
    monthly: &MonthlySeries,
    k: usize,
) -> Result<SpiSeries, SpiError> {
    if !TIMESCALES.contains(&k) {
        return Err(SpiError::InvalidTimescale(k));
    }
    let rolling = rolling_precip(monthly, k)?;

    let mut by_month: Vec<Vec<f64>> = vec![Vec::new(); 12];
    for (i, v) in rolling.values.iter().enumerate() {
        if let Some(v) = v {
            by_month[rolling.month_at(i).month as usize - 1].push(*v);
        }
    }

    let mut fits = Vec::with_capacity(12);
    for (m, sums) in by_month.iter().enumerate() {
        if sums.len() < MIN_FIT_SAMPLES {
            return Err(SpiError::InsufficientHistory(format!(
                "calendar month {} has {} rolling sums, need {MIN_FIT_SAMPLES}",
                m + 1,
                sums.len()
            )));
        }
        if let Some(&neg) = sums.iter().find(|&&v| v < 0.0) {
            return Err(SpiError::NonPositiveSample(neg));
        }
        let zeros = sums.iter().filter(|&&v| v == 0.0).count();
        let positives: Vec<f64> = sums.iter().copied().filter(|&v| v > 0.0).collect();
        let gamma = fit_gamma(&positives).map_err(|e| match e {
            SpiError::DegenerateSample(why) => {
                SpiError::DegenerateSample(format!("calendar month {}: {why}", m + 1))
            }
            other => other,
        })?;
        fits.push(SpiFit::new(gamma, zeros as f64 / sums.len() as f64));
    }

    let values = rolling
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.map(|v| spi_transform(v, &fits[rolling.month_at(i).month as usize - 1]))
        })
        .collect();
    Ok(SpiSeries {
        station_id: station_id.to_string(),
        timescale_months: k,
        start: monthly.start,
        values,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn monthly(values: &[f64]) -> MonthlySeries {
        MonthlySeries::from_values(YearMonth::new(2000, 1), values)
    }

    #[test]
    fn rolling_windows() {
        let m = monthly(&[10.0, 20.0, 30.0]);
        assert_eq!(
            rolling_precip(&m, 1).unwrap().values,
            vec![Some(10.0), Some(20.0), Some(30.0)]
        );
        assert_eq!(
            rolling_precip(&m, 3).unwrap().values,
            vec![None, None, Some(60.0)]
        );
        assert_eq!(
            rolling_precip(&monthly(&[0.0; 3]), 3).unwrap().values[2],
            Some(0.0)
        );
        assert!(matches!(
            rolling_precip(&monthly(&[1.0, 2.0]), 3),
            Err(SpiError::InsufficientHistory(_))
        ));
    }

    #[test]
    fn rolling_window_with_missing_month() {
        let m = MonthlySeries::new(
            YearMonth::new(2000, 1),
            vec![Some(1.0), None, Some(2.0), Some(3.0), Some(4.0)],
        );
        let r = rolling_precip(&m, 2).unwrap();
        assert_eq!(r.values, vec![None, None, None, Some(5.0), Some(7.0)]);
    }

    fn fit() -> SpiFit {
        SpiFit {
            shape: 2.0,
            scale: 30.0,
            zero_prob: 0.0,
        }
    }

    #[test]
    fn median_maps_to_zero() {
        // Bisect for the gamma median, then transform it.
        let f = fit();
        let (mut lo, mut hi) = (0.0, 1000.0);
        for _ in 0..200 {
            let mid = (lo + hi) / 2.0;
            if gamma_cdf(mid, f.shape, f.scale) < 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!(spi_transform(lo, &f).abs() < 1e-9);
    }

    #[test]
    fn zero_with_half_zero_mass() {
        let f = SpiFit {
            zero_prob: 0.5,
            ..fit()
        };
        assert!((spi_transform(0.0, &f) - (-0.67449)).abs() < 1e-4);
    }

    #[test]
    fn huge_value_hits_clamp() {
        let s = spi_transform(1e9, &fit());
        assert!((s - 4.753424308817087).abs() < 1e-6, "{s}");
        let s = spi_transform(f64::INFINITY, &fit());
        assert!((s - normal_quantile(1.0 - TAIL_CLAMP)).abs() < 1e-12);
    }

    #[test]
    fn drought_classes() {
        assert_eq!(classify_drought(-0.5), DroughtClass::None);
        assert_eq!(classify_drought(-1.0), DroughtClass::Moderate);
        assert_eq!(classify_drought(-1.6), DroughtClass::Severe);
        assert_eq!(classify_drought(-1.5), DroughtClass::Severe);
        assert_eq!(classify_drought(-2.0), DroughtClass::Extreme);
        assert_eq!(classify_drought(3.0), DroughtClass::None);
        assert!(DroughtClass::Extreme > DroughtClass::Severe);
    }

    #[test]
    fn identical_totals_are_degenerate() {
        let m = monthly(&[50.0; 240]);
        assert!(matches!(
            compute_spi("s1", &m, 3),
            Err(SpiError::DegenerateSample(_))
        ));
    }

    #[test]
    fn short_history_rejected() {
        let m = monthly(&(0..60).map(|i| 10.0 + i as f64).collect::<Vec<_>>());
        assert!(matches!(
            compute_spi("s1", &m, 3),
            Err(SpiError::InsufficientHistory(_))
        ));
        assert_eq!(
            compute_spi("s1", &m, 2).unwrap_err(),
            SpiError::InvalidTimescale(2)
        );
    }

    #[test]
    fn zero_months_inflate_q() {
        // Every third January is dry.
        let values: Vec<f64> = (0..360)
            .map(|i| {
                if i % 12 == 0 && (i / 12) % 3 == 0 {
                    0.0
                } else {
                    40.0 + ((i * 37) % 23) as f64
                }
            })
            .collect();
        let s = compute_spi("s1", &monthly(&values), 1).unwrap();
        assert!((s.fits[0].zero_prob - 10.0 / 30.0).abs() < 1e-12);
        assert_eq!(s.fits[1].zero_prob, 0.0);
        let dry = s.values[0].unwrap();
        assert!(dry < s.values[12].unwrap());
    }

    #[test]
    fn csv_rows() {
        let values: Vec<f64> = (0..144).map(|i| 20.0 + ((i * 29) % 17) as f64).collect();
        let s = compute_spi("s7", &monthly(&values), 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("station_id,month,spi,drought_class\ns7,2000-03,"));
        assert_eq!(text.lines().count(), 1 + 142);
    }

    proptest! {
        #[test]
        fn transform_monotone(a in 0.0f64..500.0, b in 0.0f64..500.0, q in 0.0f64..0.9) {
            let f = SpiFit { zero_prob: q, ..fit() };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spi_transform(lo, &f) <= spi_transform(hi, &f));
        }

        #[test]
        fn zero_below_any_rain(v in 1e-3f64..1000.0, q in 0.0f64..0.99) {
            let f = SpiFit { zero_prob: q, ..fit() };
            prop_assert!(spi_transform(0.0, &f) < spi_transform(v, &f));
        }

        #[test]
        fn classes_partition(z in -10.0f64..10.0) {
            let c = classify_drought(z);
            let hits = [z <= -2.0, z > -2.0 && z <= -1.5, z > -1.5 && z <= -1.0, z > -1.0];
            prop_assert_eq!(hits.iter().filter(|&&h| h).count(), 1);
            let expected = [DroughtClass::Extreme, DroughtClass::Severe, DroughtClass::Moderate, DroughtClass::None];
            prop_assert_eq!(c, expected[hits.iter().position(|&h| h).unwrap()]);
        }
    }
}

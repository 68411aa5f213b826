//! Yield impact of extreme-event years against preceding-year baselines.
//!
//! The reduction for an event year `y` with window size `w` is
//!
//! ```text
//! window_mean   = mean(yield[y - w], ..., yield[y - 1])
//! reduction_pct = 100 * (window_mean - yield[y]) / window_mean
//! ```
//!
//! Positive values are losses, negative values gains.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ingest::{FarmYieldRecord, Variety};

pub const DEFAULT_WINDOW: usize = 5;
pub const SENSITIVITY_WINDOWS: [usize; 6] = [2, 3, 4, 5, 6, 7];
pub const DEFAULT_COUNTEREXAMPLE_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImpactError {
    #[error("missing yield years {0:?}")]
    MissingYears(Vec<i32>),
    #[error("window mean is zero")]
    ZeroWindowMean,
    #[error("window size must be at least 1")]
    InvalidWindow,
}

/// Yields of one farm-variety keyed by year.
pub type YearSeries = BTreeMap<i32, f64>;

/// Groups yield records into per `(farm_id, variety)` year series.
pub fn yield_series(records: &[FarmYieldRecord]) -> BTreeMap<(String, Variety), YearSeries> {
    let mut out: BTreeMap<(String, Variety), YearSeries> = BTreeMap::new();
    for r in records {
        out.entry((r.farm_id.clone(), r.variety))
            .or_default()
            .insert(r.year, r.yield_value);
    }
    out
}

pub fn window_average(
    yields: &YearSeries,
    event_year: i32,
    window_size: usize,
) -> Result<f64, ImpactError> {
    if window_size == 0 {
        return Err(ImpactError::InvalidWindow);
    }
    let years = event_year - window_size as i32..event_year;
    let missing: Vec<i32> = years.clone().filter(|y| !yields.contains_key(y)).collect();
    if !missing.is_empty() {
        return Err(ImpactError::MissingYears(missing));
    }
    let mean = years.map(|y| yields[&y]).sum::<f64>() / window_size as f64;
    if mean <= 0.0 {
        return Err(ImpactError::ZeroWindowMean);
    }
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldImpact {
    pub farm_id: String,
    pub variety: Variety,
    pub event_year: i32,
    pub window_size: usize,
    pub window_mean: f64,
    pub reduction_pct: f64,
}

pub fn reduction_pct(
    farm_id: &str,
    variety: Variety,
    yields: &YearSeries,
    event_year: i32,
    window_size: usize,
) -> Result<YieldImpact, ImpactError> {
    let window_mean = window_average(yields, event_year, window_size)?;
    let observed = *yields
        .get(&event_year)
        .ok_or_else(|| ImpactError::MissingYears(vec![event_year]))?;
    Ok(YieldImpact {
        farm_id: farm_id.to_string(),
        variety,
        event_year,
        window_size,
        window_mean,
        reduction_pct: 100.0 * (window_mean - observed) / window_mean,
    })
}

pub const IMPACT_CSV_HEADER: [&str; 6] = [
    "farm_id",
    "variety",
    "event_year",
    "window",
    "window_mean",
    "reduction_pct",
];

pub fn write_impacts_csv<W: Write>(sink: W, impacts: &[YieldImpact]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e);
    w.write_record(IMPACT_CSV_HEADER).map_err(io)?;
    for i in impacts {
        w.write_record([
            i.farm_id.as_str(),
            i.variety.as_str(),
            &i.event_year.to_string(),
            &i.window_size.to_string(),
            &i.window_mean.to_string(),
            &i.reduction_pct.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyStats {
    pub variety: Variety,
    pub mean_reduction_pct: f64,
    pub min: f64,
    pub max: f64,
    pub n_farms: usize,
}

/// Unweighted per-variety mean, min and max. Varieties without impacts are
/// left out.
pub fn variety_stats(impacts: &[YieldImpact]) -> Vec<VarietyStats> {
    let mut groups: BTreeMap<Variety, Vec<f64>> = BTreeMap::new();
    for i in impacts {
        groups.entry(i.variety).or_default().push(i.reduction_pct);
    }
    groups
        .into_iter()
        .map(|(variety, r)| VarietyStats {
            variety,
            mean_reduction_pct: r.iter().sum::<f64>() / r.len() as f64,
            min: r.iter().copied().fold(f64::INFINITY, f64::min),
            max: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n_farms: r.len(),
        })
        .collect()
}

/// Impacts whose reduction does not exceed `threshold_pct`: farms that were
/// not harmed (or only mildly) in an event year.
pub fn find_counterexamples(impacts: &[YieldImpact], threshold_pct: f64) -> Vec<YieldImpact> {
    impacts
        .iter()
        .filter(|i| i.reduction_pct <= threshold_pct)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub window_size: usize,
    /// `None` when the window reaches past the available history.
    pub reduction_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub missing_years: Option<Vec<i32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub event_year: i32,
    pub cells: Vec<SensitivityCell>,
    /// Mean over the feasible cells.
    pub mean_reduction_pct: Option<f64>,
}

/// Reduction percentage for each window size. Infeasible sizes are marked
/// per cell; other errors abort.
pub fn window_sensitivity(
    yields: &YearSeries,
    event_year: i32,
    sizes: &[usize],
) -> Result<SensitivityTable, ImpactError> {
    if !yields.contains_key(&event_year) {
        return Err(ImpactError::MissingYears(vec![event_year]));
    }
    let mut cells = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let cell = match reduction_pct("", Variety::Gold, yields, event_year, size) {
            Ok(i) => SensitivityCell {
                window_size: size,
                reduction_pct: Some(i.reduction_pct),
                missing_years: None,
            },
            Err(ImpactError::MissingYears(years)) => SensitivityCell {
                window_size: size,
                reduction_pct: None,
                missing_years: Some(years),
            },
            Err(e) => return Err(e),
        };
        cells.push(cell);
    }
    let mean_reduction_pct = mean(cells.iter().filter_map(|c| c.reduction_pct));
    Ok(SensitivityTable {
        event_year,
        cells,
        mean_reduction_pct,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One bar group of the window-sensitivity figure: the mean reduction across
/// members for each window size, plus the mean line over the bars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityGroup {
    pub group: String,
    /// `(window_size, mean reduction over feasible members, member count)`.
    pub bars: Vec<(usize, Option<f64>, usize)>,
    pub group_mean: Option<f64>,
}

pub fn sensitivity_group(
    group: &str,
    sizes: &[usize],
    tables: &[SensitivityTable],
) -> SensitivityGroup {
    let bars: Vec<(usize, Option<f64>, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &size)| {
            let vals: Vec<f64> = tables
                .iter()
                .filter_map(|t| t.cells.get(i).and_then(|c| c.reduction_pct))
                .collect();
            (size, mean(vals.iter().copied()), vals.len())
        })
        .collect();
    let group_mean = mean(bars.iter().filter_map(|b| b.1));
    SensitivityGroup {
        group: group.to_string(),
        bars,
        group_mean,
    }
}

pub const SENSITIVITY_CSV_HEADER: [&str; 5] =
    ["group", "window", "reduction_pct", "n", "group_mean"];

pub fn write_sensitivity_csv<W: Write>(
    sink: W,
    groups: &[SensitivityGroup],
) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e);
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    w.write_record(SENSITIVITY_CSV_HEADER).map_err(io)?;
    for g in groups {
        for &(size, value, n) in &g.bars {
            w.write_record([
                g.group.clone(),
                size.to_string(),
                opt(value),
                n.to_string(),
                opt(g.group_mean),
            ])
            .map_err(io)?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn years(pairs: &[(i32, f64)]) -> YearSeries {
        pairs.iter().copied().collect()
    }

    #[test]
    fn five_year_mean() {
        let y = years(&[(2015, 100.0), (2016, 110.0), (2017, 90.0), (2018, 100.0), (2019, 100.0)]);
        assert_eq!(window_average(&y, 2020, 5).unwrap(), 100.0);
    }

    #[test]
    fn singleton_window() {
        assert_eq!(window_average(&years(&[(2019, 80.0)]), 2020, 1).unwrap(), 80.0);
    }

    #[test]
    fn missing_year_listed() {
        let y = years(&[(2015, 100.0), (2016, 110.0), (2018, 100.0), (2019, 100.0)]);
        assert_eq!(
            window_average(&y, 2020, 5).unwrap_err(),
            ImpactError::MissingYears(vec![2017])
        );
        assert_eq!(window_average(&y, 2020, 0).unwrap_err(), ImpactError::InvalidWindow);
        assert_eq!(
            window_average(&years(&[(2019, 0.0)]), 2020, 1).unwrap_err(),
            ImpactError::ZeroWindowMean
        );
    }

    fn flat_then(event: f64) -> YearSeries {
        let mut y: YearSeries = (2015..2020).map(|yr| (yr, 100.0)).collect();
        y.insert(2020, event);
        y
    }

    #[test]
    fn loss_gain_and_no_change() {
        let r = |e| reduction_pct("D", Variety::Hayward, &flat_then(e), 2020, 5).unwrap();
        assert_eq!(r(56.0).reduction_pct, 44.0);
        assert_eq!(r(128.0).reduction_pct, -28.0);
        assert_eq!(r(100.0).reduction_pct, 0.0);
        assert_eq!(r(56.0).window_mean, 100.0);
    }

    #[test]
    fn missing_event_year() {
        let y: YearSeries = (2015..2020).map(|yr| (yr, 100.0)).collect();
        assert_eq!(
            reduction_pct("A", Variety::Gold, &y, 2020, 5).unwrap_err(),
            ImpactError::MissingYears(vec![2020])
        );
    }

    fn impact(variety: Variety, reduction: f64) -> YieldImpact {
        YieldImpact {
            farm_id: format!("f{reduction}"),
            variety,
            event_year: 2023,
            window_size: 5,
            window_mean: 100.0,
            reduction_pct: reduction,
        }
    }

    #[test]
    fn variety_means() {
        let stats = variety_stats(&[
            impact(Variety::Gold, 22.0),
            impact(Variety::Gold, 21.27 * 2.0 - 22.0),
        ]);
        assert_eq!(stats.len(), 1);
        assert_eq!(stats[0].variety, Variety::Gold);
        assert!((stats[0].mean_reduction_pct - 21.27).abs() < 1e-12);
        assert_eq!(stats[0].n_farms, 2);

        let single = variety_stats(&[impact(Variety::Hayward, 35.0)]);
        assert_eq!(
            (single[0].mean_reduction_pct, single[0].min, single[0].max),
            (35.0, 35.0, 35.0)
        );
    }

    #[test]
    fn counterexamples() {
        let all = [
            impact(Variety::Gold, 44.0),
            impact(Variety::Gold, -28.0),
            impact(Variety::Hayward, 3.0),
        ];
        let ce = find_counterexamples(&all, 0.0);
        assert_eq!(ce.len(), 1);
        assert_eq!(ce[0].reduction_pct, -28.0);
        let ce = find_counterexamples(&all, 5.0);
        assert_eq!(
            ce.iter().map(|i| i.reduction_pct).collect::<Vec<_>>(),
            vec![-28.0, 3.0]
        );
        assert!(find_counterexamples(&all[..1], 0.0).is_empty());
    }

    #[test]
    fn constant_history_is_window_invariant() {
        let mut y: YearSeries = (2010..2020).map(|yr| (yr, 250.0)).collect();
        y.insert(2020, 200.0);
        let t = window_sensitivity(&y, 2020, &SENSITIVITY_WINDOWS).unwrap();
        assert_eq!(t.cells.len(), 6);
        assert!(t.cells.iter().all(|c| c.reduction_pct == Some(20.0)));
        assert_eq!(t.mean_reduction_pct, Some(20.0));
    }

    #[test]
    fn linear_trend_orders_windows() {
        // 90, 95, 100, 105, 110 then 80; hand arithmetic:
        // w=2: mean 107.5 -> 25.58 %, w=3: 105 -> 23.81 %, w=4: 102.5 -> 21.95 %,
        // w=5: 100 -> 20 %.
        let mut y = years(&[(2015, 90.0), (2016, 95.0), (2017, 100.0), (2018, 105.0), (2019, 110.0)]);
        y.insert(2020, 80.0);
        let t = window_sensitivity(&y, 2020, &SENSITIVITY_WINDOWS).unwrap();
        let feasible: Vec<f64> = t.cells.iter().filter_map(|c| c.reduction_pct).collect();
        assert_eq!(feasible.len(), 4);
        assert!((feasible[0] - 100.0 * 27.5 / 107.5).abs() < 1e-12);
        assert_eq!(feasible[3], 20.0);
        assert!(feasible.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(t.cells[4].missing_years, Some(vec![2014]));
        assert_eq!(t.cells[5].missing_years, Some(vec![2013, 2014]));
    }

    #[test]
    fn sensitivity_group_shape() {
        let mut y: YearSeries = (2010..2020).map(|yr| (yr, 100.0)).collect();
        y.insert(2020, 90.0);
        let t = window_sensitivity(&y, 2020, &SENSITIVITY_WINDOWS).unwrap();
        let g = sensitivity_group("FROST", &SENSITIVITY_WINDOWS, &[t.clone(), t]);
        assert_eq!(g.bars.len(), 6);
        assert!(g.bars.iter().all(|b| b.1 == Some(10.0) && b.2 == 2));
        assert_eq!(g.group_mean, Some(10.0));
        let mut buf = Vec::new();
        write_sensitivity_csv(&mut buf, &[g]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    proptest! {
        #[test]
        fn scale_invariance(
            hist in prop::collection::vec(1.0f64..1000.0, 5),
            event in 0.0f64..2000.0,
            lambda in 0.01f64..100.0,
        ) {
            let mut y: YearSeries = hist.iter().enumerate().map(|(i, &v)| (2015 + i as i32, v)).collect();
            y.insert(2020, event);
            let scaled: YearSeries = y.iter().map(|(&k, &v)| (k, v * lambda)).collect();
            let a = reduction_pct("f", Variety::Gold, &y, 2020, 5).unwrap().reduction_pct;
            let b = reduction_pct("f", Variety::Gold, &scaled, 2020, 5).unwrap().reduction_pct;
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{} vs {}", a, b);
        }

        #[test]
        fn translation_changes_reduction(
            hist in prop::collection::vec(10.0f64..1000.0, 5),
            event in 0.0f64..2000.0,
            shift in 1.0f64..500.0,
        ) {
            let mut y: YearSeries = hist.iter().enumerate().map(|(i, &v)| (2015 + i as i32, v)).collect();
            y.insert(2020, event);
            let a = reduction_pct("f", Variety::Gold, &y, 2020, 5).unwrap();
            prop_assume!(a.reduction_pct.abs() > 1e-6);
            let shifted: YearSeries = y.iter().map(|(&k, &v)| (k, v + shift)).collect();
            let b = reduction_pct("f", Variety::Gold, &shifted, 2020, 5).unwrap();
            prop_assert!((a.reduction_pct - b.reduction_pct).abs() > 1e-9);
        }

        #[test]
        fn stats_bounded(reductions in prop::collection::vec((-50.0f64..80.0, any::<bool>()), 1..40)) {
            let impacts: Vec<_> = reductions
                .iter()
                .map(|&(r, gold)| impact(if gold { Variety::Gold } else { Variety::Hayward }, r))
                .collect();
            let stats = variety_stats(&impacts);
            prop_assert_eq!(stats.iter().map(|s| s.n_farms).sum::<usize>(), impacts.len());
            for s in stats {
                prop_assert!(s.min <= s.mean_reduction_pct + 1e-9 && s.mean_reduction_pct <= s.max + 1e-9);
            }
        }
    }
}

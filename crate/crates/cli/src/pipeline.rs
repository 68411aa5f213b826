//! Stage functions shared by the subcommands. Each writes its artifacts
//! through [`Outputs`] and returns what later stages need.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use serde::Serialize;

use climpact::alignment::{self, frost_panel, AlignmentMetrics, KIND_VARIABLE_SIDES};
use climpact::iforest::{
    default_grid, detect_series, tune_contamination, ForestError, SeriesReport, Side,
};
use climpact::impact::{
    find_counterexamples, reduction_pct, sensitivity_group, variety_stats, window_sensitivity,
    write_impacts_csv, write_sensitivity_csv, VarietyStats, YieldImpact, IMPACT_CSV_HEADER,
    SENSITIVITY_WINDOWS,
};
use climpact::ingest::{
    self, EventKind, ExtremeEvent, FarmYieldRecord, IngestError, StationData, Variable, Variety,
};
use climpact::preprocess::{
    aggregate_monthly, forward_fill, series_from_observations, AggregateMode, ClimateSeries,
    GapReport, YearMonth,
};
use climpact::spatial::{match_farms, SpatialError};
use climpact::spi::{classify_drought, compute_spi, SpiSeries, SPI_CSV_HEADER};
use climpact::synth::{self, SynthConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::Outputs;

/// Days shown either side of an event in the panel files.
pub const PANEL_MARGIN_DAYS: u64 = 14;

fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Station ids end up in file names; keep them portable.
fn file_stem(station_id: &str) -> String {
    station_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn ingest_error(path: &Path, e: IngestError) -> CliError {
    match e {
        IngestError::Io(io) => CliError::io(path, io),
        other => CliError::input(path, other),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn load_climate(path: &Path, out: &mut Outputs) -> Result<StationData, CliError> {
    let data = ingest::parse_station_csv(open(path)?).map_err(|e| ingest_error(path, e))?;
    out.record_input("climate", path)?;
    Ok(data)
}

pub fn load_yields(path: &Path, out: &mut Outputs) -> Result<Vec<FarmYieldRecord>, CliError> {
    let records = ingest::parse_yield_csv(open(path)?).map_err(|e| ingest_error(path, e))?;
    out.record_input("yields", path)?;
    Ok(records)
}

pub fn load_events(path: &Path, out: &mut Outputs) -> Result<Vec<ExtremeEvent>, CliError> {
    let events = ingest::parse_event_csv(open(path)?).map_err(|e| ingest_error(path, e))?;
    out.record_input("events", path)?;
    Ok(events)
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    stations: usize,
    observations: usize,
    missing_observations: usize,
    series: usize,
    farms: Option<usize>,
    yield_records: Option<usize>,
    events: Option<usize>,
    farms_beyond_15km: Vec<String>,
}

const LINK_VARIABLES: [Variable; 3] = [Variable::RainMm, Variable::TmaxC, Variable::TminC];

/// Validation summary plus farm-station links for the event indicator
/// variables.
pub fn ingest_summary(
    data: &StationData,
    yields: Option<&[FarmYieldRecord]>,
    events: Option<&[ExtremeEvent]>,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let mut far = BTreeSet::new();
    if let Some(yields) = yields {
        let farms = ingest::farms(yields);
        let mut links = Vec::new();
        for variable in LINK_VARIABLES {
            match match_farms(&farms, &data.stations, variable) {
                Ok(l) => links.extend(l.into_iter().map(|l| (variable, l))),
                Err(SpatialError::NoStationForVariable(v)) => {
                    out.note(format!("ingest: no station offers {v}"))
                }
                Err(e) => return Err(CliError::infeasible(e)),
            }
        }
        far.extend(links.iter().filter(|(_, l)| l.beyond_15km).map(|(_, l)| l.farm_id.clone()));
        out.write_with("ingest/links.csv", |buf| {
            let mut w = csv_writer(buf);
            w.write_record([
                "farm_id",
                "variable",
                "station_id",
                "distance_km",
                "within_10km",
                "beyond_15km",
            ])
            .map_err(io)?;
            for (variable, l) in &links {
                w.write_record([
                    l.farm_id.as_str(),
                    variable.as_str(),
                    &l.station_id,
                    &format!("{:.3}", l.distance_km),
                    &l.within_10km.to_string(),
                    &l.beyond_15km.to_string(),
                ])
                .map_err(io)?;
            }
            w.flush()
        })?;
    }
    let series: BTreeSet<(&str, Variable)> = data
        .observations
        .iter()
        .map(|o| (o.station_id.as_str(), o.variable))
        .collect();
    let summary = IngestSummary {
        stations: data.stations.len(),
        observations: data.observations.len(),
        missing_observations: data.observations.iter().filter(|o| o.value.is_none()).count(),
        series: series.len(),
        farms: yields.map(|y| ingest::farms(y).len()),
        yield_records: yields.map(<[_]>::len),
        events: events.map(<[_]>::len),
        farms_beyond_15km: far.into_iter().collect(),
    };
    out.write_json("ingest/summary.json", &summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapEntry {
    pub station_id: String,
    pub variable: Variable,
    pub missing_before: usize,
    pub residual: GapReport,
}

/// Forward-fills every station-variable series and records the residual
/// gaps in the manifest.
pub fn clean(
    data: &StationData,
    max_gap_days: usize,
    out: &mut Outputs,
) -> Result<Vec<ClimateSeries>, CliError> {
    let mut cleaned = Vec::new();
    let mut gaps = Vec::new();
    for series in series_from_observations(&data.observations) {
        let missing_before = series.values.iter().filter(|v| v.is_none()).count();
        let (filled, residual) =
            forward_fill(&series, max_gap_days).map_err(|e| CliError::Usage(e.to_string()))?;
        gaps.push(GapEntry {
            station_id: series.station_id.clone(),
            variable: series.variable,
            missing_before,
            residual,
        });
        cleaned.push(filled);
    }
    out.detail("gaps", &gaps);
    Ok(cleaned)
}

#[derive(Debug, Serialize)]
struct TuneEntry {
    station_id: String,
    variable: Variable,
    best_contamination: f64,
    f1: f64,
    grid: Vec<(f64, f64)>,
}

pub fn detect(
    config: &RunConfig,
    cleaned: &[ClimateSeries],
    events: Option<&[ExtremeEvent]>,
    out: &mut Outputs,
) -> Result<Vec<SeriesReport>, CliError> {
    let catalog = match (config.tune, events) {
        (true, None) => return Err(CliError::Usage("--tune needs --events".into())),
        (true, Some(e)) => Some(e),
        (false, _) => None,
    };
    let mut reports = Vec::new();
    let mut tuning = Vec::new();
    for series in cleaned {
        let label = format!("{}/{}", series.station_id, series.variable);
        let tunable = !alignment::kinds_for(series.variable).is_empty();
        let result = match catalog {
            Some(catalog) if tunable => tune_contamination(
                series,
                &config.forest,
                catalog,
                &default_grid(),
                config.tolerance_days,
            )
            .map(|t| {
                let f1 = t
                    .points
                    .iter()
                    .find(|p| p.contamination == t.best)
                    .map_or(0.0, |p| p.f1);
                tuning.push(TuneEntry {
                    station_id: series.station_id.clone(),
                    variable: series.variable,
                    best_contamination: t.best,
                    f1,
                    grid: t.points.iter().map(|p| (p.contamination, p.f1)).collect(),
                });
                t.report
            }),
            _ => detect_series(series, &config.forest),
        };
        match result {
            Ok(report) => {
                let rel = format!(
                    "detect/{}_{}.csv",
                    file_stem(&series.station_id),
                    series.variable
                );
                out.write_with(&rel, |buf| report.write_csv(buf))?;
                reports.push(report);
            }
            Err(ForestError::TooFewRows(n)) => {
                out.note(format!("detect {label}: skipped, {n} scorable days"))
            }
            Err(e) => return Err(CliError::infeasible(format!("detect {label}: {e}"))),
        }
    }
    if reports.is_empty() {
        return Err(CliError::infeasible("no series had enough days to score"));
    }
    if catalog.is_some() {
        out.write_json("detect/tuning.json", &tuning)?;
    }
    Ok(reports)
}

fn overlaps_month(e: &ExtremeEvent, month: YearMonth) -> bool {
    let first = month.first_day();
    let last = month.plus(1).first_day().pred_opt().unwrap_or(first);
    e.start_date <= last && e.end_date >= first
}

pub fn spi(
    config: &RunConfig,
    cleaned: &[ClimateSeries],
    events: Option<&[ExtremeEvent]>,
    out: &mut Outputs,
) -> Result<Vec<SpiSeries>, CliError> {
    let mut computed = Vec::new();
    let mut first_error = None;
    for series in cleaned.iter().filter(|s| s.variable == Variable::RainMm) {
        let result = aggregate_monthly(series, AggregateMode::Sum)
            .map_err(|e| e.to_string())
            .and_then(|agg| {
                compute_spi(&series.station_id, &agg.series, config.timescale)
                    .map(|s| (s, agg))
                    .map_err(|e| e.to_string())
            });
        match result {
            Ok(pair) => computed.push(pair),
            Err(e) => {
                let msg = format!("spi {}: {e}", series.station_id);
                out.note(msg.clone());
                first_error.get_or_insert(msg);
            }
        }
    }
    if computed.is_empty() {
        return Err(CliError::infeasible(
            first_error.unwrap_or_else(|| "no RAIN_MM series".into()),
        ));
    }

    let k = config.timescale;
    out.write_with(&format!("spi/spi_k{k}.csv"), |buf| {
        let mut w = csv_writer(buf);
        w.write_record(SPI_CSV_HEADER).map_err(io)?;
        for (s, _) in &computed {
            s.write_rows(&mut w).map_err(io)?;
        }
        w.flush()
    })?;

    let droughts: Vec<&ExtremeEvent> = events
        .unwrap_or(&[])
        .iter()
        .filter(|e| e.kind == EventKind::Drought)
        .collect();
    out.write_with("spi/panel_drought.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record([
            "station_id",
            "month",
            "rain_mm",
            "spi",
            "drought_class",
            "drought_event",
        ])
        .map_err(io)?;
        for (s, agg) in &computed {
            for (i, rain) in agg.series.values.iter().enumerate() {
                let month = agg.series.month_at(i);
                let spi = s.values.get(i).copied().flatten();
                let in_event = droughts
                    .iter()
                    .any(|e| e.applies_to_station(&s.station_id) && overlaps_month(e, month));
                w.write_record([
                    s.station_id.clone(),
                    month.to_string(),
                    rain.map(|v| format!("{v:.2}")).unwrap_or_default(),
                    spi.map(|v| v.to_string()).unwrap_or_default(),
                    spi.map(|v| classify_drought(v).to_string()).unwrap_or_default(),
                    in_event.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()
    })?;
    Ok(computed.into_iter().map(|(s, _)| s).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct PairMetrics {
    pub event_kind: EventKind,
    pub variable: Variable,
    pub pooled: AlignmentMetrics,
    pub stations: BTreeMap<String, AlignmentMetrics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignSummary {
    pub tolerance_days: u32,
    pub contamination: f64,
    pub pairs: Vec<PairMetrics>,
}

/// Event days of `kind` at `station_id`, widened by the panel margin.
fn panel_window(events: &[ExtremeEvent], kind: EventKind, station_id: &str) -> Vec<(NaiveDate, NaiveDate)> {
    let margin = Days::new(PANEL_MARGIN_DAYS);
    events
        .iter()
        .filter(|e| e.kind == kind && e.applies_to_station(station_id))
        .map(|e| {
            (
                e.start_date.checked_sub_days(margin).unwrap_or(e.start_date),
                e.end_date.checked_add_days(margin).unwrap_or(e.end_date),
            )
        })
        .collect()
}

fn in_windows(windows: &[(NaiveDate, NaiveDate)], date: NaiveDate) -> bool {
    windows.iter().any(|&(a, b)| a <= date && date <= b)
}

fn in_event(events: &[ExtremeEvent], kind: EventKind, station_id: &str, date: NaiveDate) -> bool {
    events
        .iter()
        .any(|e| e.kind == kind && e.applies_to_station(station_id) && e.contains(date))
}

fn side_str(side: Side) -> &'static str {
    match side {
        Side::Low => "low",
        Side::Median => "median",
        Side::High => "high",
    }
}

fn write_series_panel(
    out: &mut Outputs,
    rel: &str,
    kind: EventKind,
    variables: &[Variable],
    reports: &[SeriesReport],
    events: &[ExtremeEvent],
) -> Result<(), CliError> {
    out.write_with(rel, |buf| {
        let mut w = csv_writer(buf);
        w.write_record([
            "station_id",
            "date",
            "variable",
            "value",
            "score",
            "flag",
            "side",
            "in_event",
        ])
        .map_err(io)?;
        for report in reports.iter().filter(|r| variables.contains(&r.variable)) {
            let windows = panel_window(events, kind, &report.station_id);
            for row in report.rows.iter().filter(|r| in_windows(&windows, r.date)) {
                w.write_record([
                    report.station_id.as_str(),
                    &row.date.to_string(),
                    report.variable.as_str(),
                    &row.value.to_string(),
                    &row.score.to_string(),
                    &row.flag.to_string(),
                    side_str(report.side(row)),
                    &in_event(events, kind, &report.station_id, row.date).to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()
    })
}

fn write_frost_panel(
    out: &mut Outputs,
    reports: &[SeriesReport],
    events: &[ExtremeEvent],
) -> Result<(), CliError> {
    let stations: BTreeSet<&str> = reports.iter().map(|r| r.station_id.as_str()).collect();
    let mut panels = Vec::new();
    for station in stations {
        let windows = panel_window(events, EventKind::Frost, station);
        if windows.is_empty() {
            continue;
        }
        match frost_panel(station, reports) {
            Ok(p) => panels.push((p, windows)),
            Err(e) => out.note(format!("frost panel: {e}")),
        }
    }
    out.write_with("align/panel_frost.csv", |buf| {
        let mut w = csv_writer(buf);
        let mut header = alignment::FROST_PANEL_HEADER.to_vec();
        header.push("in_event");
        w.write_record(&header).map_err(io)?;
        for (panel, windows) in &panels {
            for r in panel.rows.iter().filter(|r| in_windows(windows, r.date)) {
                w.write_record([
                    panel.station_id.clone(),
                    r.date.to_string(),
                    r.rh_pct.to_string(),
                    r.tmin_c.to_string(),
                    r.gust_ms.to_string(),
                    r.rh_flag.to_string(),
                    r.tmin_flag.to_string(),
                    r.gust_flag.to_string(),
                    r.frost_candidate.to_string(),
                    in_event(events, EventKind::Frost, &panel.station_id, r.date).to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush()
    })
}

pub fn align(
    config: &RunConfig,
    reports: &[SeriesReport],
    events: &[ExtremeEvent],
    out: &mut Outputs,
) -> Result<AlignSummary, CliError> {
    if events.is_empty() {
        return Err(CliError::infeasible("event catalog is empty"));
    }
    let kinds: BTreeSet<EventKind> = events.iter().map(|e| e.kind).collect();
    let mut pairs = Vec::new();
    for &(kind, variable, _) in KIND_VARIABLE_SIDES {
        if !kinds.contains(&kind) {
            continue;
        }
        let mut stations = BTreeMap::new();
        for r in reports.iter().filter(|r| r.variable == variable) {
            let m = alignment::align(r, events, kind, config.tolerance_days)
                .map_err(CliError::infeasible)?;
            stations.insert(r.station_id.clone(), m);
        }
        let parts: Vec<AlignmentMetrics> = stations.values().cloned().collect();
        match AlignmentMetrics::pooled(&parts) {
            Some(pooled) => pairs.push(PairMetrics {
                event_kind: kind,
                variable,
                pooled,
                stations,
            }),
            None => out.note(format!("align: no {variable} series for {kind}")),
        }
    }
    let summary = AlignSummary {
        tolerance_days: config.tolerance_days,
        contamination: config.forest.contamination,
        pairs,
    };
    out.write_json("align/metrics.json", &summary)?;

    write_series_panel(
        out,
        "align/panel_heatwave.csv",
        EventKind::Heatwave,
        &[Variable::TmaxC, Variable::TminC],
        reports,
        events,
    )?;
    write_series_panel(
        out,
        "align/panel_rainfall.csv",
        EventKind::Rainfall,
        &[Variable::RainMm],
        reports,
        events,
    )?;
    write_frost_panel(out, reports, events)?;
    Ok(summary)
}

/// Indicator used to link farms to stations for each event kind.
pub fn link_variable(kind: EventKind) -> Variable {
    KIND_VARIABLE_SIDES
        .iter()
        .find(|(k, _, _)| *k == kind)
        .map(|&(_, v, _)| v)
        .expect("every kind has an indicator")
}

#[derive(Debug, Clone, Serialize)]
pub struct KindImpact {
    pub event_kind: EventKind,
    pub window: usize,
    pub n_impacts: usize,
    /// Unweighted mean over every farm-variety impact of this kind.
    pub mean_reduction_pct: Option<f64>,
    pub varieties: Vec<VarietyStats>,
    pub counterexamples: usize,
}

pub fn impact(
    config: &RunConfig,
    data: &StationData,
    yields: &[FarmYieldRecord],
    events: &[ExtremeEvent],
    out: &mut Outputs,
) -> Result<Vec<KindImpact>, CliError> {
    let farms = ingest::farms(yields);
    let series = climpact::impact::yield_series(yields);
    let mut summaries = Vec::new();
    let mut groups = Vec::new();
    let mut counter_rows: Vec<(EventKind, YieldImpact)> = Vec::new();

    for &kind in EventKind::ALL {
        let of_kind: Vec<&ExtremeEvent> = events.iter().filter(|e| e.kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let variable = link_variable(kind);
        let links = match match_farms(&farms, &data.stations, variable) {
            Ok(l) => l,
            Err(SpatialError::NoStationForVariable(v)) => {
                out.note(format!("impact {kind}: no station offers {v}"));
                continue;
            }
            Err(e) => return Err(CliError::infeasible(e)),
        };
        let cases: BTreeSet<(String, i32)> = links
            .iter()
            .flat_map(|l| {
                of_kind
                    .iter()
                    .filter(|e| e.applies_to_station(&l.station_id))
                    .map(|e| (l.farm_id.clone(), e.impact_year()))
            })
            .collect();

        let mut impacts = Vec::new();
        let mut tables: BTreeMap<Variety, Vec<_>> = BTreeMap::new();
        for (farm_id, year) in &cases {
            for &variety in Variety::ALL {
                let Some(ys) = series.get(&(farm_id.clone(), variety)) else {
                    continue;
                };
                match reduction_pct(farm_id, variety, ys, *year, config.window) {
                    Ok(i) => impacts.push(i),
                    Err(e) => {
                        out.note(format!("impact {kind} {farm_id} {variety} {year}: {e}"));
                        continue;
                    }
                }
                if let Ok(t) = window_sensitivity(ys, *year, &SENSITIVITY_WINDOWS) {
                    tables.entry(variety).or_default().push(t);
                }
            }
        }
        out.write_with(&format!("impact/impacts_{kind}.csv"), |buf| {
            write_impacts_csv(buf, &impacts)
        })?;
        for (variety, t) in &tables {
            groups.push(sensitivity_group(
                &format!("{kind}_{variety}"),
                &SENSITIVITY_WINDOWS,
                t,
            ));
        }
        let counter = find_counterexamples(&impacts, config.counterexample_threshold);
        let mean = (!impacts.is_empty()).then(|| {
            impacts.iter().map(|i| i.reduction_pct).sum::<f64>() / impacts.len() as f64
        });
        summaries.push(KindImpact {
            event_kind: kind,
            window: config.window,
            n_impacts: impacts.len(),
            mean_reduction_pct: mean,
            varieties: variety_stats(&impacts),
            counterexamples: counter.len(),
        });
        counter_rows.extend(counter.into_iter().map(|c| (kind, c)));
    }

    if summaries.iter().all(|s| s.n_impacts == 0) {
        return Err(CliError::infeasible(
            "no event year has a complete baseline window",
        ));
    }
    out.write_with("impact/sensitivity.csv", |buf| write_sensitivity_csv(buf, &groups))?;
    out.write_with("impact/counterexamples.csv", |buf| {
        let mut w = csv_writer(buf);
        let mut header = vec!["event_kind"];
        header.extend(IMPACT_CSV_HEADER);
        w.write_record(&header).map_err(io)?;
        for (kind, i) in &counter_rows {
            w.write_record([
                kind.as_str(),
                &i.farm_id,
                i.variety.as_str(),
                &i.event_year.to_string(),
                &i.window_size.to_string(),
                &i.window_mean.to_string(),
                &i.reduction_pct.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
    })?;
    out.write_json("impact/summary.json", &summaries)?;
    Ok(summaries)
}

pub struct SynthPaths {
    pub climate: PathBuf,
    pub yields: PathBuf,
    pub events: PathBuf,
}

/// Writes the demo corpus for `seed` under `synth/`.
pub fn synth(seed: u64, out: &mut Outputs) -> Result<SynthPaths, CliError> {
    let config = SynthConfig {
        rng_seed: seed,
        ..SynthConfig::demo()
    };
    let corpus = synth::generate(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    out.write_with("synth/climate.csv", |b| {
        ingest::write_station_csv(b, &corpus.climate.data)
    })?;
    out.write_with("synth/yields.csv", |b| ingest::write_yield_csv(b, &corpus.yields))?;
    out.write_with("synth/events.csv", |b| {
        ingest::write_event_csv(b, &corpus.climate.events)
    })?;
    out.write_with("synth/labels.csv", |b| {
        synth::write_labels_csv(b, &corpus.climate.labels)
    })?;
    out.write_json("synth/config.json", &config)?;
    Ok(SynthPaths {
        climate: out.path("synth/climate.csv"),
        yields: out.path("synth/yields.csv"),
        events: out.path("synth/events.csv"),
    })
}

//! Seeded synthetic corpora with known answers.
//!
//! Each station-variable series is an annual sinusoid plus Gaussian noise:
//!
//! ```text
//! value(day) = mean + amplitude * sin(2π * doy / 365.25 + phase) + N(0, σ)
//! ```
//!
//! where `doy` is the 1-based day of the year. Injected events then perturb
//! the series in place, and every station-day-variable they change is
//! recorded as a label. Yields are a per farm-variety base level with mild
//! year noise, multiplied by a response factor in event years.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::iforest::{tree_seed, FeatureMatrix};
use crate::ingest::{
    ClimateObservation, EventKind, ExtremeEvent, FarmYieldRecord, GeoPoint, Severity, Station,
    StationData, Variable, Variety, STATION_SCOPE_PREFIX,
};
use crate::preprocess::{MonthlySeries, YearMonth};

/// Seed of the documented demo corpus.
pub const DEMO_SEED: u64 = 20_240_601;

/// Stream offsets keep climate and yield draws independent.
const YIELD_STREAM: u64 = 0x5969_656c_6473;
const PLACEMENT_STREAM: u64 = 0x506c_6163_6521;

const KM_PER_DEGREE: f64 = 111.195;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
}

fn invalid(reason: impl Into<String>) -> SynthError {
    SynthError::ConfigInvalid(reason.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub variable: Variable,
    pub mean: f64,
    pub amplitude: f64,
    pub noise_sd: f64,
    /// Radians added to the seasonal angle.
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub kind: EventKind,
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Station indices, 0-based.
    pub stations: Vec<usize>,
    pub intensity: f64,
    pub severity: Severity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseFactor {
    pub kind: EventKind,
    pub variety: Variety,
    pub factor: f64,
}

/// Yield multipliers applied in event years. Pairs not listed use 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResponseFactors(pub Vec<ResponseFactor>);

impl Default for ResponseFactors {
    fn default() -> Self {
        use EventKind::*;
        use Variety::*;
        let f = |kind, variety, factor| ResponseFactor {
            kind,
            variety,
            factor,
        };
        ResponseFactors(vec![
            f(Frost, Gold, 0.73),
            f(Frost, Hayward, 0.65),
            f(Rainfall, Gold, 0.78),
            f(Rainfall, Hayward, 0.78),
            f(Drought, Gold, 0.95),
            f(Drought, Hayward, 0.67),
            f(Heatwave, Gold, 1.15),
            f(Heatwave, Hayward, 1.00),
        ])
    }
}

impl ResponseFactors {
    pub fn factor(&self, kind: EventKind, variety: Variety) -> f64 {
        self.0
            .iter()
            .find(|r| r.kind == kind && r.variety == variety)
            .map_or(1.0, |r| r.factor)
    }

    /// Reduction percentage implied by the factors, averaged over varieties.
    pub fn expected_reduction_pct(&self, kind: EventKind) -> f64 {
        let r: Vec<f64> = Variety::ALL
            .iter()
            .map(|&v| 100.0 * (1.0 - self.factor(kind, v)))
            .collect();
        r.iter().sum::<f64>() / r.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rng_seed: u64,
    pub n_stations: usize,
    pub n_farms: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub baselines: Vec<Baseline>,
    pub injected_events: Vec<InjectedEvent>,
    /// South-west corner of the station grid.
    pub origin: GeoPoint,
    pub station_spacing_km: f64,
    /// Farms nearer than this to their station, except the far ones.
    pub farm_radius_km: f64,
    /// Trailing farms placed 16 to 18 km from their station.
    pub n_far_farms: usize,
    pub base_yield: f64,
    /// Relative standard deviation of year-to-year yield noise.
    pub yield_noise: f64,
    pub response: ResponseFactors,
}

impl SynthConfig {
    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.first_year, 1, 1).expect("valid year")
    }

    pub fn last_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.last_year, 12, 31).expect("valid year")
    }

    pub fn station_id(index: usize) -> String {
        format!("s{:02}", index + 1)
    }

    pub fn farm_id(index: usize) -> String {
        format!("f{:03}", index + 1)
    }

    pub fn baseline(&self, variable: Variable) -> Option<&Baseline> {
        self.baselines.iter().find(|b| b.variable == variable)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_stations == 0 {
            return Err(invalid("n_stations must be positive"));
        }
        if self.first_year > self.last_year {
            return Err(invalid("first_year after last_year"));
        }
        if NaiveDate::from_ymd_opt(self.first_year, 1, 1).is_none()
            || NaiveDate::from_ymd_opt(self.last_year, 12, 31).is_none()
        {
            return Err(invalid("years out of calendar range"));
        }
        if self.n_far_farms > self.n_farms {
            return Err(invalid("more far farms than farms"));
        }
        if !(self.farm_radius_km > 0.0 && self.farm_radius_km < 10.0) {
            return Err(invalid("farm_radius_km must be in (0, 10)"));
        }
        // Far farms sit up to 18 km out and must stay nearest their own station.
        if !(self.station_spacing_km > 40.0) {
            return Err(invalid("station_spacing_km must exceed 40"));
        }
        if !(self.base_yield > 0.0) || !(self.yield_noise >= 0.0) {
            return Err(invalid("base_yield must be positive, yield_noise non-negative"));
        }
        let mut seen = BTreeSet::new();
        for b in &self.baselines {
            if !seen.insert(b.variable) {
                return Err(invalid(format!("duplicate baseline for {}", b.variable)));
            }
            if !(b.noise_sd >= 0.0) || !b.mean.is_finite() || !b.amplitude.is_finite() {
                return Err(invalid(format!("bad baseline for {}", b.variable)));
            }
        }
        for (i, e) in self.injected_events.iter().enumerate() {
            if !(e.intensity > 0.0) {
                return Err(invalid(format!("event {i}: intensity must be positive")));
            }
            if e.start > e.end || e.start < self.first_day() || e.end > self.last_day() {
                return Err(invalid(format!("event {i}: span outside configured years")));
            }
            if let Some(&s) = e.stations.iter().find(|&&s| s >= self.n_stations) {
                return Err(invalid(format!("event {i}: station index {s} out of range")));
            }
            let frost = e.kind == EventKind::Frost;
            if frost != (e.severity == Severity::Present) {
                return Err(invalid(format!("event {i}: severity {} on {}", e.severity, e.kind)));
            }
        }
        Ok(())
    }

    /// Catalog entries for the injected events, scoped to their stations.
    pub fn event_catalog(&self) -> Vec<ExtremeEvent> {
        self.injected_events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let ids: Vec<String> = e.stations.iter().map(|&s| Self::station_id(s)).collect();
                ExtremeEvent {
                    event_id: format!("e{:02}", i + 1),
                    kind: e.kind,
                    start_date: e.start,
                    end_date: e.end,
                    severity: e.severity,
                    region_hint: format!("{STATION_SCOPE_PREFIX}{}", ids.join(";")),
                }
            })
            .collect()
    }

    /// Documented demo: 10 stations, 50 farms, 2012 to 2023, one event per
    /// kind on its own pair of stations.
    pub fn demo() -> Self {
        let ymd = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
        let event = |kind, start, end, stations: [usize; 2], intensity, severity| InjectedEvent {
            kind,
            start,
            end,
            stations: stations.to_vec(),
            intensity,
            severity,
        };
        SynthConfig {
            rng_seed: DEMO_SEED,
            n_stations: 10,
            n_farms: 50,
            first_year: 2012,
            last_year: 2023,
            baselines: default_baselines(),
            injected_events: vec![
                event(
                    EventKind::Drought,
                    ymd(2019, 11, 1),
                    ymd(2020, 2, 29),
                    [0, 1],
                    0.8,
                    Severity::Severe,
                ),
                event(
                    EventKind::Heatwave,
                    ymd(2021, 1, 10),
                    ymd(2021, 1, 24),
                    [2, 3],
                    8.0,
                    Severity::Extreme,
                ),
                event(
                    EventKind::Rainfall,
                    ymd(2022, 2, 12),
                    ymd(2022, 2, 15),
                    [4, 5],
                    8.0,
                    Severity::Extreme,
                ),
                event(
                    EventKind::Frost,
                    ymd(2019, 9, 20),
                    ymd(2019, 9, 23),
                    [6, 7],
                    4.0,
                    Severity::Present,
                ),
            ],
            origin: GeoPoint::new(-38.2, 175.6),
            station_spacing_km: 55.0,
            farm_radius_km: 8.0,
            n_far_farms: 3,
            base_yield: 100.0,
            yield_noise: 0.02,
            response: ResponseFactors::default(),
        }
    }
}

/// Southern-hemisphere seasonality: temperatures peak in mid January.
pub fn default_baselines() -> Vec<Baseline> {
    let summer = PI / 2.0 - 2.0 * PI * 15.0 / 365.25;
    let winter = summer + PI;
    let b = |variable, mean, amplitude, noise_sd, phase| Baseline {
        variable,
        mean,
        amplitude,
        noise_sd,
        phase,
    };
    vec![
        b(Variable::TmaxC, 19.0, 5.0, 2.0, summer),
        b(Variable::TminC, 8.0, 4.0, 2.0, summer),
        b(Variable::RainMm, 3.5, 1.0, 3.0, winter),
        b(Variable::RhPct, 78.0, 6.0, 5.0, winter),
        b(Variable::GustMs, 11.0, 2.0, 3.0, winter),
        b(Variable::RadiationMjm2, 15.0, 8.0, 3.0, summer),
    ]
}

fn seasonal(b: &Baseline, date: NaiveDate) -> f64 {
    let doy = date.ordinal() as f64;
    b.mean + b.amplitude * (2.0 * PI * doy / 365.25 + b.phase).sin()
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Keeps values inside the ranges ingest accepts.
fn physical(variable: Variable, v: f64) -> f64 {
    match variable {
        Variable::RainMm | Variable::GustMs | Variable::RadiationMjm2 => v.max(0.0),
        Variable::RhPct => v.clamp(0.0, 100.0),
        _ => v,
    }
}

/// Station `i` on a grid five wide, `spacing` km apart.
pub fn station_location(config: &SynthConfig, index: usize) -> GeoPoint {
    let (row, col) = ((index / 5) as f64, (index % 5) as f64);
    let lat = config.origin.latitude + row * config.station_spacing_km / KM_PER_DEGREE;
    let lon = config.origin.longitude
        + col * config.station_spacing_km / (KM_PER_DEGREE * lat.to_radians().cos());
    GeoPoint::new(lat, lon)
}

fn dates(config: &SynthConfig) -> Vec<NaiveDate> {
    config
        .first_day()
        .iter_days()
        .take_while(|d| *d <= config.last_day())
        .collect()
}

/// Per station, per variable: one value per day in `dates`.
type Grid = Vec<BTreeMap<Variable, Vec<f64>>>;

fn baseline_grid(config: &SynthConfig, dates: &[NaiveDate]) -> Grid {
    (0..config.n_stations)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.rng_seed, s));
            let mut series = BTreeMap::new();
            for b in &config.baselines {
                let noise = Normal::new(0.0, b.noise_sd).expect("validated sd");
                let values: Vec<f64> = dates
                    .iter()
                    .map(|&d| round2(physical(b.variable, seasonal(b, d) + noise.sample(&mut rng))))
                    .collect();
                series.insert(b.variable, values);
            }
            // Tmin above Tmax would be rejected on ingest.
            if let (Some(tmax), Some(mut tmin)) = (
                series.get(&Variable::TmaxC).cloned(),
                series.remove(&Variable::TminC),
            ) {
                for (lo, hi) in tmin.iter_mut().zip(&tmax) {
                    *lo = lo.min(*hi);
                }
                series.insert(Variable::TminC, tmin);
            }
            series
        })
        .collect()
}

fn apply_event(config: &SynthConfig, e: &InjectedEvent, dates: &[NaiveDate], grid: &mut Grid) {
    let from = (e.start - dates[0]).num_days() as usize;
    let to = (e.end - dates[0]).num_days() as usize;
    let sd = |v| config.baseline(v).map_or(1.0, |b| b.noise_sd);
    let rain_sd = sd(Variable::RainMm);
    for &s in &e.stations {
        let station = &mut grid[s];
        let mut edit = |variable: Variable, f: &dyn Fn(f64) -> f64| {
            if let Some(values) = station.get_mut(&variable) {
                for v in &mut values[from..=to] {
                    *v = round2(physical(variable, f(*v)));
                }
            }
        };
        let x = e.intensity;
        match e.kind {
            EventKind::Drought => {
                edit(Variable::RainMm, &|v| v * (1.0 - x).max(0.0));
                edit(Variable::RhPct, &|v| v - 20.0 * x);
            }
            EventKind::Heatwave => {
                edit(Variable::TmaxC, &|v| v + x);
                edit(Variable::TminC, &|v| v + x);
            }
            EventKind::Rainfall => edit(Variable::RainMm, &|v| v + x * rain_sd),
            EventKind::Frost => {
                edit(Variable::TminC, &|v| v.min(-x));
                edit(Variable::GustMs, &|v| v * 0.3);
                edit(Variable::RhPct, &|v| v + 15.0);
            }
        }
    }
}

/// A station-day-variable changed by an injected event.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub station_id: String,
    pub date: NaiveDate,
    pub variable: Variable,
    pub kind: EventKind,
}

pub const LABEL_CSV_HEADER: [&str; 4] = ["station_id", "date", "variable", "kind"];

pub fn write_labels_csv<W: Write>(sink: W, labels: &[Label]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e);
    w.write_record(LABEL_CSV_HEADER).map_err(io)?;
    for l in labels {
        w.write_record([
            l.station_id.as_str(),
            &l.date.to_string(),
            l.variable.as_str(),
            l.kind.as_str(),
        ])
        .map_err(io)?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClimate {
    pub data: StationData,
    pub labels: Vec<Label>,
    pub events: Vec<ExtremeEvent>,
}

fn to_station_data(config: &SynthConfig, dates: &[NaiveDate], grid: &Grid) -> StationData {
    let mut stations = Vec::with_capacity(grid.len());
    let mut observations = Vec::new();
    for (s, series) in grid.iter().enumerate() {
        let station_id = SynthConfig::station_id(s);
        stations.push(Station {
            station_id: station_id.clone(),
            location: station_location(config, s),
            variables_available: series.keys().copied().collect(),
        });
        for (i, &date) in dates.iter().enumerate() {
            for (&variable, values) in series {
                observations.push(ClimateObservation {
                    station_id: station_id.clone(),
                    date,
                    variable,
                    value: Some(values[i]),
                });
            }
        }
    }
    StationData {
        stations,
        observations,
    }
}

/// The corpus before any event is applied.
pub fn generate_baseline(config: &SynthConfig) -> Result<StationData, SynthError> {
    config.validate()?;
    let dates = dates(config);
    Ok(to_station_data(config, &dates, &baseline_grid(config, &dates)))
}

pub fn generate_climate(config: &SynthConfig) -> Result<SynthClimate, SynthError> {
    config.validate()?;
    let dates = dates(config);
    let base = baseline_grid(config, &dates);
    let mut grid = base.clone();
    let mut labels = BTreeSet::new();
    for e in &config.injected_events {
        let before = grid.clone();
        apply_event(config, e, &dates, &mut grid);
        for &s in &e.stations {
            for (variable, values) in &grid[s] {
                for (i, v) in values.iter().enumerate() {
                    if *v != before[s][variable][i] {
                        labels.insert(Label {
                            station_id: SynthConfig::station_id(s),
                            date: dates[i],
                            variable: *variable,
                            kind: e.kind,
                        });
                    }
                }
            }
        }
    }
    // An event can undo another's change; keep labels only where the final
    // value differs from the baseline.
    let labels = labels
        .into_iter()
        .filter(|l| {
            let s = l.station_id[1..].parse::<usize>().unwrap() - 1;
            let i = (l.date - dates[0]).num_days() as usize;
            grid[s][&l.variable][i] != base[s][&l.variable][i]
        })
        .collect();
    Ok(SynthClimate {
        data: to_station_data(config, &dates, &grid),
        labels,
        events: config.event_catalog(),
    })
}

/// Offsets a point by `km` along `bearing` radians (flat-earth, fine at farm
/// scale).
fn offset(p: GeoPoint, km: f64, bearing: f64) -> GeoPoint {
    let dlat = km * bearing.cos() / KM_PER_DEGREE;
    let dlon = km * bearing.sin() / (KM_PER_DEGREE * p.latitude.to_radians().cos());
    GeoPoint::new(p.latitude + dlat, p.longitude + dlon)
}

/// Home station index of each farm and its location. Farms cycle through the
/// stations; the last `n_far_farms` sit 16 to 18 km out, the rest within
/// `farm_radius_km`.
pub fn farm_sites(config: &SynthConfig) -> Vec<(usize, GeoPoint)> {
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.rng_seed, 0) ^ PLACEMENT_STREAM);
    (0..config.n_farms)
        .map(|f| {
            let station = f % config.n_stations;
            let far = f >= config.n_farms - config.n_far_farms;
            let km = if far {
                rng.random_range(16.0..18.0)
            } else {
                rng.random_range(0.5..config.farm_radius_km)
            };
            let bearing = rng.random_range(0.0..2.0 * PI);
            (station, offset(station_location(config, station), km, bearing))
        })
        .collect()
}

/// Yield records for every farm, variety and year. `events` decides which
/// years are event years for each farm's home station.
pub fn generate_yields(
    config: &SynthConfig,
    events: &[ExtremeEvent],
) -> Result<Vec<FarmYieldRecord>, SynthError> {
    config.validate()?;
    let mut out = Vec::new();
    for (f, (station, location)) in farm_sites(config).into_iter().enumerate() {
        let station_id = SynthConfig::station_id(station);
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(config.rng_seed ^ YIELD_STREAM, f));
        let noise = Normal::new(0.0, config.yield_noise).expect("validated noise");
        for variety in Variety::ALL {
            let base = config.base_yield * rng.random_range(0.8..1.2);
            for year in config.first_year..=config.last_year {
                let mut factor = 1.0 + noise.sample(&mut rng);
                for e in events {
                    if e.impact_year() == year && e.applies_to_station(&station_id) {
                        factor *= config.response.factor(e.kind, *variety);
                    }
                }
                out.push(FarmYieldRecord {
                    farm_id: SynthConfig::farm_id(f),
                    location,
                    variety: *variety,
                    year,
                    yield_value: round2((base * factor).max(0.0)),
                });
            }
        }
    }
    Ok(out)
}

/// A full synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub climate: SynthClimate,
    pub yields: Vec<FarmYieldRecord>,
}

pub fn generate(config: &SynthConfig) -> Result<Corpus, SynthError> {
    let climate = generate_climate(config)?;
    let yields = generate_yields(config, &climate.events)?;
    Ok(Corpus { climate, yields })
}

/// `n_inliers` points from a standard normal cluster in `dims` dimensions,
/// followed by `n_outliers` points at `distance` cluster widths in random
/// directions. Returns the matrix and the outlier row indices.
pub fn cluster_with_outliers(
    seed: u64,
    n_inliers: usize,
    n_outliers: usize,
    dims: usize,
    distance: f64,
) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data: Vec<f64> = (0..n_inliers * dims).map(|_| normal.sample(&mut rng)).collect();
    for _ in 0..n_outliers {
        let dir: Vec<f64> = (0..dims).map(|_| normal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        data.extend(dir.iter().map(|v| v / norm * distance));
    }
    let matrix = FeatureMatrix::new(data, dims).expect("finite fixture");
    (matrix, (n_inliers..n_inliers + n_outliers).collect())
}

/// Monthly precipitation totals drawn from a gamma distribution, starting in
/// January of `first_year`.
pub fn gamma_monthly_rain(
    seed: u64,
    first_year: i32,
    years: usize,
    shape: f64,
    scale: f64,
) -> MonthlySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(shape, scale).expect("positive gamma parameters");
    let values: Vec<f64> = (0..years * 12).map(|_| gamma.sample(&mut rng)).collect();
    MonthlySeries::from_values(YearMonth::new(first_year, 1), &values)
}

/// Day offset of `date` from the start of the config, for callers that index
/// generated series.
pub fn day_index(config: &SynthConfig, date: NaiveDate) -> Option<usize> {
    let i = (date - config.first_day()).num_days();
    (i >= 0 && date <= config.last_day()).then_some(i as usize)
}

/// Days `start..=end` as an iterator, for span arithmetic in tests and tools.
pub fn span_days(start: NaiveDate, end: NaiveDate) -> impl Iterator<Item = NaiveDate> {
    start.iter_days().take_while(move |d| *d <= end)
}

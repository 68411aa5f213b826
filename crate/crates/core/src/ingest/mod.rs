//! Parsing and validation of the three input corpora.
//!
//! All three formats are UTF-8 CSV with a mandatory header row, ISO-8601
//! dates and `\n` or `\r\n` line endings:
//!
//! | corpus  | header                                    |
//! |---------|-------------------------------------------|
//! | climate | `station_id,date,variable,value`          |
//! | yields  | `farm_id,lat,lon,variety,year,yield`      |
//! | events  | `event_id,kind,start,end,severity,region` |
//!
//! The climate file is long-format: one variable per row. Station coordinates
//! travel in the same file as sidecar rows with an empty `date` cell and the
//! pseudo-variables `LAT` / `LON`:
//!
//! ```text
//! station_id,date,variable,value
//! s1,,LAT,-37.7
//! s1,,LON,176.1
//! s1,2020-02-01,RAIN_MM,0.0
//! s1,2020-02-02,RAIN_MM,
//! ```
//!
//! Parsers fail on the first bad row with a positioned error. Successful
//! results are sorted by each record type's uniqueness key, so row order in
//! the file never affects the returned collections.

mod model;
mod write;

pub use model::*;
pub use write::{write_event_csv, write_station_csv, write_yield_csv};

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::NaiveDate;

pub const STATION_HEADER: [&str; 4] = ["station_id", "date", "variable", "value"];
pub const YIELD_HEADER: [&str; 6] = ["farm_id", "lat", "lon", "variety", "year", "yield"];
pub const EVENT_HEADER: [&str; 6] = ["event_id", "kind", "start", "end", "severity", "region"];

const LAT_TOKEN: &str = "LAT";
const LON_TOKEN: &str = "LON";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: duplicate observation for {station_id} {date} {variable}")]
    DuplicateObservation {
        line: u64,
        station_id: String,
        date: NaiveDate,
        variable: Variable,
    },
    #[error("station {station_id}: TMAX_C below TMIN_C on {date}")]
    TemperatureInversion { station_id: String, date: NaiveDate },
    #[error("station {0} has observations but no LAT/LON rows")]
    MissingCoordinates(String),
    #[error("line {line}: duplicate yield for {farm_id} {variety} {year}")]
    DuplicateYield {
        line: u64,
        farm_id: String,
        variety: Variety,
        year: i32,
    },
    #[error("line {line}: negative yield {value}")]
    NegativeYield { line: u64, value: f64 },
    #[error("line {line}: farm {farm_id} located inconsistently across rows")]
    InconsistentFarmLocation { line: u64, farm_id: String },
    #[error("line {line}: event {event_id} starts after it ends")]
    InvertedSpan { line: u64, event_id: String },
    #[error("line {line}: frost event {event_id} carries graded severity {severity}")]
    SeverityOnFrost {
        line: u64,
        event_id: String,
        severity: Severity,
    },
    #[error("line {line}: duplicate event id {event_id}")]
    DuplicateEvent { line: u64, event_id: String },
}

impl IngestError {
    /// Line number of the offending row, when the error is positioned.
    pub fn line(&self) -> Option<u64> {
        match self {
            IngestError::MalformedRow { line, .. }
            | IngestError::DuplicateObservation { line, .. }
            | IngestError::DuplicateYield { line, .. }
            | IngestError::NegativeYield { line, .. }
            | IngestError::InconsistentFarmLocation { line, .. }
            | IngestError::InvertedSpan { line, .. }
            | IngestError::SeverityOnFrost { line, .. }
            | IngestError::DuplicateEvent { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Stations plus their observations, sorted by `(station_id, date, variable)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StationData {
    pub stations: Vec<Station>,
    pub observations: Vec<ClimateObservation>,
}

impl StationData {
    pub fn station(&self, station_id: &str) -> Option<&Station> {
        self.stations
            .binary_search_by(|s| s.station_id.as_str().cmp(station_id))
            .ok()
            .map(|i| &self.stations[i])
    }
}

/// Iterates data rows of a headed CSV stream, yielding `(line, record)`.
struct Rows {
    reader: csv::Reader<std::io::Cursor<String>>,
    width: usize,
}

impl Rows {
    fn open<R: Read>(mut source: R, header: &[&str]) -> Result<Self, IngestError> {
        // csv reports CRLF records one line early, so normalise endings first.
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        if text.contains('\r') {
            text = text.replace("\r\n", "\n");
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(std::io::Cursor::new(text));
        let mut first = csv::StringRecord::new();
        let found = match reader.read_record(&mut first) {
            Ok(true) => first.iter().collect::<Vec<_>>().join(","),
            Ok(false) => String::new(),
            Err(e) => return Err(csv_error(e, 1)),
        };
        let found = found.trim_start_matches('\u{feff}').to_string();
        let expected = header.join(",");
        if found != expected {
            return Err(IngestError::BadHeader { expected, found });
        }
        Ok(Rows {
            reader,
            width: header.len(),
        })
    }

    fn next_row(&mut self) -> Option<Result<(u64, csv::StringRecord), IngestError>> {
        let mut record = csv::StringRecord::new();
        match self.reader.read_record(&mut record) {
            Ok(false) => None,
            Ok(true) => {
                let line = record.position().map_or(0, |p| p.line());
                if record.len() != self.width {
                    return Some(Err(malformed(
                        line,
                        format!("expected {} fields, found {}", self.width, record.len()),
                    )));
                }
                Some(Ok((line, record)))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                Some(Err(csv_error(e, line)))
            }
        }
    }
}

fn csv_error(e: csv::Error, line: u64) -> IngestError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => IngestError::Io(io),
            _ => unreachable!(),
        }
    } else {
        malformed(line, e.to_string())
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_date(line: u64, cell: &str) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(cell, "%Y-%m-%d")
        .map_err(|e| malformed(line, format!("bad date `{cell}`: {e}")))
}

fn parse_real(line: u64, what: &str, cell: &str) -> Result<f64, IngestError> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(malformed(line, format!("bad {what} `{cell}`"))),
    }
}

fn parse_token<T>(line: u64, cell: &str) -> Result<T, IngestError>
where
    T: std::str::FromStr<Err = UnknownToken>,
{
    cell.parse::<T>().map_err(|e| malformed(line, e.to_string()))
}

fn parse_point(line: u64, lat: &str, lon: &str) -> Result<GeoPoint, IngestError> {
    let p = GeoPoint::new(
        parse_real(line, "latitude", lat)?,
        parse_real(line, "longitude", lon)?,
    );
    if !p.in_bounds() {
        return Err(malformed(line, format!("coordinate ({lat}, {lon}) out of range")));
    }
    Ok(p)
}

fn check_id(line: u64, what: &str, cell: &str) -> Result<(), IngestError> {
    if cell.is_empty() {
        return Err(malformed(line, format!("empty {what}")));
    }
    Ok(())
}

/// Parses a long-format station climate CSV.
pub fn parse_station_csv<R: Read>(source: R) -> Result<StationData, IngestError> {
    let mut rows = Rows::open(source, &STATION_HEADER)?;
    let mut coords: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut obs: BTreeMap<(String, NaiveDate, Variable), Option<f64>> = BTreeMap::new();

    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let station_id = &rec[0];
        check_id(line, "station_id", station_id)?;

        if rec[1].is_empty() {
            // Sidecar coordinate row.
            let entry = coords.entry(station_id.to_string()).or_default();
            let slot = if rec[2].eq_ignore_ascii_case(LAT_TOKEN) {
                &mut entry.0
            } else if rec[2].eq_ignore_ascii_case(LON_TOKEN) {
                &mut entry.1
            } else {
                return Err(malformed(
                    line,
                    format!("row without date must be LAT or LON, found `{}`", &rec[2]),
                ));
            };
            if slot.is_some() {
                return Err(malformed(
                    line,
                    format!("repeated {} for station {station_id}", &rec[2]),
                ));
            }
            *slot = Some(parse_real(line, "coordinate", &rec[3])?);
            continue;
        }

        let date = parse_date(line, &rec[1])?;
        let variable: Variable = parse_token(line, &rec[2])?;
        let value = if rec[3].is_empty() {
            None
        } else {
            let v = parse_real(line, "value", &rec[3])?;
            variable.check_value(v).map_err(|r| malformed(line, r))?;
            Some(v)
        };
        let key = (station_id.to_string(), date, variable);
        if obs.contains_key(&key) {
            return Err(IngestError::DuplicateObservation {
                line,
                station_id: key.0,
                date,
                variable,
            });
        }
        obs.insert(key, value);
    }

    check_temperature_order(&obs)?;

    let mut available: BTreeMap<&str, BTreeSet<Variable>> = BTreeMap::new();
    for ((sid, _, var), value) in &obs {
        let set = available.entry(sid.as_str()).or_default();
        if value.is_some() {
            set.insert(*var);
        }
    }
    for sid in available.keys() {
        match coords.get(*sid) {
            Some((Some(_), Some(_))) => {}
            _ => return Err(IngestError::MissingCoordinates(sid.to_string())),
        }
    }

    let mut stations = Vec::with_capacity(coords.len());
    for (sid, (lat, lon)) in &coords {
        let (Some(lat), Some(lon)) = (lat, lon) else {
            return Err(IngestError::MissingCoordinates(sid.clone()));
        };
        let location = GeoPoint::new(*lat, *lon);
        if !location.in_bounds() {
            return Err(malformed(
                0,
                format!("station {sid} coordinate ({lat}, {lon}) out of range"),
            ));
        }
        stations.push(Station {
            station_id: sid.clone(),
            location,
            variables_available: available.get(sid.as_str()).cloned().unwrap_or_default(),
        });
    }

    let observations = obs
        .into_iter()
        .map(|((station_id, date, variable), value)| ClimateObservation {
            station_id,
            date,
            variable,
            value,
        })
        .collect();
    Ok(StationData {
        stations,
        observations,
    })
}

fn check_temperature_order(
    obs: &BTreeMap<(String, NaiveDate, Variable), Option<f64>>,
) -> Result<(), IngestError> {
    for ((sid, date, var), value) in obs {
        if *var != Variable::TmaxC {
            continue;
        }
        let Some(tmax) = value else { continue };
        let key = (sid.clone(), *date, Variable::TminC);
        if let Some(Some(tmin)) = obs.get(&key) {
            if tmax < tmin {
                return Err(IngestError::TemperatureInversion {
                    station_id: sid.clone(),
                    date: *date,
                });
            }
        }
    }
    Ok(())
}

/// Parses a farm yield CSV. Records come back sorted by `(farm_id, variety, year)`.
pub fn parse_yield_csv<R: Read>(source: R) -> Result<Vec<FarmYieldRecord>, IngestError> {
    let mut rows = Rows::open(source, &YIELD_HEADER)?;
    let mut records: BTreeMap<(String, Variety, i32), FarmYieldRecord> = BTreeMap::new();
    let mut locations: BTreeMap<String, GeoPoint> = BTreeMap::new();

    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let farm_id = &rec[0];
        check_id(line, "farm_id", farm_id)?;
        let location = parse_point(line, &rec[1], &rec[2])?;
        let variety: Variety = parse_token(line, &rec[3])?;
        let year: i32 = rec[4]
            .parse()
            .map_err(|_| malformed(line, format!("bad year `{}`", &rec[4])))?;
        let yield_value = parse_real(line, "yield", &rec[5])?;
        if yield_value < 0.0 {
            return Err(IngestError::NegativeYield {
                line,
                value: yield_value,
            });
        }

        match locations.get(farm_id) {
            Some(p) if *p != location => {
                return Err(IngestError::InconsistentFarmLocation {
                    line,
                    farm_id: farm_id.to_string(),
                })
            }
            Some(_) => {}
            None => {
                locations.insert(farm_id.to_string(), location);
            }
        }

        let key = (farm_id.to_string(), variety, year);
        if records.contains_key(&key) {
            return Err(IngestError::DuplicateYield {
                line,
                farm_id: key.0,
                variety,
                year,
            });
        }
        records.insert(
            key,
            FarmYieldRecord {
                farm_id: farm_id.to_string(),
                location,
                variety,
                year,
                yield_value,
            },
        );
    }
    Ok(records.into_values().collect())
}

/// Distinct farms in a set of yield records, sorted by id.
pub fn farms(records: &[FarmYieldRecord]) -> Vec<Farm> {
    let mut out: BTreeMap<&str, GeoPoint> = BTreeMap::new();
    for r in records {
        out.entry(r.farm_id.as_str()).or_insert(r.location);
    }
    out.into_iter()
        .map(|(id, location)| Farm {
            farm_id: id.to_string(),
            location,
        })
        .collect()
}

/// Parses an extreme-event catalog CSV. Events come back sorted by id.
pub fn parse_event_csv<R: Read>(source: R) -> Result<Vec<ExtremeEvent>, IngestError> {
    let mut rows = Rows::open(source, &EVENT_HEADER)?;
    let mut events: BTreeMap<String, ExtremeEvent> = BTreeMap::new();

    while let Some(row) = rows.next_row() {
        let (line, rec) = row?;
        let event_id = &rec[0];
        check_id(line, "event_id", event_id)?;
        let kind: EventKind = parse_token(line, &rec[1])?;
        let start_date = parse_date(line, &rec[2])?;
        let end_date = parse_date(line, &rec[3])?;
        if start_date > end_date {
            return Err(IngestError::InvertedSpan {
                line,
                event_id: event_id.to_string(),
            });
        }
        let severity = match (kind, rec[4].is_empty()) {
            (EventKind::Frost, true) => Severity::Present,
            (EventKind::Frost, false) => match parse_token(line, &rec[4])? {
                Severity::Present => Severity::Present,
                graded => {
                    return Err(IngestError::SeverityOnFrost {
                        line,
                        event_id: event_id.to_string(),
                        severity: graded,
                    })
                }
            },
            (_, true) => return Err(malformed(line, format!("{kind} event needs a severity"))),
            (_, false) => match parse_token(line, &rec[4])? {
                Severity::Present => {
                    return Err(malformed(
                        line,
                        format!("PRESENT severity is reserved for FROST, found on {kind}"),
                    ))
                }
                graded => graded,
            },
        };
        if events.contains_key(event_id) {
            return Err(IngestError::DuplicateEvent {
                line,
                event_id: event_id.to_string(),
            });
        }
        events.insert(
            event_id.to_string(),
            ExtremeEvent {
                event_id: event_id.to_string(),
                kind,
                start_date,
                end_date,
                severity,
                region_hint: rec[5].to_string(),
            },
        );
    }
    Ok(events.into_values().collect())
}

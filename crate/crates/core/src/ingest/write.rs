//! Canonical serialization of the ingest formats.
//!
//! Output is sorted by each record's key, uses `\n` line endings and Rust's
//! shortest round-trip float formatting.

use std::io::Write;

use super::{
    ExtremeEvent, FarmYieldRecord, StationData, EVENT_HEADER, LAT_TOKEN, LON_TOKEN,
    STATION_HEADER, YIELD_HEADER,
};

fn writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink)
}

fn flush<W: Write>(w: csv::Writer<W>) -> std::io::Result<()> {
    w.into_inner()
        .map_err(|e| std::io::Error::other(e.to_string()))?
        .flush()
}

fn io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_station_csv<W: Write>(sink: W, data: &StationData) -> std::io::Result<()> {
    let mut w = writer(sink);
    w.write_record(STATION_HEADER).map_err(io)?;
    let mut stations: Vec<_> = data.stations.iter().collect();
    stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
    for s in stations {
        w.write_record([
            s.station_id.as_str(),
            "",
            LAT_TOKEN,
            &s.location.latitude.to_string(),
        ])
        .map_err(io)?;
        w.write_record([
            s.station_id.as_str(),
            "",
            LON_TOKEN,
            &s.location.longitude.to_string(),
        ])
        .map_err(io)?;
    }
    let mut obs: Vec<_> = data.observations.iter().collect();
    obs.sort_by(|a, b| {
        (&a.station_id, a.date, a.variable).cmp(&(&b.station_id, b.date, b.variable))
    });
    for o in obs {
        let value = o.value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            o.station_id.as_str(),
            &o.date.to_string(),
            o.variable.as_str(),
            &value,
        ])
        .map_err(io)?;
    }
    flush(w)
}

pub fn write_yield_csv<W: Write>(sink: W, records: &[FarmYieldRecord]) -> std::io::Result<()> {
    let mut w = writer(sink);
    w.write_record(YIELD_HEADER).map_err(io)?;
    let mut recs: Vec<_> = records.iter().collect();
    recs.sort_by(|a, b| (&a.farm_id, a.variety, a.year).cmp(&(&b.farm_id, b.variety, b.year)));
    for r in recs {
        w.write_record([
            r.farm_id.as_str(),
            &r.location.latitude.to_string(),
            &r.location.longitude.to_string(),
            r.variety.as_str(),
            &r.year.to_string(),
            &r.yield_value.to_string(),
        ])
        .map_err(io)?;
    }
    flush(w)
}

pub fn write_event_csv<W: Write>(sink: W, events: &[ExtremeEvent]) -> std::io::Result<()> {
    let mut w = writer(sink);
    w.write_record(EVENT_HEADER).map_err(io)?;
    let mut evs: Vec<_> = events.iter().collect();
    evs.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    for e in evs {
        w.write_record([
            e.event_id.as_str(),
            e.kind.as_str(),
            &e.start_date.to_string(),
            &e.end_date.to_string(),
            e.severity.as_str(),
            &e.region_hint,
        ])
        .map_err(io)?;
    }
    flush(w)
}

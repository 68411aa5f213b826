//! Parse and write are inverse on canonical files.

use chrono::{Days, NaiveDate};
use proptest::prelude::*;

use climpact::ingest::{
    self, ClimateObservation, EventKind, ExtremeEvent, FarmYieldRecord, GeoPoint, Severity,
    Station, StationData, Variable, Variety,
};

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()
}

fn value_for(variable: Variable) -> BoxedStrategy<Option<f64>> {
    let range = match variable {
        Variable::RainMm => 0.0..200.0,
        Variable::RhPct => 0.0..100.0,
        // Disjoint so a day never has Tmin above Tmax.
        Variable::TminC => -30.0..5.0,
        Variable::TmaxC => 10.0..45.0,
        _ => 0.0..60.0,
    };
    prop_oneof![9 => range.prop_map(Some), 1 => Just(None)].boxed()
}

fn station_data() -> impl Strategy<Value = StationData> {
    (1usize..4, 1usize..40, proptest::sample::subsequence(Variable::ALL.to_vec(), 1..=3))
        .prop_flat_map(|(n_stations, n_days, variables)| {
            let values = variables
                .iter()
                .map(|&v| proptest::collection::vec(value_for(v), n_stations * n_days))
                .collect::<Vec<_>>();
            let coords = proptest::collection::vec((-60.0..60.0f64, -179.0..179.0f64), n_stations);
            (Just((n_stations, n_days, variables)), values, coords)
        })
        .prop_map(|((n_stations, n_days, variables), values, coords)| {
            let mut observations = Vec::new();
            for (vi, &variable) in variables.iter().enumerate() {
                for s in 0..n_stations {
                    for d in 0..n_days {
                        observations.push(ClimateObservation {
                            station_id: format!("s{s}"),
                            date: day0() + Days::new(d as u64),
                            variable,
                            value: values[vi][s * n_days + d],
                        });
                    }
                }
            }
            let stations = coords
                .into_iter()
                .enumerate()
                .map(|(s, (lat, lon))| Station {
                    station_id: format!("s{s}"),
                    location: GeoPoint::new(lat, lon),
                    variables_available: variables.iter().copied().collect(),
                })
                .collect();
            StationData {
                stations,
                observations,
            }
        })
}

fn write<T>(f: impl Fn(&mut Vec<u8>, &T) -> std::io::Result<()>, x: &T) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf, x).unwrap();
    buf
}

fn sorted_obs(data: &StationData) -> Vec<(String, NaiveDate, Variable, Option<u64>)> {
    let mut v: Vec<_> = data
        .observations
        .iter()
        .map(|o| (o.station_id.clone(), o.date, o.variable, o.value.map(f64::to_bits)))
        .collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn station_csv_round_trips(data in station_data()) {
        let bytes = write(|b, d| ingest::write_station_csv(b, d), &data);
        let parsed = ingest::parse_station_csv(bytes.as_slice()).unwrap();
        prop_assert_eq!(sorted_obs(&parsed), sorted_obs(&data));
        for s in &data.stations {
            let p = parsed.station(&s.station_id).unwrap();
            prop_assert_eq!(p.location, s.location);
        }
        let again = write(|b, d| ingest::write_station_csv(b, d), &parsed);
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn yield_csv_round_trips(values in proptest::collection::vec(0.0..1e4f64, 1..30)) {
        let records: Vec<FarmYieldRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &y)| FarmYieldRecord {
                farm_id: format!("f{}", i / 8),
                location: GeoPoint::new(-38.0 + (i / 8) as f64 * 0.01, 176.0),
                variety: if i % 2 == 0 { Variety::Gold } else { Variety::Hayward },
                year: 2010 + (i % 8 / 2) as i32,
                yield_value: y,
            })
            .collect();
        let bytes = write(|b, r: &Vec<FarmYieldRecord>| ingest::write_yield_csv(b, r), &records);
        let parsed = ingest::parse_yield_csv(bytes.as_slice()).unwrap();
        let mut expected = records.clone();
        expected.sort_by(|a, b| (&a.farm_id, a.variety, a.year).cmp(&(&b.farm_id, b.variety, b.year)));
        prop_assert_eq!(&parsed, &expected);
    }

    #[test]
    fn event_csv_round_trips(spans in proptest::collection::vec((0u64..3000, 0u64..120), 1..12)) {
        let events: Vec<ExtremeEvent> = spans
            .iter()
            .enumerate()
            .map(|(i, &(start, len))| ExtremeEvent {
                event_id: format!("e{i:02}"),
                kind: EventKind::ALL[i % 4],
                start_date: day0() + Days::new(start),
                end_date: day0() + Days::new(start + len),
                severity: if i % 4 == 3 { Severity::Present } else { Severity::ALL[i % 3] },
                region_hint: if i % 2 == 0 { "stations:s01;s02".into() } else { String::new() },
            })
            .collect();
        let bytes = write(|b, e: &Vec<ExtremeEvent>| ingest::write_event_csv(b, e), &events);
        let parsed = ingest::parse_event_csv(bytes.as_slice()).unwrap();
        prop_assert_eq!(parsed, events);
    }
}

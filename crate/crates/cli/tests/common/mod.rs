#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use climpact::ingest;
use climpact::synth::{self, SynthConfig};

pub fn climpact(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_climpact"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub struct Corpus {
    pub climate: PathBuf,
    pub yields: PathBuf,
    pub events: PathBuf,
}

/// Six stations over eleven years, with the demo events that touch them.
pub fn small_corpus(dir: &Path) -> Corpus {
    let mut config = SynthConfig::demo();
    config.n_stations = 6;
    config.n_farms = 12;
    config.n_far_farms = 1;
    config.first_year = 2012;
    config.last_year = 2022;
    config.injected_events.retain(|e| e.stations.iter().all(|&s| s < 6));
    let corpus = synth::generate(&config).unwrap();

    let paths = Corpus {
        climate: dir.join("climate.csv"),
        yields: dir.join("yields.csv"),
        events: dir.join("events.csv"),
    };
    let mut buf = Vec::new();
    ingest::write_station_csv(&mut buf, &corpus.climate.data).unwrap();
    fs::write(&paths.climate, &buf).unwrap();
    buf.clear();
    ingest::write_yield_csv(&mut buf, &corpus.yields).unwrap();
    fs::write(&paths.yields, &buf).unwrap();
    buf.clear();
    ingest::write_event_csv(&mut buf, &corpus.climate.events).unwrap();
    fs::write(&paths.events, &buf).unwrap();
    paths
}

pub fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

//! Library-level chain on a small synthetic corpus.

use climpact::alignment::{align, AlignmentMetrics};
use climpact::iforest::{detect_series, ForestConfig};
use climpact::impact::{reduction_pct, yield_series, DEFAULT_WINDOW};
use climpact::ingest::{EventKind, Variable};
use climpact::preprocess::{aggregate_monthly, forward_fill, series_from_observations, AggregateMode};
use climpact::spi::{classify_drought, compute_spi, DroughtClass};
use climpact::synth::{self, SynthConfig};

fn corpus() -> (SynthConfig, synth::Corpus) {
    let mut config = SynthConfig::demo();
    config.n_stations = 8;
    config.n_farms = 16;
    config.n_far_farms = 0;
    let corpus = synth::generate(&config).unwrap();
    (config, corpus)
}

#[test]
fn heatwave_is_found_and_drought_shows_in_spi() {
    let (_, corpus) = corpus();
    let events = &corpus.climate.events;
    let series = series_from_observations(&corpus.climate.data.observations);
    let config = ForestConfig::default().with_seed(1);

    let mut heat = Vec::new();
    for s in &series {
        let (filled, _) = forward_fill(s, 10).unwrap();
        if s.variable == Variable::TmaxC {
            let report = detect_series(&filled, &config).unwrap();
            heat.push(align(&report, events, EventKind::Heatwave, 1).unwrap());
        }
        if s.variable == Variable::RainMm && s.station_id == "s01" {
            let monthly = aggregate_monthly(&filled, AggregateMode::Sum).unwrap();
            let spi = compute_spi("s01", &monthly.series, 3).unwrap();
            let worst = spi
                .defined()
                .filter(|(m, _)| (m.year, m.month) >= (2019, 12) && (m.year, m.month) <= (2020, 3))
                .map(|(_, v)| v)
                .fold(f64::INFINITY, f64::min);
            assert!(classify_drought(worst) >= DroughtClass::Severe, "{worst}");
        }
    }
    let pooled = AlignmentMetrics::pooled(&heat).unwrap();
    assert!(pooled.recall >= 0.8, "{pooled:?}");
}

#[test]
fn frost_farms_lose_about_the_configured_share() {
    let (config, corpus) = corpus();
    let frost = corpus
        .climate
        .events
        .iter()
        .find(|e| e.kind == EventKind::Frost)
        .unwrap();
    let farm_station: std::collections::BTreeMap<String, String> = synth::farm_sites(&config)
        .into_iter()
        .enumerate()
        .map(|(i, (s, _))| (SynthConfig::farm_id(i), SynthConfig::station_id(s)))
        .collect();
    let mut losses = Vec::new();
    for ((farm, variety), ys) in yield_series(&corpus.yields) {
        if frost.applies_to_station(&farm_station[&farm]) {
            let r = reduction_pct(&farm, variety, &ys, frost.impact_year(), DEFAULT_WINDOW).unwrap();
            losses.push(r.reduction_pct);
        }
    }
    assert!(!losses.is_empty());
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let expected = config.response.expected_reduction_pct(EventKind::Frost);
    assert!((mean - expected).abs() <= 5.0, "{mean} vs {expected}");
}

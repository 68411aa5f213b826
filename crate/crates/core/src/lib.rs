//! Detecting extreme climate events in station records and measuring their
//! effect on orchard yields.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`ingest`] parses and writes the station, yield and event CSV formats.
//! - [`preprocess`] forward-fills short gaps and aggregates daily series to
//!   months.
//! - [`spatial`] links each farm to its nearest station offering a variable.
//! - [`iforest`] scores station-days with an isolation forest and flags the
//!   top fraction.
//! - [`spi`] computes the Standardised Precipitation Index.
//! - [`alignment`] compares flagged days with an event catalog.
//! - [`impact`] turns event years into yield reduction percentages.
//! - [`synth`] generates seeded corpora with known answers.
//!
//! ```
//! use climpact::iforest::{anomaly_score, expected_path_c};
//!
//! // A point isolated at the average depth scores exactly one half.
//! let n = 256;
//! assert_eq!(anomaly_score(expected_path_c(n), n), 0.5);
//! ```

pub mod alignment;
pub mod iforest;
pub mod impact;
pub mod ingest;
pub mod preprocess;
pub mod spatial;
pub mod spi;
pub mod synth;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Implements case-insensitive parsing and canonical (upper-case) display for
/// a fieldless token enum.
macro_rules! token_enum {
    ($name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownToken;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.trim();
                $(
                    if s.eq_ignore_ascii_case($token) {
                        return Ok($name::$variant);
                    }
                )+
                Err(UnknownToken {
                    kind: stringify!($name),
                    token: s.to_string(),
                })
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown {kind} token `{token}`")]
pub struct UnknownToken {
    pub kind: &'static str,
    pub token: String,
}

/// Observed daily climate variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variable {
    TmaxC,
    TminC,
    RainMm,
    RhPct,
    GustMs,
    #[serde(rename = "RADIATION_MJM2")]
    RadiationMjm2,
}

token_enum!(Variable {
    TmaxC => "TMAX_C",
    TminC => "TMIN_C",
    RainMm => "RAIN_MM",
    RhPct => "RH_PCT",
    GustMs => "GUST_MS",
    RadiationMjm2 => "RADIATION_MJM2",
});

impl Variable {
    /// Checks the physical range constraint for a present value.
    pub fn check_value(self, value: f64) -> Result<(), String> {
        match self {
            Variable::RainMm if value < 0.0 => Err(format!("negative rainfall {value}")),
            Variable::RhPct if !(0.0..=100.0).contains(&value) => {
                Err(format!("relative humidity {value} outside [0, 100]"))
            }
            _ => Ok(()),
        }
    }
}

/// Kiwifruit variety: Gold (GA) or Green/Hayward (HW).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variety {
    #[serde(rename = "GA")]
    Gold,
    #[serde(rename = "HW")]
    Hayward,
}

token_enum!(Variety {
    Gold => "GA",
    Hayward => "HW",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Drought,
    Heatwave,
    Rainfall,
    Frost,
}

token_enum!(EventKind {
    Drought => "DROUGHT",
    Heatwave => "HEATWAVE",
    Rainfall => "RAINFALL",
    Frost => "FROST",
});

/// Event severity. Frost is recorded as presence only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Moderate,
    Severe,
    Extreme,
    Present,
}

token_enum!(Severity {
    Moderate => "MODERATE",
    Severe => "SEVERE",
    Extreme => "EXTREME",
    Present => "PRESENT",
});

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Self {
        GeoPoint {
            latitude,
            longitude,
        }
    }

    pub fn in_bounds(&self) -> bool {
        (-90.0..=90.0).contains(&self.latitude) && (-180.0..=180.0).contains(&self.longitude)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub location: GeoPoint,
    /// Variables with at least one present observation.
    pub variables_available: BTreeSet<Variable>,
}

impl Station {
    pub fn offers(&self, variable: Variable) -> bool {
        self.variables_available.contains(&variable)
    }
}

/// One station-day value. `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimateObservation {
    pub station_id: String,
    pub date: NaiveDate,
    pub variable: Variable,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmYieldRecord {
    pub farm_id: String,
    pub location: GeoPoint,
    pub variety: Variety,
    pub year: i32,
    /// Unit-agnostic yield, passed through as read.
    pub yield_value: f64,
}

/// A farm location, deduplicated from yield records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Farm {
    pub farm_id: String,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremeEvent {
    pub event_id: String,
    pub kind: EventKind,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub severity: Severity,
    pub region_hint: String,
}

/// Prefix marking a `region_hint` that scopes an event to named stations,
/// e.g. `stations:s01;s02`.
pub const STATION_SCOPE_PREFIX: &str = "stations:";

impl ExtremeEvent {
    /// Inclusive length of the span in days.
    pub fn duration_days(&self) -> i64 {
        (self.end_date - self.start_date).num_days() + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start_date <= date && date <= self.end_date
    }

    /// Station ids this event is scoped to, or `None` when the region hint is
    /// free text (the event then applies everywhere).
    pub fn station_scope(&self) -> Option<BTreeSet<&str>> {
        let rest = self.region_hint.trim().strip_prefix(STATION_SCOPE_PREFIX)?;
        Some(
            rest.split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }

    pub fn applies_to_station(&self, station_id: &str) -> bool {
        self.station_scope()
            .is_none_or(|scope| scope.contains(station_id))
    }

    /// Yield season affected by the event: the calendar year in which it ends.
    pub fn impact_year(&self) -> i32 {
        use chrono::Datelike;
        self.end_date.year()
    }
}

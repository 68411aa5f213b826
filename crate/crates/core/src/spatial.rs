//! Farm to station matching by great-circle distance.

use serde::{Deserialize, Serialize};

use crate::ingest::{Farm, GeoPoint, Station, Variable};

/// Mean Earth radius used for all distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Typical matching radius.
pub const NEAR_RADIUS_KM: f64 = 10.0;
/// Links beyond this distance are kept but flagged.
pub const OUTER_RADIUS_KM: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpatialError {
    #[error("coordinate ({latitude}, {longitude}) out of range")]
    OutOfRangeCoordinate { latitude: f64, longitude: f64 },
    #[error("no station offers {0}")]
    NoStationForVariable(Variable),
}

fn check(p: GeoPoint) -> Result<(), SpatialError> {
    if p.in_bounds() {
        Ok(())
    } else {
        Err(SpatialError::OutOfRangeCoordinate {
            latitude: p.latitude,
            longitude: p.longitude,
        })
    }
}

/// Great-circle distance in kilometres on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> Result<f64, SpatialError> {
    check(a)?;
    check(b)?;
    let lat1 = a.latitude.to_radians();
    let lat2 = b.latitude.to_radians();
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (b.longitude - a.longitude).to_radians() / 2.0;
    let h = half_dlat.sin().powi(2) + lat1.cos() * lat2.cos() * half_dlon.sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarmStationLink {
    pub farm_id: String,
    pub station_id: String,
    pub distance_km: f64,
    pub within_10km: bool,
    pub beyond_15km: bool,
}

impl FarmStationLink {
    fn new(farm_id: &str, station_id: &str, distance_km: f64) -> Self {
        FarmStationLink {
            farm_id: farm_id.to_string(),
            station_id: station_id.to_string(),
            distance_km,
            within_10km: distance_km <= NEAR_RADIUS_KM,
            beyond_15km: distance_km > OUTER_RADIUS_KM,
        }
    }
}

/// Links every farm to its nearest station offering `required_variable`.
///
/// Equal distances go to the lexicographically smallest station id. Farms
/// beyond the outer radius are linked and flagged, never dropped. Output is
/// sorted by farm id.
pub fn match_farms(
    farms: &[Farm],
    stations: &[Station],
    required_variable: Variable,
) -> Result<Vec<FarmStationLink>, SpatialError> {
    let candidates: Vec<&Station> = stations
        .iter()
        .filter(|s| s.offers(required_variable))
        .collect();
    if candidates.is_empty() {
        return Err(SpatialError::NoStationForVariable(required_variable));
    }
    for s in &candidates {
        check(s.location)?;
    }

    let mut links = Vec::with_capacity(farms.len());
    for farm in farms {
        let mut best: Option<(f64, &str)> = None;
        for s in &candidates {
            let d = haversine_km(farm.location, s.location)?;
            let better = match best {
                None => true,
                Some((bd, bid)) => d < bd || (d == bd && s.station_id.as_str() < bid),
            };
            if better {
                best = Some((d, &s.station_id));
            }
        }
        let (d, sid) = best.expect("candidates nonempty");
        links.push(FarmStationLink::new(&farm.farm_id, sid, d));
    }
    links.sort_by(|a, b| a.farm_id.cmp(&b.farm_id));
    Ok(links)
}

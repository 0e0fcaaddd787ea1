use serde::{Deserialize, Serialize};

use super::GeomError;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeomError> {
        if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
            return Err(GeomError::OutOfRange(format!(
                "latitude {lat} not in [-90, 90]"
            )));
        }
        if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
            return Err(GeomError::OutOfRange(format!(
                "longitude {lon} not in [-180, 180]"
            )));
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LatLon, b: LatLon) -> Result<f64, GeomError> {
    let a = LatLon::new(a.lat, a.lon)?;
    let b = LatLon::new(b.lat, b.lon)?;
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = (b.lat - a.lat).to_radians();
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    Ok(2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ll(lat: f64, lon: f64) -> LatLon {
        LatLon { lat, lon }
    }

    #[test]
    fn known_distances() {
        assert_eq!(
            haversine_km(ll(30.25, 120.17), ll(30.25, 120.17)).unwrap(),
            0.0
        );
        let half = haversine_km(ll(0., 0.), ll(0., 180.)).unwrap();
        assert!((half - PI * 6371.0).abs() < 1e-9);
        assert!((half - 20015.1).abs() < 0.1);
        let quarter = haversine_km(ll(0., 0.), ll(0., 90.)).unwrap();
        assert!((quarter - 10007.5).abs() < 0.1);
    }

    #[test]
    fn out_of_range() {
        assert!(haversine_km(ll(95., 0.), ll(0., 0.)).is_err());
        assert!(haversine_km(ll(0., 0.), ll(0., -180.5)).is_err());
        assert!(haversine_km(ll(f64::NAN, 0.), ll(0., 0.)).is_err());
    }
}

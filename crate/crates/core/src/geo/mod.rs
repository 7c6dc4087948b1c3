//! Spherical-Earth geodesy: great-circle distance, ECEF conversion and
//! ground-to-satellite line-of-sight geometry.
//!
//! The Earth is a sphere of radius [`EARTH_RADIUS_KM`] everywhere in this
//! crate, for distances, altitudes and visibility alike.

mod orbit;
mod tle;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use orbit::{
    assign_planes, propagate, propagate_all, walker_delta, OrbitalElements, PlaneSlot, SatState,
    WalkerShell, STALE_EPOCH_SECONDS,
};
pub use tle::{format_tle, parse_tle, TleError, TleParse};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Standard gravitational parameter of the Earth, km^3/s^2.
pub const EARTH_MU_KM3_S2: f64 = 398_600.441_8;

/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

/// Speed of light in vacuum, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} is not finite")]
    Longitude(f64),
    #[error("invalid orbital elements for {sat_id}: {reason}")]
    InvalidElements { sat_id: String, reason: String },
}

/// A point on the sphere, in degrees.
///
/// Longitude is kept normalized to `[-180, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

impl GeoCoord {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self {
            lat,
            lon: normalize_lon(lon),
        })
    }

    /// Unit vector in an Earth-fixed frame.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (lat, lon) = (self.lat.to_radians(), self.lon.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    /// Earth-fixed cartesian position at `radius_km` from the centre.
    pub fn to_ecef(&self, radius_km: f64) -> [f64; 3] {
        let u = self.unit_vector();
        [u[0] * radius_km, u[1] * radius_km, u[2] * radius_km]
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let wrapped = (lon + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can land exactly on 360 for tiny negative inputs
    if wrapped >= 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

/// Great-circle distance on the sphere, km.
pub fn haversine_km(a: GeoCoord, b: GeoCoord) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub(crate) fn distance3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlantGeometry {
    pub slant_km: f64,
    pub elevation_deg: f64,
}

/// Line-of-sight distance from a ground point to a satellite and the
/// satellite's elevation above the local horizon.
pub fn slant_geometry(ground: GeoCoord, sat: &SatState) -> SlantGeometry {
    let up = ground.unit_vector();
    let g = ground.to_ecef(EARTH_RADIUS_KM);
    let s = sat.position.to_ecef(EARTH_RADIUS_KM + sat.altitude_km);
    let los = [s[0] - g[0], s[1] - g[1], s[2] - g[2]];
    let slant_km = distance3(s, g);
    let elevation_deg = if slant_km == 0.0 {
        90.0
    } else {
        (dot(los, up) / slant_km).clamp(-1.0, 1.0).asin().to_degrees()
    };
    SlantGeometry {
        slant_km,
        elevation_deg,
    }
}

/// Whether the straight segment between two satellites stays above
/// `EARTH_RADIUS_KM + clearance_km`.
pub fn line_of_sight_clear(a: &SatState, b: &SatState, clearance_km: f64) -> bool {
    let pa = a.position.to_ecef(EARTH_RADIUS_KM + a.altitude_km);
    let pb = b.position.to_ecef(EARTH_RADIUS_KM + b.altitude_km);
    let d = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
    let len2 = dot(d, d);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (-dot(pa, d) / len2).clamp(0.0, 1.0)
    };
    let closest = [pa[0] + t * d[0], pa[1] + t * d[1], pa[2] + t * d[2]];
    dot(closest, closest).sqrt() > EARTH_RADIUS_KM + clearance_km
}

/// Straight-line distance between two satellites, km.
pub fn sat_distance_km(a: &SatState, b: &SatState) -> f64 {
    distance3(
        a.position.to_ecef(EARTH_RADIUS_KM + a.altitude_km),
        b.position.to_ecef(EARTH_RADIUS_KM + b.altitude_km),
    )
}

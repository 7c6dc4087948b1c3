//! Empirical traffic-speed distributions.
//!
//! Baseline RTT samples are turned into speeds (round-trip route length over
//! RTT) and summarised by an ECDF over `n` equally spaced delimiters. A
//! speed is drawn by picking the delimiter whose cumulative frequency is
//! closest to a caller-supplied uniform number.
//!
//! Terrestrial speeds are bucketed by one-way great-circle distance; the
//! satellite ECDF is a single pooled distribution across all sites.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_km, GeoCoord, SPEED_OF_LIGHT_KM_S};

pub const DEFAULT_DELIMITERS: usize = 1000;
pub const DEFAULT_BUCKET_KM: f64 = 1000.0;
pub const DEFAULT_ORBIT_ALTITUDE_KM: f64 = 550.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpeedError {
    #[error("need at least 2 speed samples, got {0}")]
    InsufficientData(usize),
    #[error("need at least 2 delimiters, got {0}")]
    TooFewDelimiters(usize),
    #[error("speed {0} km/s is not a finite value in (0, c]")]
    InvalidSpeed(f64),
    #[error("{0} must be non-negative")]
    Domain(&'static str),
    #[error("bucket width must be positive, got {0}")]
    BucketWidth(f64),
    #[error("malformed ECDF: {0}")]
    Malformed(String),
}

/// Round-trip bent-pipe path length (client, satellite, ground station and
/// back) for a client `d_cg_km` from the station and an orbit at `h_km`,
/// assuming the satellite sits midway.
pub fn satellite_path_length_km(d_cg_km: f64, h_km: f64) -> Result<f64, SpeedError> {
    if !(d_cg_km >= 0.0) {
        return Err(SpeedError::Domain("client-station distance"));
    }
    if !(h_km >= 0.0) {
        return Err(SpeedError::Domain("orbit altitude"));
    }
    Ok(4.0 * ((d_cg_km / 2.0).powi(2) + h_km * h_km).sqrt())
}

/// Speed in km/s from a route length in km and an RTT in ms.
pub fn speed_km_s(route_len_km: f64, rtt_ms: f64) -> f64 {
    route_len_km / rtt_ms * 1000.0
}

#[derive(Deserialize)]
struct RawEcdf {
    delimiters: Vec<f64>,
    cum_freq: Vec<f64>,
    #[serde(default)]
    sample_count: usize,
}

/// Delimiters `δ_1 < … < δ_n` with cumulative frequencies `f_1 ≤ … ≤ f_n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEcdf")]
pub struct SpeedEcdf {
    delimiters: Vec<f64>,
    cum_freq: Vec<f64>,
    sample_count: usize,
}

impl TryFrom<RawEcdf> for SpeedEcdf {
    type Error = SpeedError;

    fn try_from(raw: RawEcdf) -> Result<Self, SpeedError> {
        SpeedEcdf::from_parts(raw.delimiters, raw.cum_freq, raw.sample_count)
    }
}

impl SpeedEcdf {
    pub fn from_parts(
        delimiters: Vec<f64>,
        cum_freq: Vec<f64>,
        sample_count: usize,
    ) -> Result<Self, SpeedError> {
        let bad = |m: &str| Err(SpeedError::Malformed(m.to_string()));
        if delimiters.is_empty() || delimiters.len() != cum_freq.len() {
            return bad("delimiter and frequency lists must be non-empty and equal length");
        }
        if let Some(&d) = delimiters
            .iter()
            .find(|d| !(d.is_finite() && **d > 0.0 && **d <= SPEED_OF_LIGHT_KM_S))
        {
            return Err(SpeedError::InvalidSpeed(d));
        }
        if delimiters.windows(2).any(|w| w[0] >= w[1]) {
            return bad("delimiters must be strictly increasing");
        }
        if cum_freq.iter().any(|f| !(0.0..=1.0).contains(f))
            || cum_freq.windows(2).any(|w| w[0] > w[1])
        {
            return bad("cumulative frequencies must be non-decreasing within [0, 1]");
        }
        if *cum_freq.last().unwrap() != 1.0 {
            return bad("last cumulative frequency must be 1");
        }
        Ok(Self {
            delimiters,
            cum_freq,
            sample_count,
        })
    }

    /// A point mass at `speed_km_s`.
    pub fn constant(speed_km_s: f64) -> Result<Self, SpeedError> {
        Self::from_parts(vec![speed_km_s], vec![1.0], 1)
    }

    pub fn delimiters(&self) -> &[f64] {
        &self.delimiters
    }

    pub fn cum_freq(&self) -> &[f64] {
        &self.cum_freq
    }

    /// Number of raw speed samples the ECDF was built from.
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Returns the delimiter whose cumulative frequency is nearest to `u`;
    /// ties go to the lower index.
    pub fn sample(&self, u: f64) -> f64 {
        let f = &self.cum_freq;
        let hi = f.partition_point(|&x| x < u);
        let lowest_with = |v: f64| f.partition_point(|&x| x < v);
        let pick = if hi == f.len() {
            lowest_with(f[hi - 1])
        } else if hi == 0 {
            0
        } else {
            let lo = lowest_with(f[hi - 1]);
            if u - f[lo] <= f[hi] - u {
                lo
            } else {
                hi
            }
        };
        self.delimiters[pick]
    }

    /// Cumulative frequency at `speed` (step function through the delimiters).
    pub fn cdf(&self, speed: f64) -> f64 {
        match self.delimiters.partition_point(|&d| d <= speed) {
            0 => 0.0,
            i => self.cum_freq[i - 1],
        }
    }
}

/// Free-function form of [`SpeedEcdf::sample`].
pub fn sample_speed(ecdf: &SpeedEcdf, u: f64) -> f64 {
    ecdf.sample(u)
}

/// Builds an ECDF over `n_delimiters` equally spaced speeds spanning the
/// sample range; `f_i` is the fraction of samples at or below `δ_i`.
pub fn build_ecdf(speeds: &[f64], n_delimiters: usize) -> Result<SpeedEcdf, SpeedError> {
    if speeds.len() < 2 {
        return Err(SpeedError::InsufficientData(speeds.len()));
    }
    if n_delimiters < 2 {
        return Err(SpeedError::TooFewDelimiters(n_delimiters));
    }
    if let Some(&s) = speeds
        .iter()
        .find(|s| !(s.is_finite() && **s > 0.0 && **s <= SPEED_OF_LIGHT_KM_S))
    {
        return Err(SpeedError::InvalidSpeed(s));
    }
    let mut sorted = speeds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let total = sorted.len() as f64;

    let mut delimiters: Vec<f64> = Vec::with_capacity(n_delimiters);
    if min == max {
        delimiters.push(max);
    } else {
        let span = max - min;
        for i in 0..n_delimiters {
            let d = if i + 1 == n_delimiters {
                max
            } else {
                min + span * i as f64 / (n_delimiters - 1) as f64
            };
            if delimiters.last().is_none_or(|&last| d > last) {
                delimiters.push(d);
            }
        }
    }
    let cum_freq = delimiters
        .iter()
        .map(|&d| sorted.partition_point(|&s| s <= d) as f64 / total)
        .collect();
    SpeedEcdf::from_parts(delimiters, cum_freq, sorted.len())
}

/// Terrestrial speeds bucketed by one-way distance `[k·w, (k+1)·w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketedSpeedModel {
    pub bucket_km: f64,
    pub buckets: BTreeMap<u32, SpeedEcdf>,
}

impl BucketedSpeedModel {
    pub fn new(bucket_km: f64) -> Result<Self, SpeedError> {
        if !(bucket_km.is_finite() && bucket_km > 0.0) {
            return Err(SpeedError::BucketWidth(bucket_km));
        }
        Ok(Self {
            bucket_km,
            buckets: BTreeMap::new(),
        })
    }

    /// A model where every distance samples the same ECDF.
    pub fn uniform(ecdf: SpeedEcdf) -> Self {
        Self {
            bucket_km: DEFAULT_BUCKET_KM,
            buckets: BTreeMap::from([(0, ecdf)]),
        }
    }

    pub fn bucket_index(&self, one_way_km: f64) -> u32 {
        (one_way_km.max(0.0) / self.bucket_km).floor() as u32
    }

    /// ECDF for a one-way distance: its own bucket when populated, otherwise
    /// the nearest populated bucket by index (ties toward the larger one).
    pub fn ecdf_for(&self, one_way_km: f64) -> Option<&SpeedEcdf> {
        let k = self.bucket_index(one_way_km);
        let below = self.buckets.range(..=k).next_back();
        let above = self.buckets.range(k..).next();
        match (below, above) {
            (Some((&b, eb)), Some((&a, ea))) => Some(if a - k <= k - b { ea } else { eb }),
            (Some((_, e)), None) | (None, Some((_, e))) => Some(e),
            (None, None) => None,
        }
    }

    /// ECDF used beyond the last populated bucket.
    pub fn fallback(&self) -> Option<&SpeedEcdf> {
        self.buckets.values().next_back()
    }

    pub fn sample(&self, one_way_km: f64, u: f64) -> Option<f64> {
        self.ecdf_for(one_way_km).map(|e| e.sample(u))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    Terrestrial,
    Satellite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSample {
    /// Round-trip route length.
    pub route_len_km: f64,
    pub rtt_ms: f64,
    pub kind: TransportKind,
}

impl BaselineSample {
    pub fn speed_km_s(&self) -> f64 {
        speed_km_s(self.route_len_km, self.rtt_ms)
    }
}

/// One row of the terrestrial baseline CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrestrialRow {
    pub src_lat: f64,
    pub src_lon: f64,
    pub dst_lat: f64,
    pub dst_lon: f64,
    pub rtt_ms: f64,
}

/// One row of the satellite baseline CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatelliteRow {
    pub site_id: String,
    pub route_len_km: f64,
    pub rtt_ms: f64,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: usize,
    pub accepted: usize,
    /// Rows implying a speed above c.
    pub superluminal: usize,
    /// Rows with non-positive or non-finite length/RTT or bad coordinates.
    pub invalid: usize,
}

enum Screen {
    Ok(f64),
    Superluminal,
    Invalid,
}

fn screen(route_len_km: f64, rtt_ms: f64) -> Screen {
    if !(route_len_km.is_finite() && route_len_km > 0.0 && rtt_ms.is_finite() && rtt_ms > 0.0) {
        return Screen::Invalid;
    }
    let v = speed_km_s(route_len_km, rtt_ms);
    if v > SPEED_OF_LIGHT_KM_S {
        Screen::Superluminal
    } else {
        Screen::Ok(v)
    }
}

fn ecdf_from_bucket(speeds: &[f64], n_delimiters: usize) -> Result<SpeedEcdf, SpeedError> {
    match speeds {
        [only] => Ok(SpeedEcdf::constant(*only)?),
        _ => build_ecdf(speeds, n_delimiters),
    }
}

/// Builds the distance-bucketed terrestrial model. Route length is twice the
/// great-circle distance between the probes.
pub fn ingest_terrestrial(
    rows: &[TerrestrialRow],
    bucket_km: f64,
    n_delimiters: usize,
) -> Result<(BucketedSpeedModel, IngestStats), SpeedError> {
    let mut model = BucketedSpeedModel::new(bucket_km)?;
    let mut stats = IngestStats {
        rows: rows.len(),
        ..Default::default()
    };
    let mut grouped: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let (Ok(a), Ok(b)) = (
            GeoCoord::new(r.src_lat, r.src_lon),
            GeoCoord::new(r.dst_lat, r.dst_lon),
        ) else {
            stats.invalid += 1;
            continue;
        };
        let one_way = haversine_km(a, b);
        match screen(2.0 * one_way, r.rtt_ms) {
            Screen::Ok(v) => {
                stats.accepted += 1;
                grouped.entry(model.bucket_index(one_way)).or_default().push(v);
            }
            Screen::Superluminal => stats.superluminal += 1,
            Screen::Invalid => stats.invalid += 1,
        }
    }
    if stats.accepted == 0 {
        return Err(SpeedError::InsufficientData(0));
    }
    for (k, speeds) in grouped {
        model.buckets.insert(k, ecdf_from_bucket(&speeds, n_delimiters)?);
    }
    if stats.superluminal > 0 {
        log::info!("dropped {} superluminal terrestrial rows", stats.superluminal);
    }
    Ok((model, stats))
}

/// Builds the pooled satellite ECDF from precomputed route lengths. The
/// ground-station to PoP share of each RTT is left in, so satellite speeds
/// come out slightly pessimistic.
pub fn ingest_satellite(
    rows: &[SatelliteRow],
    n_delimiters: usize,
) -> Result<(SpeedEcdf, IngestStats), SpeedError> {
    let mut stats = IngestStats {
        rows: rows.len(),
        ..Default::default()
    };
    let mut speeds = Vec::with_capacity(rows.len());
    for r in rows {
        match screen(r.route_len_km, r.rtt_ms) {
            Screen::Ok(v) => {
                stats.accepted += 1;
                speeds.push(v);
            }
            Screen::Superluminal => stats.superluminal += 1,
            Screen::Invalid => stats.invalid += 1,
        }
    }
    if speeds.is_empty() {
        return Err(SpeedError::InsufficientData(0));
    }
    Ok((ecdf_from_bucket(&speeds, n_delimiters)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bent_pipe_route_lengths() {
        assert_eq!(satellite_path_length_km(0.0, 550.0).unwrap(), 2200.0);
        let alaska = satellite_path_length_km(2311.0, 550.0).unwrap();
        assert!((alaska - 5118.9).abs() < 0.5, "{alaska}");
        let a = satellite_path_length_km(700.0, 550.0).unwrap();
        let b = satellite_path_length_km(1400.0, 1100.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-9);
        assert!(satellite_path_length_km(-1.0, 550.0).is_err());
        assert!(satellite_path_length_km(1.0, -550.0).is_err());
    }

    #[test]
    fn two_point_ecdf() {
        let e = build_ecdf(&[100.0, 200.0], 2).unwrap();
        assert_eq!(e.delimiters(), &[100.0, 200.0]);
        assert_eq!(e.cum_freq(), &[0.5, 1.0]);
        assert_eq!(e.sample_count(), 2);
    }

    #[test]
    fn ecdf_errors() {
        assert_eq!(build_ecdf(&[1.0], 10), Err(SpeedError::InsufficientData(1)));
        assert_eq!(build_ecdf(&[1.0, 2.0], 1), Err(SpeedError::TooFewDelimiters(1)));
        assert!(build_ecdf(&[1.0, -2.0], 4).is_err());
        assert!(build_ecdf(&[1.0, 400_000.0], 4).is_err());
    }

    #[test]
    fn equal_samples_collapse_to_point_mass() {
        let e = build_ecdf(&[5.0, 5.0, 5.0], 10).unwrap();
        assert_eq!(e.delimiters(), &[5.0]);
        assert_eq!(e.sample(0.3), 5.0);
    }

    #[test]
    fn sample_endpoints() {
        let e = build_ecdf(&[10.0, 20.0, 30.0, 40.0, 55.0], 10).unwrap();
        assert_eq!(e.sample(0.0), e.delimiters()[0]);
        assert_eq!(e.sample(1.0), *e.delimiters().last().unwrap());
    }

    #[test]
    fn nearest_frequency_with_plateaus_and_ties() {
        let e = SpeedEcdf::from_parts(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.25, 0.25, 0.75, 1.0],
            0,
        )
        .unwrap();
        // plateau: the lowest index holding 0.25
        assert_eq!(e.sample(0.3), 1.0);
        // exact tie between 0.25 and 0.75 goes low
        assert_eq!(e.sample(0.5), 1.0);
        assert_eq!(e.sample(0.51), 3.0);
        assert_eq!(e.sample(0.9), 4.0);
    }

    #[test]
    fn uniform_samples_match_analytic_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let speeds: Vec<f64> = (0..100_000)
            .map(|_| rng.gen_range(50_000.0..150_000.0))
            .collect();
        let e = build_ecdf(&speeds, 1000).unwrap();
        let ks = e
            .delimiters()
            .iter()
            .zip(e.cum_freq())
            .map(|(&d, &f)| (f - (d - 50_000.0) / 100_000.0).abs())
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS {ks}");
    }

    #[test]
    fn terrestrial_bucketing() {
        // 500 km apart along the equator, 10 ms RTT: 1000 km / 10 ms
        let lon = (500.0 / crate::geo::EARTH_RADIUS_KM).to_degrees();
        let row = TerrestrialRow {
            src_lat: 0.0,
            src_lon: 0.0,
            dst_lat: 0.0,
            dst_lon: lon,
            rtt_ms: 10.0,
        };
        let fast = TerrestrialRow { rtt_ms: 2.0, ..row };
        let (m, stats) = ingest_terrestrial(&[row, fast], 1000.0, 100).unwrap();
        assert_eq!(stats.superluminal, 1);
        assert_eq!(stats.accepted, 1);
        let e = &m.buckets[&0];
        assert!((e.delimiters()[0] - 100_000.0).abs() < 1e-6);
        assert_eq!(m.buckets.len(), 1);
    }

    #[test]
    fn first_bucket_group_row_count() {
        // 213,752 probe pairs with round trips under 2,000 km
        let n = 213_752;
        let rows: Vec<TerrestrialRow> = (0..n)
            .map(|i| {
                let lon = 0.5 + 8.0 * (i % 997) as f64 / 997.0;
                TerrestrialRow {
                    src_lat: 10.0,
                    src_lon: 0.0,
                    dst_lat: 10.0,
                    dst_lon: lon,
                    rtt_ms: 20.0 + (i % 13) as f64,
                }
            })
            .collect();
        let (m, stats) = ingest_terrestrial(&rows, 1000.0, 1000).unwrap();
        assert_eq!(stats.accepted, n);
        assert_eq!(m.buckets.keys().copied().collect::<Vec<_>>(), vec![0]);
        assert_eq!(m.buckets[&0].sample_count(), n);
    }

    #[test]
    fn empty_buckets_fall_back_to_nearest() {
        let mut m = BucketedSpeedModel::new(1000.0).unwrap();
        m.buckets.insert(1, SpeedEcdf::constant(1.0).unwrap());
        m.buckets.insert(3, SpeedEcdf::constant(3.0).unwrap());
        m.buckets.insert(6, SpeedEcdf::constant(6.0).unwrap());
        assert_eq!(m.sample(500.0, 0.5), Some(1.0));
        // bucket 2 is equidistant from 1 and 3: the larger distance wins
        assert_eq!(m.sample(2500.0, 0.5), Some(3.0));
        assert_eq!(m.sample(4100.0, 0.5), Some(3.0));
        assert_eq!(m.sample(5000.0, 0.5), Some(6.0));
        assert_eq!(m.sample(99_000.0, 0.5), Some(6.0));
        assert_eq!(m.fallback().unwrap().delimiters(), &[6.0]);
        assert_eq!(BucketedSpeedModel::new(1000.0).unwrap().sample(1.0, 0.5), None);
        assert!(BucketedSpeedModel::new(0.0).is_err());
    }

    #[test]
    fn bucket_boundary_is_half_open() {
        let m = BucketedSpeedModel::new(1000.0).unwrap();
        assert_eq!(m.bucket_index(999.999), 0);
        assert_eq!(m.bucket_index(1000.0), 1);
    }

    #[test]
    fn satellite_rows() {
        let rows = vec![
            SatelliteRow { site_id: "fra".into(), route_len_km: 2200.0, rtt_ms: 40.0 },
            SatelliteRow { site_id: "ak".into(), route_len_km: 5119.0, rtt_ms: 51.19 },
            SatelliteRow { site_id: "bad".into(), route_len_km: 2200.0, rtt_ms: 1.0 },
        ];
        assert_eq!(speed_km_s(2200.0, 40.0), 55_000.0);
        assert!((speed_km_s(5119.0, 51.19) - 100_000.0).abs() < 1e-9);
        let (e, stats) = ingest_satellite(&rows, 1000).unwrap();
        assert_eq!(stats.superluminal, 1);
        assert_eq!(e.delimiters()[0], 55_000.0);
        assert!((e.delimiters().last().unwrap() - 100_000.0).abs() < 1e-9);
    }

    #[test]
    fn pooled_sites_keep_every_row() {
        // six sites with row counts scaled down from the baseline table
        let sites = [
            ("alaska", 5119.0, 135),
            ("frankfurt", 2200.0, 228),
            ("seattle", 2200.0, 265),
            ("seattle_hp", 2200.0, 327),
            ("vancouver", 2234.0, 334),
            ("victoria", 2212.0, 340),
        ];
        let mut rows = Vec::new();
        for (site, len, count) in sites {
            for i in 0..count {
                rows.push(SatelliteRow {
                    site_id: site.into(),
                    route_len_km: len,
                    rtt_ms: 25.0 + (i % 40) as f64,
                });
            }
        }
        let (e, stats) = ingest_satellite(&rows, 1000).unwrap();
        assert_eq!(stats.accepted, 1629);
        assert_eq!(e.sample_count(), 1629);
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let e = build_ecdf(&[1.0, 3.0, 7.0, 7.5], 5).unwrap();
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<SpeedEcdf>(&s).unwrap(), e);
        let bad = r#"{"delimiters":[1.0,2.0],"cum_freq":[0.5,0.9]}"#;
        assert!(serde_json::from_str::<SpeedEcdf>(bad).is_err());
    }

    proptest! {
        #[test]
        fn ecdf_invariants_and_sample_membership(
            speeds in prop::collection::vec(1.0f64..299_000.0, 2..200),
            n in 2usize..300,
            u in 0.0f64..=1.0,
        ) {
            let e = build_ecdf(&speeds, n).unwrap();
            prop_assert_eq!(*e.cum_freq().last().unwrap(), 1.0);
            prop_assert!(e.delimiters().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(e.cum_freq().windows(2).all(|w| w[0] <= w[1]));
            let s = e.sample(u);
            prop_assert!(e.delimiters().contains(&s));
        }
    }
}

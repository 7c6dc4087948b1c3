//! Percentile error models between simulated and measured latency, and
//! resampling calibration of simulated percentiles.
//!
//! For percentile `i` of a series pair the relative error is
//! `e = (P_i(measured) − P_i(simulated)) / P_i(measured)`. Calibration
//! inverts it: a simulated value `s` maps to candidates `s / (1 − e)` for
//! errors `e` drawn from the model.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{nearest_rank_index, Interface, SeriesStore};

pub const DEFAULT_RESAMPLES: usize = 10_000;
/// Stored errors are clamped to this bound so `1 − e` stays positive.
pub const MAX_ERROR: f64 = 0.99;
/// Candidates never drop below this latency.
pub const MIN_CANDIDATE_MS: f64 = 0.1;
pub const CI_LOW_PCT: f64 = 5.0;
pub const CI_HIGH_PCT: f64 = 95.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("no series id appears in both the simulated and measured sets")]
    NoSharedSeries,
    #[error("error model has no samples near percentile {0}")]
    EmptyPercentile(u32),
    #[error("raw latency {0} ms must be positive")]
    Domain(f64),
    #[error("resample count must be positive")]
    NoResamples,
}

/// The dense grid 1..=99.
pub fn default_percentiles() -> Vec<u32> {
    (1..=99).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorModel {
    /// Percentile → relative errors, one per calibration series.
    pub errors: BTreeMap<u32, Vec<f64>>,
    /// Series pairs that contributed.
    pub series_used: usize,
    /// Ids present in only one set or with too few samples.
    pub skipped: Vec<String>,
    /// Errors that hit [`MAX_ERROR`].
    pub clamped: usize,
}

impl ErrorModel {
    /// Errors at the grid percentile nearest to `p` (ties toward the lower).
    pub fn errors_near(&self, p: u32) -> Option<(u32, &[f64])> {
        self.errors
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .min_by_key(|(&k, _)| (k.abs_diff(p), k))
            .map(|(&k, v)| (k, v.as_slice()))
    }

    /// Adds `delta` to every stored error, re-applying the clamp.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut m = self.clone();
        for v in m.errors.values_mut() {
            for e in v.iter_mut() {
                *e = (*e + delta).min(MAX_ERROR);
            }
        }
        m
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

pub fn relative_error(measured: f64, simulated: f64) -> f64 {
    (measured - simulated) / measured
}

/// Builds the model from every `(id, interface)` present in both stores,
/// optionally restricted to one interface.
pub fn build_error_model(
    sim: &SeriesStore,
    meas: &SeriesStore,
    percentiles: &[u32],
    interface: Option<Interface>,
) -> Result<ErrorModel, CalibrationError> {
    let mut model = ErrorModel {
        errors: percentiles.iter().map(|&p| (p, Vec::new())).collect(),
        ..ErrorModel::default()
    };
    let keys: Vec<(String, Interface)> = sim
        .iter()
        .chain(meas.iter())
        .filter(|s| interface.is_none_or(|i| s.interface == i))
        .map(|s| (s.id.clone(), s.interface))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();

    for (id, iface) in keys {
        let label = format!("{id}/{iface}");
        let (Some(s), Some(m)) = (sim.get(&id, iface), meas.get(&id, iface)) else {
            model.skipped.push(label);
            continue;
        };
        let pairs: Result<Vec<(u32, f64, f64)>, _> = percentiles
            .iter()
            .map(|&p| Ok((p, s.percentile(p as f64)?, m.percentile(p as f64)?)))
            .collect::<Result<_, crate::sim::SimError>>();
        let Ok(pairs) = pairs else {
            model.skipped.push(label);
            continue;
        };
        for (p, ps, pm) in pairs {
            let mut e = relative_error(pm, ps);
            if e > MAX_ERROR {
                e = MAX_ERROR;
                model.clamped += 1;
            }
            model.errors.get_mut(&p).expect("grid key").push(e);
        }
        model.series_used += 1;
    }
    if model.series_used == 0 {
        return Err(CalibrationError::NoSharedSeries);
    }
    if model.clamped > 0 {
        log::warn!("{} relative errors clamped to {MAX_ERROR}", model.clamped);
    }
    if !model.skipped.is_empty() {
        log::info!("{} series skipped while building the error model", model.skipped.len());
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedEstimate {
    pub mean_ms: f64,
    pub ci_low_ms: f64,
    pub ci_high_ms: f64,
    pub resamples: usize,
}

/// Candidate latencies for `raw_ms` under `resamples` errors drawn with
/// replacement from the model at percentile `p`.
pub fn calibration_candidates(
    raw_ms: f64,
    model: &ErrorModel,
    p: u32,
    resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, CalibrationError> {
    if !(raw_ms > 0.0) {
        return Err(CalibrationError::Domain(raw_ms));
    }
    if resamples == 0 {
        return Err(CalibrationError::NoResamples);
    }
    let (_, errors) = model
        .errors_near(p)
        .ok_or(CalibrationError::EmptyPercentile(p))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..resamples)
        .map(|_| {
            let e = errors[rng.gen_range(0..errors.len())];
            (raw_ms / (1.0 - e)).max(MIN_CANDIDATE_MS)
        })
        .collect())
}

pub fn calibrate_estimate(
    raw_ms: f64,
    model: &ErrorModel,
    p: u32,
    resamples: usize,
    seed: u64,
) -> Result<CalibratedEstimate, CalibrationError> {
    let mut c = calibration_candidates(raw_ms, model, p, resamples, seed)?;
    // offsets from a pivot keep a constant candidate set exact
    let pivot = c[0];
    let mean_ms = pivot + c.iter().map(|x| x - pivot).sum::<f64>() / c.len() as f64;
    c.sort_by(f64::total_cmp);
    Ok(CalibratedEstimate {
        mean_ms,
        ci_low_ms: c[nearest_rank_index(c.len(), CI_LOW_PCT)],
        ci_high_ms: c[nearest_rank_index(c.len(), CI_HIGH_PCT)],
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::LatencySeries;
    use rand::Rng;
    use proptest::prelude::*;

    /// Mean of four uniforms on (-spread, spread).
    fn normalish<R: Rng>(rng: &mut R, spread: f64) -> f64 {
        let s: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum();
        s / 4.0 * spread
    }

    fn model_of(errors: &[f64]) -> ErrorModel {
        ErrorModel {
            errors: [(95, errors.to_vec())].into_iter().collect(),
            series_used: errors.len(),
            ..ErrorModel::default()
        }
    }

    fn pair_store(id: &str, sim: f64, meas: f64) -> (SeriesStore, SeriesStore) {
        let mut s = SeriesStore::new();
        let mut m = SeriesStore::new();
        s.insert(LatencySeries::from_values(id, Interface::Satellite, &[sim; 25]));
        m.insert(LatencySeries::from_values(id, Interface::Satellite, &[meas; 25]));
        (s, m)
    }

    #[test]
    fn error_sign_convention() {
        let (s, m) = pair_store("c", 100.0, 125.0);
        let model = build_error_model(&s, &m, &[95], None).unwrap();
        assert!((model.errors[&95][0] - 0.2).abs() < 1e-12);
        let (s, m) = pair_store("c", 120.0, 100.0);
        let model = build_error_model(&s, &m, &[50], None).unwrap();
        assert!((model.errors[&50][0] + 0.2).abs() < 1e-12);
        let (s, m) = pair_store("c", 80.0, 80.0);
        let model = build_error_model(&s, &m, &default_percentiles(), None).unwrap();
        assert!(model.errors.values().all(|v| v == &[0.0]));
    }

    #[test]
    fn skipped_and_empty() {
        let (s, _) = pair_store("a", 1.0, 1.0);
        let (_, m) = pair_store("b", 1.0, 1.0);
        assert_eq!(build_error_model(&s, &m, &[50], None), Err(CalibrationError::NoSharedSeries));
        let (mut s2, mut m2) = pair_store("c", 10.0, 5.0);
        s2.extend(s);
        m2.extend(m);
        let model = build_error_model(&s2, &m2, &[50], None).unwrap();
        assert_eq!(model.series_used, 1);
        assert_eq!(model.skipped.len(), 2);
        // measured 5, simulated 10 -> e = -1
        assert_eq!(model.errors[&50], vec![-1.0]);
        let (s, m) = pair_store("d", 100.0, 0.5);
        let model = build_error_model(&s, &m, &[50], None).unwrap();
        assert_eq!(model.errors[&50], vec![-199.0]);
        let (s, m) = pair_store("e", 1.0, 1000.0);
        let model = build_error_model(&s, &m, &[50], None).unwrap();
        assert_eq!((model.errors[&50][0], model.clamped), (MAX_ERROR, 1));
    }

    #[test]
    fn zero_error_identity() {
        let model = model_of(&[0.0]);
        let est = calibrate_estimate(123.456, &model, 95, DEFAULT_RESAMPLES, 3).unwrap();
        assert_eq!((est.mean_ms, est.ci_low_ms, est.ci_high_ms), (123.456, 123.456, 123.456));
    }

    #[test]
    fn degenerate_error_inverts() {
        let est = calibrate_estimate(100.0, &model_of(&[0.2]), 95, 1000, 1).unwrap();
        assert!((est.mean_ms - 125.0).abs() < 1e-9);
        assert!((est.ci_low_ms - 125.0).abs() < 1e-9);
        assert!((est.ci_high_ms - 125.0).abs() < 1e-9);
    }

    #[test]
    fn two_point_expectation() {
        let est = calibrate_estimate(100.0, &model_of(&[-0.25, 0.2]), 95, DEFAULT_RESAMPLES, 42).unwrap();
        assert!((est.mean_ms - 102.5).abs() < 1.0, "{est:?}");
        assert!((est.ci_low_ms - 80.0).abs() < 1e-9);
        assert!((est.ci_high_ms - 125.0).abs() < 1e-9);
    }

    #[test]
    fn nearest_percentile_lookup() {
        let mut m = model_of(&[0.1]);
        m.errors.insert(50, vec![0.3]);
        m.errors.insert(60, vec![]);
        assert_eq!(m.errors_near(80).unwrap().0, 95);
        assert_eq!(m.errors_near(61).unwrap().0, 50);
        assert_eq!(ErrorModel::default().errors_near(50), None);
        assert!(calibrate_estimate(-1.0, &m, 50, 10, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = model_of(&[0.1, -0.2]);
        assert_eq!(ErrorModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn ci_covers_truth() {
        let truth = 200.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut sim = SeriesStore::new();
        let mut meas = SeriesStore::new();
        for c in 0..300 {
            let e = normalish(&mut rng, 0.4);
            let id = format!("c{c}");
            sim.insert(LatencySeries::from_values(&id, Interface::Satellite, &[truth * (1.0 - e); 25]));
            meas.insert(LatencySeries::from_values(&id, Interface::Satellite, &[truth; 25]));
        }
        let model = build_error_model(&sim, &meas, &[50], None).unwrap();
        let mut covered = 0;
        for trial in 0..500 {
            let e = normalish(&mut rng, 0.4);
            let est = calibrate_estimate(truth * (1.0 - e), &model, 50, 2000, trial).unwrap();
            covered += usize::from(est.ci_low_ms <= truth && truth <= est.ci_high_ms);
        }
        assert!(covered >= 425, "{covered}/500");
    }

    proptest! {
        #[test]
        fn shifting_errors_raises_estimate(
            errors in prop::collection::vec(-0.5f64..0.5, 1..20),
            delta in 0.001f64..0.3,
            raw in 1.0f64..1000.0,
            seed in 0u64..1000,
        ) {
            let m = model_of(&errors);
            let a = calibrate_estimate(raw, &m, 95, 500, seed).unwrap();
            let b = calibrate_estimate(raw, &m.shifted(delta), 95, 500, seed).unwrap();
            prop_assert!(b.mean_ms > a.mean_ms);
            prop_assert_eq!(a, calibrate_estimate(raw, &m, 95, 500, seed).unwrap());
        }
    }
}

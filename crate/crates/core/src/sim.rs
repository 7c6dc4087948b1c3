//! Time-stepped latency series for relay pairs and circuits, percentiles
//! and reduction tables.
//!
//! Every step of a pair draws its uniforms from a stream derived from
//! `(seed, pair id, interface, step)`, so a series does not depend on the
//! order in which pairs are simulated or on how many workers run them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::csvio::{read_rows, write_rows, DataError};
use crate::geo::{haversine_km, GeoCoord, GeoError, OrbitalElements};
use crate::graph::{
    build_graph, k_shortest_paths, topk_latency_ms, Endpoints, GraphConfig, GraphError,
    GroundSegment, GroundSite, RoutingStrategy, SnapshotGeometry, SpeedModels, DST_NODE, SRC_NODE,
};

pub const DEFAULT_STEP_S: f64 = 300.0;
pub const DEFAULT_DURATION_S: f64 = 86_400.0;
/// Percentiles need at least this many valid samples.
pub const MIN_PERCENTILE_SAMPLES: usize = 20;
/// A series with a larger missing fraction is invalid.
pub const MAX_MISSING_FRACTION: f64 = 0.5;
/// Reductions at or above this many percent count as significant.
pub const SIGNIFICANT_REDUCTION_PCT: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid timeline: {0}")]
    Timeline(String),
    #[error("need at least {needed} valid samples, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("percentile {0} outside (0, 100]")]
    Percentile(f64),
    #[error("terrestrial latency {0} ms must be positive")]
    Domain(f64),
    #[error("circuit relays must be distinct: {0}")]
    Circuit(String),
    #[error("duplicate relay fingerprint {0}")]
    DuplicateRelay(String),
    #[error("unknown relay {0}")]
    UnknownRelay(String),
    #[error("series {a} and {b} are on different timelines")]
    TimelineMismatch { a: String, b: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relay {
    pub fingerprint: String,
    pub position: GeoCoord,
    pub bandwidth_weight: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct RelayRow {
    pub fingerprint: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub bandwidth_weight: f64,
}

/// Reads `fingerprint,lat,lon,bandwidth_weight` rows.
pub fn read_relays<R: Read>(reader: R, source: &str) -> Result<Vec<Relay>, SimError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, row) in read_rows::<RelayRow, _>(reader, source)? {
        let position = GeoCoord::new(row.lat, row.lon)
            .map_err(|e| DataError::parse(source, line, e.to_string()))?;
        if !(row.bandwidth_weight >= 0.0) {
            return Err(DataError::parse(source, line, "bandwidth_weight must be non-negative").into());
        }
        if !seen.insert(row.fingerprint.clone()) {
            return Err(SimError::DuplicateRelay(row.fingerprint));
        }
        out.push(Relay {
            fingerprint: row.fingerprint,
            position,
            bandwidth_weight: row.bandwidth_weight,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Circuit {
    #[serde(rename = "entry_fp")]
    pub entry: String,
    #[serde(rename = "middle_fp")]
    pub middle: String,
    #[serde(rename = "exit_fp")]
    pub exit: String,
}

impl Circuit {
    pub fn new(entry: &str, middle: &str, exit: &str) -> Result<Self, SimError> {
        let c = Self {
            entry: entry.into(),
            middle: middle.into(),
            exit: exit.into(),
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.entry == self.middle || self.middle == self.exit || self.entry == self.exit {
            return Err(SimError::Circuit(self.id()));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("{}>{}>{}", self.entry, self.middle, self.exit)
    }

    /// The two inter-relay hops, entry→middle and middle→exit.
    pub fn hops(&self) -> [(&str, &str); 2] {
        [(&self.entry, &self.middle), (&self.middle, &self.exit)]
    }
}

/// Reads `entry_fp,middle_fp,exit_fp` rows.
pub fn read_circuits<R: Read>(reader: R, source: &str) -> Result<Vec<Circuit>, SimError> {
    read_rows::<Circuit, _>(reader, source)?
        .into_iter()
        .map(|(_, c)| c.validate().map(|_| c))
        .collect()
}

/// Identifier of a directed relay pair.
pub fn pair_id(src: &str, dst: &str) -> String {
    format!("{src}->{dst}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub start: f64,
    pub step_s: f64,
    pub duration_s: f64,
}

impl Timeline {
    pub fn new(start: f64, step_s: f64, duration_s: f64) -> Result<Self, SimError> {
        if !(step_s > 0.0) || !(duration_s > 0.0) {
            return Err(SimError::Timeline("step and duration must be positive".into()));
        }
        let n = duration_s / step_s;
        if (n - n.round()).abs() > 1e-9 {
            return Err(SimError::Timeline(format!(
                "duration {duration_s} s is not a multiple of step {step_s} s"
            )));
        }
        Ok(Self {
            start,
            step_s,
            duration_s,
        })
    }

    /// A day at five-minute steps.
    pub fn daily(start: f64) -> Self {
        Self {
            start,
            step_s: DEFAULT_STEP_S,
            duration_s: DEFAULT_DURATION_S,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration_s / self.step_s).round() as usize
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.start + self.step_s * step as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interface {
    Satellite,
    Terrestrial,
    /// Per-step choice of a dual-homed relay.
    DualHomed,
}

impl fmt::Display for Interface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interface::Satellite => "satellite",
            Interface::Terrestrial => "terrestrial",
            Interface::DualHomed => "dualhomed",
        })
    }
}

impl FromStr for Interface {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "satellite" | "sat" => Ok(Interface::Satellite),
            "terrestrial" | "ter" => Ok(Interface::Terrestrial),
            "dualhomed" => Ok(Interface::DualHomed),
            other => Err(format!("unknown interface {other:?}")),
        }
    }
}

impl From<RoutingStrategy> for Interface {
    fn from(s: RoutingStrategy) -> Self {
        if s.uses_satellites() {
            Interface::Satellite
        } else {
            Interface::Terrestrial
        }
    }
}

/// RTT samples on a regular grid; `None` marks a step without a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySeries {
    pub id: String,
    pub interface: Interface,
    pub start: f64,
    pub step_s: f64,
    pub samples: Vec<Option<f64>>,
}

impl LatencySeries {
    pub fn from_values(id: &str, interface: Interface, values: &[f64]) -> Self {
        Self {
            id: id.into(),
            interface,
            start: 0.0,
            step_s: 1.0,
            samples: values.iter().copied().map(Some).collect(),
        }
    }

    pub fn valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().flatten().copied()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().flatten().count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        1.0 - self.valid_count() as f64 / self.samples.len() as f64
    }

    pub fn is_valid(&self) -> bool {
        self.missing_fraction() <= MAX_MISSING_FRACTION
    }

    pub fn mean(&self) -> Option<f64> {
        let n = self.valid_count();
        (n > 0).then(|| self.valid().sum::<f64>() / n as f64)
    }

    pub fn percentile(&self, p: f64) -> Result<f64, SimError> {
        percentile(self, p)
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.start + self.step_s * i as f64
    }
}

/// Nearest-rank percentile: the `⌈p/100 · n⌉`-th smallest value.
pub fn nearest_rank(values: &[f64], p: f64) -> Result<f64, SimError> {
    if !(p > 0.0 && p <= 100.0) {
        return Err(SimError::Percentile(p));
    }
    if values.is_empty() {
        return Err(SimError::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[nearest_rank_index(v.len(), p)])
}

/// Zero-based index of the nearest-rank `p`-th percentile among `n` sorted
/// values.
pub fn nearest_rank_index(n: usize, p: f64) -> usize {
    // guard against 0.95 * 100 = 95.00000000000001 style overshoot
    let rank = (p / 100.0 * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

pub fn percentile(series: &LatencySeries, p: f64) -> Result<f64, SimError> {
    let values: Vec<f64> = series.valid().collect();
    if values.len() < MIN_PERCENTILE_SAMPLES {
        return Err(SimError::InsufficientData {
            needed: MIN_PERCENTILE_SAMPLES,
            available: values.len(),
        });
    }
    nearest_rank(&values, p)
}

/// Percent reduction of `l_sat` relative to `l_ter`; negative when the
/// satellite path is slower.
pub fn relative_reduction(l_ter: f64, l_sat: f64) -> Result<f64, SimError> {
    if !(l_ter > 0.0) {
        return Err(SimError::Domain(l_ter));
    }
    Ok((l_ter - l_sat) / l_ter * 100.0)
}

pub fn circuit_latency(hop1: Option<f64>, hop2: Option<f64>) -> Option<f64> {
    Some(hop1? + hop2?)
}

/// Sums two hop series step by step into a circuit series.
pub fn circuit_series(id: &str, hop1: &LatencySeries, hop2: &LatencySeries) -> Result<LatencySeries, SimError> {
    if hop1.start != hop2.start || hop1.step_s != hop2.step_s || hop1.samples.len() != hop2.samples.len() {
        return Err(SimError::TimelineMismatch {
            a: hop1.id.clone(),
            b: hop2.id.clone(),
        });
    }
    Ok(LatencySeries {
        id: id.into(),
        interface: hop1.interface,
        start: hop1.start,
        step_s: hop1.step_s,
        samples: hop1
            .samples
            .iter()
            .zip(&hop2.samples)
            .map(|(a, b)| circuit_latency(*a, *b))
            .collect(),
    })
}

/// Derives the uniform stream for one step of one series.
pub fn step_rng(seed: u64, id: &str, interface: Interface, step: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((id.len() as u64).to_le_bytes());
    h.update(id.as_bytes());
    h.update(interface.to_string().as_bytes());
    h.update((step as u64).to_le_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Everything a snapshot needs besides the relay pair.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub elements: Vec<OrbitalElements>,
    pub ground: GroundSegment,
    pub graph: GraphConfig,
    pub speeds: SpeedModels,
}

/// Simulates pairs on a fixed timeline, sharing the per-step satellite
/// geometry across pairs.
#[derive(Debug)]
pub struct Simulator {
    pub model: NetworkModel,
    pub timeline: Timeline,
    geometry: Vec<SnapshotGeometry>,
}

impl Simulator {
    pub fn new(model: NetworkModel, timeline: Timeline) -> Result<Self, SimError> {
        let geometry = (0..timeline.steps())
            .map(|i| {
                SnapshotGeometry::propagate(&model.elements, timeline.time_at(i), &model.ground, &model.graph)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            model,
            timeline,
            geometry,
        })
    }

    pub fn geometry(&self, step: usize) -> &SnapshotGeometry {
        &self.geometry[step]
    }

    /// RTT series of the directed pair `src → dst`: each step doubles the
    /// mean one-way latency of the `k` cheapest paths.
    pub fn simulate_pair(
        &self,
        src: &Relay,
        dst: &Relay,
        strategy: RoutingStrategy,
        k: usize,
        seed: u64,
    ) -> Result<LatencySeries, SimError> {
        let id = pair_id(&src.fingerprint, &dst.fingerprint);
        let interface = Interface::from(strategy);
        let endpoints = Endpoints {
            src: GroundSite::new(src.fingerprint.clone(), src.position),
            dst: GroundSite::new(dst.fingerprint.clone(), dst.position),
        };
        let mut samples = Vec::with_capacity(self.timeline.steps());
        for (step, geom) in self.geometry.iter().enumerate() {
            let mut rng = step_rng(seed, &id, interface, step);
            let g = build_graph(
                geom,
                &self.model.ground,
                &endpoints,
                strategy,
                &self.model.graph,
                &self.model.speeds,
                &mut rng,
            )?;
            let paths = k_shortest_paths(&g, SRC_NODE, DST_NODE, k);
            samples.push(match topk_latency_ms(&paths, k) {
                Ok(one_way) => Some(2.0 * one_way),
                Err(GraphError::NoRoute) => None,
                Err(e) => return Err(e.into()),
            });
        }
        let series = LatencySeries {
            id,
            interface,
            start: self.timeline.start,
            step_s: self.timeline.step_s,
            samples,
        };
        if !series.is_valid() {
            log::warn!(
                "{} ({}): {:.0}% of steps have no route",
                series.id,
                interface,
                series.missing_fraction() * 100.0
            );
        }
        Ok(series)
    }
}

/// Series keyed by `(id, interface)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesStore {
    series: BTreeMap<(String, Interface), LatencySeries>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRow {
    id: String,
    interface: Interface,
    t: f64,
    rtt_ms: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct MeasuredRow {
    circuit_id: String,
    interface: Interface,
    rtt_ms: f64,
}

impl SeriesStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, s: LatencySeries) {
        self.series.insert((s.id.clone(), s.interface), s);
    }

    pub fn get(&self, id: &str, interface: Interface) -> Option<&LatencySeries> {
        self.series.get(&(id.to_string(), interface))
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.series.keys().map(|(id, _)| id.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatencySeries> {
        self.series.values()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn extend(&mut self, other: SeriesStore) {
        self.series.extend(other.series);
    }

    /// Writes `id,interface,t,rtt_ms` rows; missing samples have an empty
    /// `rtt_ms`.
    pub fn write_csv<W: Write>(&self, writer: W, comment: Option<&str>) -> Result<(), SimError> {
        let rows = self.series.values().flat_map(|s| {
            s.samples.iter().enumerate().map(move |(i, v)| SeriesRow {
                id: s.id.clone(),
                interface: s.interface,
                t: s.time_at(i),
                rtt_ms: *v,
            })
        });
        write_rows(writer, comment, rows)?;
        Ok(())
    }

    /// Reads the format written by [`SeriesStore::write_csv`]. Each series
    /// must sit on a regular grid.
    pub fn read_csv<R: Read>(reader: R, source: &str) -> Result<Self, SimError> {
        type Rows = Vec<(u64, f64, Option<f64>)>;
        let mut grouped: BTreeMap<(String, Interface), Rows> = BTreeMap::new();
        for (line, r) in read_rows::<SeriesRow, _>(reader, source)? {
            grouped
                .entry((r.id, r.interface))
                .or_default()
                .push((line, r.t, r.rtt_ms));
        }
        let mut store = Self::new();
        for ((id, interface), mut rows) in grouped {
            rows.sort_by(|a, b| a.1.total_cmp(&b.1));
            let start = rows[0].1;
            let step_s = if rows.len() > 1 { rows[1].1 - rows[0].1 } else { 1.0 };
            for (i, &(line, t, v)) in rows.iter().enumerate() {
                if (t - (start + step_s * i as f64)).abs() > 1e-6 * step_s.abs().max(1.0) {
                    return Err(DataError::parse(source, line, format!("{id}: irregular time grid at t={t}")).into());
                }
                if let Some(x) = v {
                    if !(x > 0.0) {
                        return Err(DataError::parse(source, line, format!("rtt_ms {x} must be positive")).into());
                    }
                }
            }
            store.insert(LatencySeries {
                id,
                interface,
                start,
                step_s,
                samples: rows.into_iter().map(|r| r.2).collect(),
            });
        }
        Ok(store)
    }

    /// Reads `circuit_id,interface,rtt_ms` measurements; repeated rows form
    /// each series in file order.
    pub fn read_measured_csv<R: Read>(reader: R, source: &str) -> Result<Self, SimError> {
        let mut grouped: BTreeMap<(String, Interface), Vec<f64>> = BTreeMap::new();
        for (line, r) in read_rows::<MeasuredRow, _>(reader, source)? {
            if !(r.rtt_ms > 0.0) {
                return Err(DataError::parse(source, line, format!("rtt_ms {} must be positive", r.rtt_ms)).into());
            }
            grouped.entry((r.circuit_id, r.interface)).or_default().push(r.rtt_ms);
        }
        let mut store = Self::new();
        for ((id, interface), values) in grouped {
            store.insert(LatencySeries::from_values(&id, interface, &values));
        }
        Ok(store)
    }
}

/// Half-open percent range `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionBin {
    pub lo: f64,
    pub hi: f64,
}

impl ReductionBin {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x < self.hi
    }

    pub fn label(&self) -> String {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, _) => format!("lt{}", self.hi),
            (_, false) => format!("ge{}", self.lo),
            _ => format!("{}_{}", self.lo, self.hi),
        }
    }
}

/// `<20, 20–40, 40–60, 60–80, ≥80`.
pub fn default_reduction_bins() -> Vec<ReductionBin> {
    let edges = [f64::NEG_INFINITY, 20.0, 40.0, 60.0, 80.0, f64::INFINITY];
    edges
        .windows(2)
        .map(|w| ReductionBin { lo: w[0], hi: w[1] })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionRow {
    pub percentile: f64,
    pub pairs: usize,
    /// Percent of pairs per bin, in bin order.
    pub bin_pct: Vec<f64>,
    /// Percent of pairs reduced by at least 20%.
    pub significant_pct: f64,
    /// Mean reduction among those pairs.
    pub significant_mean: Option<f64>,
}

/// Per-pair reductions at percentile `p`, skipping pairs without both
/// interfaces or with too few samples.
pub fn pair_reductions(store: &SeriesStore, p: f64) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for id in store.ids() {
        let (Some(ter), Some(sat)) = (
            store.get(id, Interface::Terrestrial),
            store.get(id, Interface::Satellite),
        ) else {
            continue;
        };
        let (Ok(lt), Ok(ls)) = (ter.percentile(p), sat.percentile(p)) else {
            continue;
        };
        if let Ok(r) = relative_reduction(lt, ls) {
            out.push((id.to_string(), r));
        }
    }
    out
}

pub fn reduction_row(p: f64, reductions: &[f64], bins: &[ReductionBin]) -> ReductionRow {
    let n = reductions.len();
    let pct = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 * 100.0 };
    let bin_pct = bins
        .iter()
        .map(|b| pct(reductions.iter().filter(|&&r| b.contains(r)).count()))
        .collect();
    let significant: Vec<f64> = reductions
        .iter()
        .copied()
        .filter(|&r| r >= SIGNIFICANT_REDUCTION_PCT)
        .collect();
    ReductionRow {
        percentile: p,
        pairs: n,
        bin_pct,
        significant_pct: pct(significant.len()),
        significant_mean: (!significant.is_empty())
            .then(|| significant.iter().sum::<f64>() / significant.len() as f64),
    }
}

pub fn reduction_table(store: &SeriesStore, percentiles: &[f64], bins: &[ReductionBin]) -> Vec<ReductionRow> {
    if store.is_empty() {
        return Vec::new();
    }
    percentiles
        .iter()
        .map(|&p| {
            let r: Vec<f64> = pair_reductions(store, p).into_iter().map(|(_, r)| r).collect();
            reduction_row(p, &r, bins)
        })
        .collect()
}

/// Writes the table with one column per bin.
pub fn write_reduction_table<W: Write>(
    writer: W,
    comment: Option<&str>,
    rows: &[ReductionRow],
    bins: &[ReductionBin],
) -> Result<(), SimError> {
    let mut w = writer;
    if let Some(c) = comment {
        writeln!(w, "# {c}").map_err(csv::Error::from)?;
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["percentile".to_string(), "pairs".to_string()];
    header.extend(bins.iter().map(|b| b.label()));
    header.push(format!("ge{SIGNIFICANT_REDUCTION_PCT}"));
    header.push(format!("mean_ge{SIGNIFICANT_REDUCTION_PCT}"));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.percentile.to_string(), r.pairs.to_string()];
        rec.extend(r.bin_pct.iter().map(|x| format!("{x:.2}")));
        rec.push(format!("{:.2}", r.significant_pct));
        rec.push(r.significant_mean.map(|m| format!("{m:.2}")).unwrap_or_default());
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceBucket {
    pub lower_km: f64,
    pub upper_km: f64,
    pub pairs: usize,
    pub mean_reduction: f64,
    /// Mean reduction among pairs that got faster.
    pub mean_positive: Option<f64>,
    /// Mean latency increase, in percent, among pairs that got slower.
    pub mean_increase: Option<f64>,
}

/// Groups `(one-way distance km, reduction %)` by distance bucket. Empty
/// buckets are absent.
pub fn group_reduction_by_distance(entries: &[(f64, f64)], bucket_km: f64) -> BTreeMap<u32, DistanceBucket> {
    let mut grouped: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for &(d, r) in entries {
        grouped.entry((d / bucket_km).floor() as u32).or_default().push(r);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    grouped
        .into_iter()
        .map(|(b, rs)| {
            let pos: Vec<f64> = rs.iter().copied().filter(|&r| r > 0.0).collect();
            let neg: Vec<f64> = rs.iter().copied().filter(|&r| r < 0.0).map(|r| -r).collect();
            (
                b,
                DistanceBucket {
                    lower_km: b as f64 * bucket_km,
                    upper_km: (b + 1) as f64 * bucket_km,
                    pairs: rs.len(),
                    mean_reduction: mean(&rs).unwrap_or(0.0),
                    mean_positive: mean(&pos),
                    mean_increase: mean(&neg),
                },
            )
        })
        .collect()
}

/// One-way great-circle distance of a pair.
pub fn pair_distance_km(a: &Relay, b: &Relay) -> f64 {
    haversine_km(a.position, b.position)
}

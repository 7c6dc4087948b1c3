//! Dual-homed relays: a probe scheduler that decides per peer whether to
//! send over satellite or terrestrial, deployment scenarios, adversary
//! visibility and tail-latency correlation.
//!
//! The scheduler replays latency series at their step granularity. Every
//! `interval_s` it ranks peers by `a·H + (1 − a)·F`, where `H` is the
//! entropy of which interface was faster in past probes and `F` is the
//! peer's normalized staleness, probes the top `budget` peers and switches
//! each probed peer to the interface that won the probe.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{nearest_rank_index, pair_id, Circuit, Interface, LatencySeries, Relay, SeriesStore};

pub const DEFAULT_INTERVAL_S: f64 = 300.0;
pub const DEFAULT_BUDGET: usize = 50;
pub const DEFAULT_MIX: f64 = 0.5;
pub const DEFAULT_TAIL_PERCENTILE: f64 = 95.0;
pub const MIN_JOINT_SAMPLES: usize = 100;
/// One probe exchange (request and reply), bytes.
pub const DEFAULT_PROBE_BYTES: f64 = 104.0;
/// Page-load-time change per millisecond of RTT change.
pub const PLT_PER_RTT: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualHomeError {
    #[error("invalid scheduler config: {0}")]
    Config(String),
    #[error("series of {0} are not aligned")]
    Misaligned(String),
    #[error("missing {interface} series for {id}")]
    MissingSeries { id: String, interface: Interface },
    #[error("need at least {needed} joint samples, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("no sample of the conditioning series exceeds its threshold")]
    UndefinedConditional,
    #[error("value {0} outside the domain")]
    Domain(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub sat_ms: f64,
    pub ter_ms: f64,
}

impl Measurement {
    /// Ties count as terrestrial.
    pub fn satellite_faster(&self) -> bool {
        self.sat_ms < self.ter_ms
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IfaceHistory {
    pub records: Vec<Measurement>,
}

impl IfaceHistory {
    pub fn push(&mut self, m: Measurement) -> Result<(), DualHomeError> {
        if !(m.sat_ms > 0.0 && m.ter_ms > 0.0) {
            return Err(DualHomeError::Domain(m.sat_ms.min(m.ter_ms)));
        }
        if self.last_time().is_some_and(|t| m.t < t) {
            return Err(DualHomeError::Domain(m.t));
        }
        self.records.push(m);
        Ok(())
    }

    pub fn last_time(&self) -> Option<f64> {
        self.records.last().map(|m| m.t)
    }
}

fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Entropy, in bits, of which interface won past probes. An empty history
/// is maximally uncertain.
pub fn faster_iface_entropy(history: &IfaceHistory) -> f64 {
    if history.records.is_empty() {
        return 1.0;
    }
    let sat = history.records.iter().filter(|m| m.satellite_faster()).count();
    binary_entropy(sat as f64 / history.records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub interval_s: f64,
    pub budget: usize,
    /// Weight of entropy against staleness.
    pub mix: f64,
    /// Satellite wins a probe when `sat < ter · (1 + slack/100)`.
    pub slack_percent: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            interval_s: DEFAULT_INTERVAL_S,
            budget: DEFAULT_BUDGET,
            mix: DEFAULT_MIX,
            slack_percent: 0.0,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<(), DualHomeError> {
        if !(self.interval_s > 0.0) {
            return Err(DualHomeError::Config(format!("interval {} must be positive", self.interval_s)));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(DualHomeError::Config(format!("mix {} outside [0, 1]", self.mix)));
        }
        if !(self.slack_percent >= 0.0) {
            return Err(DualHomeError::Config(format!("slack {} must be non-negative", self.slack_percent)));
        }
        Ok(())
    }

    fn prefers_satellite(&self, sat_ms: f64, ter_ms: f64) -> bool {
        sat_ms < ter_ms * (1.0 + self.slack_percent / 100.0)
    }
}

/// Priority of every peer at `now`. Staleness is divided by the largest
/// staleness among measured peers; peers never measured get `F = 1`.
pub fn update_priorities(state: &BTreeMap<String, IfaceHistory>, now: f64, mix: f64) -> BTreeMap<String, f64> {
    let max_stale = state
        .values()
        .filter_map(|h| h.last_time().map(|t| now - t))
        .fold(0.0, f64::max);
    state
        .iter()
        .map(|(peer, h)| {
            let f = match h.last_time() {
                None => 1.0,
                Some(_) if max_stale <= 0.0 => 0.0,
                Some(t) => (now - t) / max_stale,
            };
            (peer.clone(), mix * faster_iface_entropy(h) + (1.0 - mix) * f)
        })
        .collect()
}

/// The `n` highest-priority peers, ties by ascending fingerprint.
pub fn select_top(scores: &BTreeMap<String, f64>, n: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(k, _)| k.clone()).collect()
}

/// Satellite and terrestrial series towards one peer.
pub type PeerSeries = (LatencySeries, LatencySeries);

fn check_aligned(peers: &BTreeMap<String, PeerSeries>) -> Result<Option<(f64, f64, usize)>, DualHomeError> {
    let mut grid = None;
    for (peer, (sat, ter)) in peers {
        for s in [sat, ter] {
            let g = (s.start, s.step_s, s.samples.len());
            match grid {
                None => grid = Some(g),
                Some(x) if x != g => return Err(DualHomeError::Misaligned(peer.clone())),
                _ => {}
            }
        }
    }
    Ok(grid)
}

/// Replays the scheduler of one source relay over its peers and returns
/// the effective series per peer.
///
/// Probe rounds fire at `start + j·interval_s` for `j ≥ 1`; a round's
/// probes take effect at the step they are read. Before its first probe a
/// peer uses terrestrial. A probe that hits a missing sample is not
/// recorded, and a step whose selected interface has no sample uses the
/// other one.
pub fn run_dual_homing(
    peers: &BTreeMap<String, PeerSeries>,
    cfg: &SchedulerConfig,
) -> Result<BTreeMap<String, LatencySeries>, DualHomeError> {
    cfg.validate()?;
    let Some((start, step_s, len)) = check_aligned(peers)? else {
        return Ok(BTreeMap::new());
    };
    let mut history: BTreeMap<String, IfaceHistory> =
        peers.keys().map(|p| (p.clone(), IfaceHistory::default())).collect();
    let mut on_satellite: BTreeSet<String> = BTreeSet::new();
    let mut effective: BTreeMap<String, Vec<Option<f64>>> =
        peers.keys().map(|p| (p.clone(), Vec::with_capacity(len))).collect();
    let eps = 1e-9 * cfg.interval_s;
    let mut next_round = start + cfg.interval_s;

    for i in 0..len {
        let t = start + step_s * i as f64;
        if t + eps >= next_round {
            while next_round <= t + eps {
                next_round += cfg.interval_s;
            }
            if cfg.budget > 0 {
                let scores = update_priorities(&history, t, cfg.mix);
                for peer in select_top(&scores, cfg.budget) {
                    let (sat, ter) = &peers[&peer];
                    if let (Some(s), Some(r)) = (sat.samples[i], ter.samples[i]) {
                        history.get_mut(&peer).unwrap().push(Measurement { t, sat_ms: s, ter_ms: r })?;
                        if cfg.prefers_satellite(s, r) {
                            on_satellite.insert(peer);
                        } else {
                            on_satellite.remove(&peer);
                        }
                    }
                }
            }
        }
        for (peer, (sat, ter)) in peers {
            let (first, second) = if on_satellite.contains(peer) {
                (sat.samples[i], ter.samples[i])
            } else {
                (ter.samples[i], sat.samples[i])
            };
            effective.get_mut(peer).unwrap().push(first.or(second));
        }
    }

    Ok(effective
        .into_iter()
        .map(|(peer, samples)| {
            let id = peers[&peer].1.id.clone();
            (
                peer,
                LatencySeries {
                    id,
                    interface: Interface::DualHomed,
                    start,
                    step_s,
                    samples,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TopN,
    WeightedN,
    RandomN,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::TopN => "top-n",
            Scenario::WeightedN => "weighted-n",
            Scenario::RandomN => "random-n",
        })
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "top" | "top-n" => Ok(Scenario::TopN),
            "weighted" | "weighted-n" => Ok(Scenario::WeightedN),
            "random" | "random-n" => Ok(Scenario::RandomN),
            other => Err(format!("unknown deployment scenario {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
    pub members: BTreeSet<String>,
}

impl DeploymentPlan {
    pub fn everyone(relays: &[Relay]) -> Self {
        Self {
            scenario: Scenario::TopN,
            n: relays.len(),
            seed: 0,
            members: relays.iter().map(|r| r.fingerprint.clone()).collect(),
        }
    }

    pub fn contains(&self, fingerprint: &str) -> bool {
        self.members.contains(fingerprint)
    }
}

/// Chooses `n` relays to equip with a satellite interface.
pub fn assign_deployment(relays: &[Relay], scenario: Scenario, n: usize, seed: u64) -> DeploymentPlan {
    let n = if n > relays.len() {
        log::warn!("deployment size {n} exceeds {} relays; capped", relays.len());
        relays.len()
    } else {
        n
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: BTreeSet<String> = match scenario {
        Scenario::TopN => {
            let mut order: Vec<&Relay> = relays.iter().collect();
            order.sort_by(|a, b| {
                b.bandwidth_weight
                    .total_cmp(&a.bandwidth_weight)
                    .then_with(|| a.fingerprint.cmp(&b.fingerprint))
            });
            order.into_iter().take(n).map(|r| r.fingerprint.clone()).collect()
        }
        Scenario::RandomN => sample_indices(&mut rng, relays.len(), n)
            .into_iter()
            .map(|i| relays[i].fingerprint.clone())
            .collect(),
        Scenario::WeightedN => {
            let mut remaining: Vec<&Relay> = relays.iter().collect();
            let mut chosen = BTreeSet::new();
            while chosen.len() < n {
                let weights: Vec<f64> = remaining.iter().map(|r| r.bandwidth_weight).collect();
                let pick = match WeightedIndex::new(&weights) {
                    Ok(dist) => dist.sample(&mut rng),
                    // every remaining weight is zero
                    Err(_) => sample_indices(&mut rng, remaining.len(), 1).index(0),
                };
                chosen.insert(remaining.swap_remove(pick).fingerprint.clone());
            }
            chosen
        }
    };
    DeploymentPlan {
        scenario,
        n,
        seed,
        members,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReductionMetrics {
    /// Links compared.
    pub count: usize,
    /// Fraction of links whose percentile latency dropped.
    pub fraction_reduced: f64,
    /// Among reduced links.
    pub mean_reduction_ms: Option<f64>,
    pub mean_reduction_pct: Option<f64>,
    /// Among links that got slower, as positive numbers.
    pub mean_increase_ms: Option<f64>,
    pub mean_increase_pct: Option<f64>,
    /// Mean relative reduction over every link.
    pub mean_change_pct: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl ReductionMetrics {
    /// Metrics from `(baseline_ms, candidate_ms)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let mut red_ms = Vec::new();
        let mut red_pct = Vec::new();
        let mut inc_ms = Vec::new();
        let mut inc_pct = Vec::new();
        let mut all_pct = Vec::new();
        for &(base, cand) in pairs {
            let pct = (base - cand) / base * 100.0;
            all_pct.push(pct);
            if cand < base {
                red_ms.push(base - cand);
                red_pct.push(pct);
            } else if cand > base {
                inc_ms.push(cand - base);
                inc_pct.push(-pct);
            }
        }
        Self {
            count: pairs.len(),
            fraction_reduced: if pairs.is_empty() { 0.0 } else { red_ms.len() as f64 / pairs.len() as f64 },
            mean_reduction_ms: mean(&red_ms),
            mean_reduction_pct: mean(&red_pct),
            mean_increase_ms: mean(&inc_ms),
            mean_increase_pct: mean(&inc_pct),
            mean_change_pct: mean(&all_pct),
        }
    }

    /// Field-wise mean of several metric sets.
    pub fn average(rows: &[Self]) -> Self {
        let opt = |f: fn(&Self) -> Option<f64>| mean(&rows.iter().filter_map(f).collect::<Vec<_>>());
        Self {
            count: rows.iter().map(|r| r.count).max().unwrap_or(0),
            fraction_reduced: mean(&rows.iter().map(|r| r.fraction_reduced).collect::<Vec<_>>()).unwrap_or(0.0),
            mean_reduction_ms: opt(|r| r.mean_reduction_ms),
            mean_reduction_pct: opt(|r| r.mean_reduction_pct),
            mean_increase_ms: opt(|r| r.mean_increase_ms),
            mean_increase_pct: opt(|r| r.mean_increase_pct),
            mean_change_pct: opt(|r| r.mean_change_pct),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub percentile: f64,
    pub pairs: ReductionMetrics,
    pub circuits: ReductionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub rows: Vec<ReportRow>,
    pub average_pairs: ReductionMetrics,
    pub average_circuits: ReductionMetrics,
}

impl ReductionReport {
    pub fn from_rows(rows: Vec<ReportRow>) -> Self {
        let p: Vec<_> = rows.iter().map(|r| r.pairs).collect();
        let c: Vec<_> = rows.iter().map(|r| r.circuits).collect();
        Self {
            average_pairs: ReductionMetrics::average(&p),
            average_circuits: ReductionMetrics::average(&c),
            rows,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W, comment: Option<&str>) -> Result<(), csv::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            percentile: String,
            scope: &'a str,
            count: usize,
            fraction_reduced: f64,
            mean_reduction_ms: Option<f64>,
            mean_reduction_pct: Option<f64>,
            mean_increase_ms: Option<f64>,
            mean_increase_pct: Option<f64>,
            mean_change_pct: Option<f64>,
        }
        let row = |percentile: String, scope, m: &ReductionMetrics| Row {
            percentile,
            scope,
            count: m.count,
            fraction_reduced: m.fraction_reduced,
            mean_reduction_ms: m.mean_reduction_ms,
            mean_reduction_pct: m.mean_reduction_pct,
            mean_increase_ms: m.mean_increase_ms,
            mean_increase_pct: m.mean_increase_pct,
            mean_change_pct: m.mean_change_pct,
        };
        let mut rows = Vec::new();
        for r in &self.rows {
            rows.push(row(r.percentile.to_string(), "pairs", &r.pairs));
            rows.push(row(r.percentile.to_string(), "circuits", &r.circuits));
        }
        rows.push(row("all".into(), "pairs", &self.average_pairs));
        rows.push(row("all".into(), "circuits", &self.average_circuits));
        crate::csvio::write_rows(writer, comment, rows)
    }
}

/// Effective hop series under `plan`: hops whose source is a member are
/// replayed through the scheduler, all others stay terrestrial.
pub fn effective_hop_series(
    circuits: &[Circuit],
    store: &SeriesStore,
    plan: &DeploymentPlan,
    cfg: &SchedulerConfig,
) -> Result<BTreeMap<String, LatencySeries>, DualHomeError> {
    let mut by_source: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for c in circuits {
        for (src, dst) in c.hops() {
            by_source.entry(src).or_default().insert(dst);
        }
    }
    let get = |id: &str, interface| {
        store.get(id, interface).ok_or_else(|| DualHomeError::MissingSeries {
            id: id.to_string(),
            interface,
        })
    };
    let mut out = BTreeMap::new();
    for (src, dsts) in by_source {
        if plan.contains(src) {
            let mut peers = BTreeMap::new();
            for dst in dsts {
                let id = pair_id(src, dst);
                peers.insert(
                    dst.to_string(),
                    (get(&id, Interface::Satellite)?.clone(), get(&id, Interface::Terrestrial)?.clone()),
                );
            }
            for (dst, s) in run_dual_homing(&peers, cfg)? {
                out.insert(pair_id(src, &dst), s);
            }
        } else {
            for dst in dsts {
                let id = pair_id(src, dst);
                out.insert(id.clone(), get(&id, Interface::Terrestrial)?.clone());
            }
        }
    }
    Ok(out)
}

/// Percentile comparison of effective against all-terrestrial latency for
/// every hop pair and every circuit.
pub fn evaluate_deployment(
    circuits: &[Circuit],
    store: &SeriesStore,
    plan: &DeploymentPlan,
    cfg: &SchedulerConfig,
    percentiles: &[f64],
) -> Result<ReductionReport, DualHomeError> {
    let effective = effective_hop_series(circuits, store, plan, cfg)?;
    Ok(compare_hops(circuits, store, &effective, percentiles))
}

/// Builds the report from already-computed effective hop series.
pub fn compare_hops(
    circuits: &[Circuit],
    store: &SeriesStore,
    effective: &BTreeMap<String, LatencySeries>,
    percentiles: &[f64],
) -> ReductionReport {
    let mut circuit_series = Vec::new();
    for c in circuits {
        let [(a, b), (x, y)] = c.hops();
        let (h1, h2) = (pair_id(a, b), pair_id(x, y));
        let (Some(t1), Some(t2), Some(e1), Some(e2)) = (
            store.get(&h1, Interface::Terrestrial),
            store.get(&h2, Interface::Terrestrial),
            effective.get(&h1),
            effective.get(&h2),
        ) else {
            continue;
        };
        if let (Ok(base), Ok(eff)) = (
            crate::sim::circuit_series(&c.id(), t1, t2),
            crate::sim::circuit_series(&c.id(), e1, e2),
        ) {
            circuit_series.push((base, eff));
        }
    }
    let pair_series: Vec<(&LatencySeries, &LatencySeries)> = effective
        .iter()
        .filter_map(|(id, eff)| store.get(id, Interface::Terrestrial).map(|t| (t, eff)))
        .collect();

    let at = |p: f64, base: &LatencySeries, eff: &LatencySeries| Some((base.percentile(p).ok()?, eff.percentile(p).ok()?));
    let rows = percentiles
        .iter()
        .map(|&p| {
            let pairs: Vec<(f64, f64)> = pair_series.iter().filter_map(|(b, e)| at(p, b, e)).collect();
            let circs: Vec<(f64, f64)> = circuit_series.iter().filter_map(|(b, e)| at(p, b, e)).collect();
            ReportRow {
                percentile: p,
                pairs: ReductionMetrics::from_pairs(&pairs),
                circuits: ReductionMetrics::from_pairs(&circs),
            }
        })
        .collect();
    ReductionReport::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visibility {
    pub pair_fraction: f64,
    pub circuit_fraction: f64,
}

/// Share of pairs whose sender, and of circuits whose entry and middle,
/// route through the satellite operator.
pub fn adversary_visibility(plan: &DeploymentPlan, pairs: &[(String, String)], circuits: &[Circuit]) -> Visibility {
    let frac = |hit: usize, n: usize| if n == 0 { 0.0 } else { hit as f64 / n as f64 };
    let pair_hits = pairs.iter().filter(|(src, _)| plan.contains(src)).count();
    let circuit_hits = circuits
        .iter()
        .filter(|c| plan.contains(&c.entry) && plan.contains(&c.middle))
        .count();
    Visibility {
        pair_fraction: frac(pair_hits, pairs.len()),
        circuit_fraction: frac(circuit_hits, circuits.len()),
    }
}

/// `P(b_t > P_q(b) | a_t > P_q(a))` over steps where both series have a
/// sample.
pub fn tail_correlation(a: &LatencySeries, b: &LatencySeries, q: f64) -> Result<f64, DualHomeError> {
    if a.samples.len() != b.samples.len() {
        return Err(DualHomeError::Misaligned(format!("{} / {}", a.id, b.id)));
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(DualHomeError::Domain(q));
    }
    let joint: Vec<(f64, f64)> = a
        .samples
        .iter()
        .zip(&b.samples)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if joint.len() < MIN_JOINT_SAMPLES {
        return Err(DualHomeError::InsufficientData {
            needed: MIN_JOINT_SAMPLES,
            available: joint.len(),
        });
    }
    let threshold = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[nearest_rank_index(v.len(), q)]
    };
    let ta = threshold(joint.iter().map(|j| j.0).collect());
    let tb = threshold(joint.iter().map(|j| j.1).collect());
    let given = joint.iter().filter(|j| j.0 > ta).count();
    if given == 0 {
        return Err(DualHomeError::UndefinedConditional);
    }
    let both = joint.iter().filter(|j| j.0 > ta && j.1 > tb).count();
    Ok(both as f64 / given as f64)
}

/// Probe traffic of one relay per day: two interfaces per probed peer.
pub fn probe_overhead_bytes_per_day(budget: usize, interval_s: f64, probe_bytes: f64) -> f64 {
    86_400.0 / interval_s * budget as f64 * 2.0 * probe_bytes
}

/// Page-load-time reduction for an RTT reduction.
pub fn rtt_to_plt_ms(rtt_reduction_ms: f64) -> Result<f64, DualHomeError> {
    if !(rtt_reduction_ms >= 0.0) {
        return Err(DualHomeError::Domain(rtt_reduction_ms));
    }
    Ok(PLT_PER_RTT * rtt_reduction_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoCoord;
    use proptest::prelude::*;
    use rand::Rng;

    fn hist(outcomes: &[bool]) -> IfaceHistory {
        let mut h = IfaceHistory::default();
        for (i, &sat_wins) in outcomes.iter().enumerate() {
            let (s, t) = if sat_wins { (1.0, 2.0) } else { (2.0, 1.0) };
            h.push(Measurement { t: i as f64, sat_ms: s, ter_ms: t }).unwrap();
        }
        h
    }

    #[test]
    fn entropy_values() {
        assert_eq!(faster_iface_entropy(&hist(&[true, false, true, false])), 1.0);
        assert_eq!(faster_iface_entropy(&hist(&[true; 5])), 0.0);
        assert!((faster_iface_entropy(&hist(&[true, false, false, false])) - 0.8113).abs() < 1e-4);
        assert_eq!(faster_iface_entropy(&IfaceHistory::default()), 1.0);
        let mut tie = IfaceHistory::default();
        tie.push(Measurement { t: 0.0, sat_ms: 5.0, ter_ms: 5.0 }).unwrap();
        assert_eq!(faster_iface_entropy(&tie), 0.0);
        assert!(tie.push(Measurement { t: -1.0, sat_ms: 5.0, ter_ms: 5.0 }).is_err());
    }

    #[test]
    fn priorities() {
        let mut h = hist(&[true, false]);
        for m in h.records.iter_mut() {
            m.t = 100.0;
        }
        let state: BTreeMap<String, IfaceHistory> = [("a".to_string(), h.clone()), ("b".to_string(), h)].into();
        let s = update_priorities(&state, 100.0, 0.5);
        assert!(s.values().all(|&v| v == 0.5));
        assert!(update_priorities(&state, 200.0, 1.0).values().all(|&v| v == 1.0));

        let at = |t: f64| {
            let mut h = IfaceHistory::default();
            h.push(Measurement { t, sat_ms: 1.0, ter_ms: 2.0 }).unwrap();
            h
        };
        let state: BTreeMap<String, IfaceHistory> = [("x".to_string(), at(900.0)), ("y".to_string(), at(800.0))].into();
        let s = update_priorities(&state, 1000.0, 0.5);
        assert_eq!((s["x"], s["y"]), (0.25, 0.5));
        assert_eq!(select_top(&s, 1), vec!["y".to_string()]);

        let mut fresh = state.clone();
        fresh.insert("new".into(), IfaceHistory::default());
        assert_eq!(update_priorities(&fresh, 1000.0, 0.0)["new"], 1.0);
    }

    fn series(id: &str, iface: Interface, v: &[f64]) -> LatencySeries {
        LatencySeries {
            id: id.into(),
            interface: iface,
            start: 0.0,
            step_s: 300.0,
            samples: v.iter().copied().map(Some).collect(),
        }
    }

    fn peer(id: &str, sat: &[f64], ter: &[f64]) -> (String, PeerSeries) {
        (id.into(), (series(id, Interface::Satellite, sat), series(id, Interface::Terrestrial, ter)))
    }

    #[test]
    fn constant_series_switch_after_first_probe() {
        let peers: BTreeMap<_, _> = [peer("p", &[10.0; 6], &[20.0; 6])].into();
        let out = run_dual_homing(&peers, &SchedulerConfig::default()).unwrap();
        let v: Vec<f64> = out["p"].valid().collect();
        assert_eq!(v, vec![20.0, 10.0, 10.0, 10.0, 10.0, 10.0]);

        let none = SchedulerConfig { budget: 0, ..SchedulerConfig::default() };
        let out = run_dual_homing(&peers, &none).unwrap();
        assert!(out["p"].valid().all(|x| x == 20.0));
    }

    #[test]
    fn slack_prefers_satellite_within_margin() {
        let peers: BTreeMap<_, _> = [peer("p", &[21.0; 3], &[20.0; 3])].into();
        let cfg = SchedulerConfig { slack_percent: 10.0, ..SchedulerConfig::default() };
        let v: Vec<f64> = run_dual_homing(&peers, &cfg).unwrap()["p"].valid().collect();
        assert_eq!(v, vec![20.0, 21.0, 21.0]);
    }

    #[test]
    fn perfect_information_is_pointwise_min() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut peers = BTreeMap::new();
        for i in 0..7 {
            let sat: Vec<f64> = (0..50).map(|_| rng.gen_range(5.0..50.0)).collect();
            let ter: Vec<f64> = (0..50).map(|_| rng.gen_range(5.0..50.0)).collect();
            let (k, v) = peer(&format!("p{i}"), &sat, &ter);
            peers.insert(k, v);
        }
        let cfg = SchedulerConfig { interval_s: 300.0, budget: 7, ..SchedulerConfig::default() };
        let out = run_dual_homing(&peers, &cfg).unwrap();
        for (k, (sat, ter)) in &peers {
            let eff = &out[k].samples;
            assert_eq!(eff[0], ter.samples[0]);
            for ((e, s), t) in eff.iter().zip(&sat.samples).zip(&ter.samples).skip(1) {
                assert_eq!(*e, Some(s.unwrap().min(t.unwrap())));
            }
        }
    }

    #[test]
    fn misaligned_peers_rejected() {
        let mut peers: BTreeMap<_, _> = [peer("a", &[1.0; 3], &[1.0; 3])].into();
        peers.insert("b".into(), (series("b", Interface::Satellite, &[1.0; 4]), series("b", Interface::Terrestrial, &[1.0; 4])));
        assert!(matches!(run_dual_homing(&peers, &SchedulerConfig::default()), Err(DualHomeError::Misaligned(_))));
        let bad = SchedulerConfig { mix: 1.5, ..SchedulerConfig::default() };
        assert!(run_dual_homing(&BTreeMap::new(), &bad).is_err());
    }

    fn relays(weights: &[f64]) -> Vec<Relay> {
        weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Relay {
                fingerprint: format!("R{i:03}"),
                position: GeoCoord::new(0.0, i as f64).unwrap(),
                bandwidth_weight: w,
            })
            .collect()
    }

    #[test]
    fn deployment_scenarios() {
        let rs = relays(&[5.0, 3.0, 1.0]);
        let top = assign_deployment(&rs, Scenario::TopN, 2, 0);
        assert_eq!(top.members, ["R000", "R001"].map(String::from).into());
        assert_eq!(assign_deployment(&rs, Scenario::TopN, 3, 0).members.len(), 3);
        assert_eq!(assign_deployment(&rs, Scenario::RandomN, 10, 0).members.len(), 3);
        let w = assign_deployment(&relays(&[0.0, 0.0, 1.0]), Scenario::WeightedN, 3, 4);
        assert_eq!(w.members.len(), 3);
        let json = serde_json::to_string(&top).unwrap();
        assert!(json.contains("\"scenario\":\"top-n\""));
        assert_eq!(serde_json::from_str::<DeploymentPlan>(&json).unwrap(), top);
    }

    #[test]
    fn equal_weights_match_uniform_sampling() {
        let rs = relays(&[1.0; 10]);
        let mut w = [0usize; 10];
        let mut u = [0usize; 10];
        for seed in 0..1000 {
            for m in assign_deployment(&rs, Scenario::WeightedN, 3, seed).members {
                w[m[1..].parse::<usize>().unwrap()] += 1;
            }
            for m in assign_deployment(&rs, Scenario::RandomN, 3, seed + 10_000).members {
                u[m[1..].parse::<usize>().unwrap()] += 1;
            }
        }
        // expected 300 per relay; chi-square with 9 dof, 99.9% quantile 27.9
        for counts in [w, u] {
            let chi: f64 = counts.iter().map(|&c| (c as f64 - 300.0).powi(2) / 300.0).sum();
            assert!(chi < 27.9, "{counts:?} chi2 {chi}");
        }
    }

    fn toy_store() -> (Vec<Circuit>, SeriesStore) {
        // A→B satellite faster, B→C satellite slower
        let mut store = SeriesStore::new();
        let n = 30;
        store.insert(series("A->B", Interface::Satellite, &vec![30.0; n]));
        store.insert(series("A->B", Interface::Terrestrial, &vec![50.0; n]));
        store.insert(series("B->C", Interface::Satellite, &vec![90.0; n]));
        store.insert(series("B->C", Interface::Terrestrial, &vec![40.0; n]));
        (vec![Circuit::new("A", "B", "C").unwrap()], store)
    }

    #[test]
    fn toy_deployment_report() {
        let (circuits, store) = toy_store();
        let cfg = SchedulerConfig::default();
        let empty = DeploymentPlan { members: BTreeSet::new(), ..DeploymentPlan::everyone(&[]) };
        let r = evaluate_deployment(&circuits, &store, &empty, &cfg, &[50.0]).unwrap();
        assert_eq!(r.rows[0].pairs.fraction_reduced, 0.0);
        assert_eq!(r.rows[0].circuits.fraction_reduced, 0.0);
        assert_eq!(r.rows[0].pairs.mean_change_pct, Some(0.0));

        let all = DeploymentPlan {
            members: ["A", "B", "C"].map(String::from).into(),
            ..empty.clone()
        };
        let r = evaluate_deployment(&circuits, &store, &all, &cfg, &[50.0, 95.0]).unwrap();
        // A->B: 50 -> 30 after the first step; B->C stays terrestrial at 40
        let row = &r.rows[0];
        assert_eq!(row.pairs.count, 2);
        assert_eq!(row.pairs.fraction_reduced, 0.5);
        assert_eq!(row.pairs.mean_reduction_ms, Some(20.0));
        assert_eq!(row.pairs.mean_reduction_pct, Some(40.0));
        assert_eq!(row.pairs.mean_increase_ms, None);
        assert_eq!(row.circuits.fraction_reduced, 1.0);
        assert_eq!(row.circuits.mean_reduction_ms, Some(20.0));
        assert!((row.circuits.mean_reduction_pct.unwrap() - 20.0 / 90.0 * 100.0).abs() < 1e-9);
        // 29 of 30 samples are 30 ms, so the 95th percentile (rank 29) is 30
        assert_eq!(r.rows[1].pairs.mean_reduction_ms, Some(20.0));
        assert_eq!(r.average_pairs.fraction_reduced, 0.5);

        let mut buf = Vec::new();
        r.write_csv(&mut buf, Some("x")).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2 + 2 * 2 + 2);
    }

    #[test]
    fn exit_relays_never_send_over_satellite() {
        let (circuits, store) = toy_store();
        let only_exit = DeploymentPlan {
            members: ["C".to_string()].into(),
            ..DeploymentPlan::everyone(&[])
        };
        let r = evaluate_deployment(&circuits, &store, &only_exit, &SchedulerConfig::default(), &[50.0]).unwrap();
        assert_eq!(r.rows[0].circuits.fraction_reduced, 0.0);
    }

    #[test]
    fn visibility_rules() {
        let circuits = vec![Circuit::new("e", "m", "x").unwrap()];
        let pairs = vec![("e".to_string(), "m".to_string()), ("m".to_string(), "x".to_string())];
        let plan = |m: &[&str]| DeploymentPlan {
            members: m.iter().map(|s| s.to_string()).collect(),
            ..DeploymentPlan::everyone(&[])
        };
        let v = adversary_visibility(&plan(&["e"]), &pairs, &circuits);
        assert_eq!((v.pair_fraction, v.circuit_fraction), (0.5, 0.0));
        let v = adversary_visibility(&plan(&["e", "m", "x"]), &pairs, &circuits);
        assert_eq!((v.pair_fraction, v.circuit_fraction), (1.0, 1.0));
        let v = adversary_visibility(&plan(&[]), &pairs, &circuits);
        assert_eq!((v.pair_fraction, v.circuit_fraction), (0.0, 0.0));
    }

    #[test]
    fn tail_correlation_cases() {
        let v: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64).collect();
        let a = LatencySeries::from_values("a", Interface::Terrestrial, &v);
        assert_eq!(tail_correlation(&a, &a, 95.0).unwrap(), 1.0);
        let flat = LatencySeries::from_values("f", Interface::Terrestrial, &[1.0; 200]);
        assert_eq!(tail_correlation(&flat, &a, 95.0), Err(DualHomeError::UndefinedConditional));
        let short = LatencySeries::from_values("s", Interface::Terrestrial, &[1.0; 50]);
        assert!(matches!(tail_correlation(&short, &short, 95.0), Err(DualHomeError::InsufficientData { .. })));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let p = tail_correlation(
            &LatencySeries::from_values("x", Interface::Terrestrial, &x),
            &LatencySeries::from_values("y", Interface::Terrestrial, &y),
            95.0,
        )
        .unwrap();
        assert!((p - 0.05).abs() <= 0.015, "{p}");
    }

    #[test]
    fn overhead_and_plt() {
        assert_eq!(probe_overhead_bytes_per_day(50, 300.0, 104.0), 2_995_200.0);
        assert_eq!(probe_overhead_bytes_per_day(0, 300.0, 104.0), 0.0);
        assert_eq!(probe_overhead_bytes_per_day(100, 300.0, 104.0), 2.0 * 2_995_200.0);
        assert_eq!(rtt_to_plt_ms(50.0).unwrap(), 1000.0);
        assert!((rtt_to_plt_ms(21.8).unwrap() - 436.0).abs() < 1e-9);
        assert_eq!(rtt_to_plt_ms(0.0).unwrap(), 0.0);
        assert!(rtt_to_plt_ms(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn effective_bounded_by_inputs(
            sat in prop::collection::vec(1.0f64..100.0, 30),
            ter in prop::collection::vec(1.0f64..100.0, 30),
            budget in 0usize..3,
            every in 1usize..4,
        ) {
            let peers: BTreeMap<_, _> = [peer("p", &sat, &ter), peer("q", &ter, &sat)].into();
            let cfg = SchedulerConfig { interval_s: 300.0 * every as f64, budget, ..SchedulerConfig::default() };
            let out = run_dual_homing(&peers, &cfg).unwrap();
            for (k, (s, t)) in &peers {
                for i in 0..30 {
                    let e = out[k].samples[i].unwrap();
                    prop_assert!(e <= s.samples[i].unwrap().max(t.samples[i].unwrap()));
                }
            }
        }

        #[test]
        fn dominant_satellite_never_worse(
            ter in prop::collection::vec(2.0f64..100.0, 30),
            gap in prop::collection::vec(0.0f64..1.0, 30),
        ) {
            let sat: Vec<f64> = ter.iter().zip(&gap).map(|(t, g)| t * (1.0 - 0.5 * g)).collect();
            let peers: BTreeMap<_, _> = [peer("p", &sat, &ter)].into();
            let out = run_dual_homing(&peers, &SchedulerConfig::default()).unwrap();
            for (e, t) in out["p"].samples.iter().zip(&ter) {
                prop_assert!(e.unwrap() <= *t);
            }
        }

        #[test]
        fn visibility_monotone_in_plan(seed in 0u64..500, small in 0usize..10, extra in 0usize..10) {
            let rs = relays(&(0..20).map(|i| 1.0 + i as f64).collect::<Vec<_>>());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let circuits: Vec<Circuit> = (0..30)
                .map(|_| {
                    let idx = sample_indices(&mut rng, 20, 3);
                    Circuit::new(&rs[idx.index(0)].fingerprint, &rs[idx.index(1)].fingerprint, &rs[idx.index(2)].fingerprint).unwrap()
                })
                .collect();
            let pairs: Vec<(String, String)> = circuits
                .iter()
                .flat_map(|c| c.hops().map(|(a, b)| (a.to_string(), b.to_string())))
                .collect();
            let a = assign_deployment(&rs, Scenario::TopN, small, 0);
            let b = assign_deployment(&rs, Scenario::TopN, small + extra, 0);
            prop_assert!(a.members.is_subset(&b.members));
            let (va, vb) = (adversary_visibility(&a, &pairs, &circuits), adversary_visibility(&b, &pairs, &circuits));
            prop_assert!(va.pair_fraction <= vb.pair_fraction);
            prop_assert!(va.circuit_fraction <= vb.circuit_fraction);
        }

        #[test]
        fn tail_correlation_rank_invariant(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..300).map(|_| rng.gen_range(1.0..100.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| v + rng.gen_range(0.0..60.0)).collect();
            let s = |id: &str, v: &[f64]| LatencySeries::from_values(id, Interface::Terrestrial, v);
            let base = tail_correlation(&s("x", &x), &s("y", &y), 95.0).unwrap();
            let fx: Vec<f64> = x.iter().map(|v| v.ln() * 3.0 + 7.0).collect();
            let fy: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            prop_assert_eq!(base, tail_correlation(&s("x", &fx), &s("y", &fy), 95.0).unwrap());
        }
    }
}

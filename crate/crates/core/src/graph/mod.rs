//! Time-stamped routing graphs between two relays.
//!
//! A snapshot holds the two endpoint relays plus, for satellite strategies,
//! the propagated constellation, ground stations and PoPs. Edge weights are
//! one-way latencies: link length divided by a speed drawn from the
//! matching ECDF, except ISLs (vacuum light speed) and station-to-PoP links
//! (a fixed constant).
//!
//! Satellite use is outbound-only: the sending relay reaches satellites
//! over USLs and the receiving relay is reached from PoPs over UPLs, so
//! every satellite path has the shape relay → sat (→ sat …) → station → PoP
//! → relay.

mod paths;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{
    haversine_km, line_of_sight_clear, propagate_all, sat_distance_km, slant_geometry, GeoCoord,
    GeoError, OrbitalElements, SatState, SPEED_OF_LIGHT_KM_S,
};
use crate::speeds::{BucketedSpeedModel, SpeedEcdf};

pub use paths::{path_latency, shortest_path, yen, Adjacency, PathResult};

pub const DEFAULT_K: usize = 10;

/// Lower bound on any edge latency; keeps co-located endpoints from
/// producing zero-latency links.
pub const MIN_LINK_LATENCY_MS: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("no route between the endpoints")]
    NoRoute,
    #[error("terrestrial speed model has no populated bucket")]
    EmptySpeedModel,
    #[error("refresh time {new} precedes snapshot time {old}")]
    TimeReversal { old: f64, new: f64 },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Satellite,
    GroundStation,
    PoP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LinkKind {
    /// relay – relay, terrestrial
    Iul,
    /// relay – satellite
    Usl,
    /// satellite – satellite laser link
    Isl,
    /// ground station – satellite
    Gsl,
    /// ground station – PoP
    Gpl,
    /// relay – PoP, terrestrial
    Upl,
}

impl LinkKind {
    pub const ALL: [LinkKind; 6] = [
        LinkKind::Iul,
        LinkKind::Usl,
        LinkKind::Isl,
        LinkKind::Gsl,
        LinkKind::Gpl,
        LinkKind::Upl,
    ];

    pub fn endpoint_kinds(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            LinkKind::Iul => (User, User),
            LinkKind::Usl => (User, Satellite),
            LinkKind::Isl => (Satellite, Satellite),
            LinkKind::Gsl => (GroundStation, Satellite),
            LinkKind::Gpl => (GroundStation, PoP),
            LinkKind::Upl => (User, PoP),
        }
    }

    /// Whether an edge of this kind may join nodes of kinds `a` and `b`.
    pub fn admits(self, a: NodeKind, b: NodeKind) -> bool {
        let (x, y) = self.endpoint_kinds();
        (a, b) == (x, y) || (a, b) == (y, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoutingStrategy {
    TerrestrialOnly,
    SingleBentPipe,
    IslEnabled,
}

impl RoutingStrategy {
    pub fn enables(self, link: LinkKind) -> bool {
        use LinkKind::*;
        match self {
            RoutingStrategy::TerrestrialOnly => link == Iul,
            RoutingStrategy::SingleBentPipe => matches!(link, Usl | Gsl | Gpl | Upl),
            RoutingStrategy::IslEnabled => matches!(link, Usl | Isl | Gsl | Gpl | Upl),
        }
    }

    pub fn uses_satellites(self) -> bool {
        self != RoutingStrategy::TerrestrialOnly
    }
}

impl fmt::Display for RoutingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoutingStrategy::TerrestrialOnly => "terrestrial",
            RoutingStrategy::SingleBentPipe => "bent-pipe",
            RoutingStrategy::IslEnabled => "isl",
        })
    }
}

impl FromStr for RoutingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "terrestrial" | "terrestrial-only" => Ok(RoutingStrategy::TerrestrialOnly),
            "bent-pipe" | "single-bent-pipe" => Ok(RoutingStrategy::SingleBentPipe),
            "isl" | "isl-enabled" => Ok(RoutingStrategy::IslEnabled),
            other => Err(format!("unknown routing strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IslTopology {
    /// Intra-plane neighbours plus the nearest satellite in each adjacent
    /// plane. Satellites without plane information fall back to nearest-4.
    PlusGrid,
    NearestK(usize),
}

impl FromStr for IslTopology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "plus-grid" || s == "+grid" {
            return Ok(IslTopology::PlusGrid);
        }
        s.strip_prefix("nearest-")
            .and_then(|k| k.parse().ok())
            .map(IslTopology::NearestK)
            .ok_or_else(|| format!("unknown ISL topology {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub elevation_threshold_deg: f64,
    pub gpl_latency_ms: f64,
    pub isl_topology: IslTopology,
    pub isl_processing_ms: f64,
    /// ISLs must pass at least this far above the surface.
    pub isl_clearance_km: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            elevation_threshold_deg: 25.0,
            gpl_latency_ms: 5.0,
            isl_topology: IslTopology::PlusGrid,
            isl_processing_ms: 0.0,
            isl_clearance_km: 80.0,
        }
    }
}

/// A ground station, PoP or relay location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSite {
    pub id: String,
    pub position: GeoCoord,
}

impl GroundSite {
    pub fn new(id: impl Into<String>, position: GeoCoord) -> Self {
        Self {
            id: id.into(),
            position,
        }
    }
}

/// Stations and PoPs with each station's nearest PoP.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundSegment {
    pub stations: Vec<GroundSite>,
    pub pops: Vec<GroundSite>,
    station_pop: Vec<Option<usize>>,
}

impl GroundSegment {
    pub fn new(stations: Vec<GroundSite>, pops: Vec<GroundSite>) -> Self {
        let station_pop = stations
            .iter()
            .map(|s| {
                pops.iter()
                    .enumerate()
                    .map(|(i, p)| (i, haversine_km(s.position, p.position)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(i, _)| i)
            })
            .collect();
        Self {
            stations,
            pops,
            station_pop,
        }
    }

    pub fn nearest_pop(&self, station: usize) -> Option<usize> {
        self.station_pop[station]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedModels {
    pub terrestrial: BucketedSpeedModel,
    pub satellite: SpeedEcdf,
}

/// Geometry of one time step that does not depend on the relay pair:
/// satellite positions, ISL lengths and station visibility.
#[derive(Debug, Clone)]
pub struct SnapshotGeometry {
    pub t: f64,
    pub sats: Vec<SatState>,
    /// `(sat_a, sat_b, length_km)` with `sat_a < sat_b`.
    pub isl: Vec<(usize, usize, f64)>,
    /// `(station, sat, slant_km)` for satellites above the threshold.
    pub gsl: Vec<(usize, usize, f64)>,
}

impl SnapshotGeometry {
    pub fn new(t: f64, sats: Vec<SatState>, ground: &GroundSegment, cfg: &GraphConfig) -> Self {
        let isl = isl_links(&sats, cfg);
        let mut gsl = Vec::new();
        for (gi, g) in ground.stations.iter().enumerate() {
            for (si, s) in sats.iter().enumerate() {
                let geo = slant_geometry(g.position, s);
                if geo.elevation_deg >= cfg.elevation_threshold_deg {
                    gsl.push((gi, si, geo.slant_km));
                }
            }
        }
        Self { t, sats, isl, gsl }
    }

    /// Propagates `elements` to `t` and derives the geometry.
    pub fn propagate(
        elements: &[OrbitalElements],
        t: f64,
        ground: &GroundSegment,
        cfg: &GraphConfig,
    ) -> Result<Self, GeoError> {
        Ok(Self::new(t, propagate_all(elements, t)?, ground, cfg))
    }

    /// Satellites at or above the elevation threshold from `ground`.
    pub fn visible_from(&self, ground: GeoCoord, cfg: &GraphConfig) -> Vec<(usize, f64)> {
        self.sats
            .iter()
            .enumerate()
            .filter_map(|(i, s)| {
                let geo = slant_geometry(ground, s);
                (geo.elevation_deg >= cfg.elevation_threshold_deg).then_some((i, geo.slant_km))
            })
            .collect()
    }
}

fn isl_links(sats: &[SatState], cfg: &GraphConfig) -> Vec<(usize, usize, f64)> {
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut add = |a: usize, b: usize| {
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    };

    let nearest_k = |k: usize, pool: &[usize], add: &mut dyn FnMut(usize, usize)| {
        for &i in pool {
            let mut d: Vec<(f64, usize)> = pool
                .iter()
                .filter(|&&j| j != i && line_of_sight_clear(&sats[i], &sats[j], cfg.isl_clearance_km))
                .map(|&j| (sat_distance_km(&sats[i], &sats[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in d.iter().take(k) {
                add(i, j);
            }
        }
    };

    match cfg.isl_topology {
        IslTopology::NearestK(k) => {
            let all: Vec<usize> = (0..sats.len()).collect();
            nearest_k(k, &all, &mut add);
        }
        IslTopology::PlusGrid => {
            use std::collections::BTreeMap;
            let mut planes: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
            let mut loose = Vec::new();
            for (i, s) in sats.iter().enumerate() {
                match s.plane {
                    Some(p) => planes.entry((p.shell, p.plane)).or_default().push(i),
                    None => loose.push(i),
                }
            }
            for members in planes.values_mut() {
                members.sort_by(|&a, &b| {
                    let pa = sats[a].plane.unwrap().phase_deg;
                    let pb = sats[b].plane.unwrap().phase_deg;
                    pa.total_cmp(&pb).then(a.cmp(&b))
                });
                let m = members.len();
                for k in 0..m {
                    if m > 1 && (k + 1 < m || m > 2) {
                        add(members[k], members[(k + 1) % m]);
                    }
                }
            }
            for (&(shell, plane), members) in &planes {
                let count = sats[members[0]].plane.unwrap().planes_in_shell.max(1);
                for neighbour in [(plane + 1) % count, (plane + count - 1) % count] {
                    if neighbour == plane {
                        continue;
                    }
                    let Some(other) = planes.get(&(shell, neighbour)) else {
                        continue;
                    };
                    for &i in members {
                        let best = other
                            .iter()
                            .map(|&j| (sat_distance_km(&sats[i], &sats[j]), j))
                            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        if let Some((_, j)) = best {
                            add(i, j);
                        }
                    }
                }
            }
            nearest_k(4, &loose, &mut add);
        }
    }

    pairs
        .into_iter()
        .filter(|&(a, b)| line_of_sight_clear(&sats[a], &sats[b], cfg.isl_clearance_km))
        .map(|(a, b)| (a, b, sat_distance_km(&sats[a], &sats[b])))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    pub position: GeoCoord,
    /// Zero for ground nodes.
    pub altitude_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: LinkKind,
    pub length_km: f64,
    pub latency_ms: f64,
}

/// Endpoint relays of a directed pair: `src` sends, `dst` receives.
#[derive(Debug, Clone, PartialEq)]
pub struct Endpoints {
    pub src: GroundSite,
    pub dst: GroundSite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingGraph {
    pub snapshot_time: f64,
    pub strategy: RoutingStrategy,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(skip)]
    adjacency: Vec<Vec<(usize, f64)>>,
    #[serde(skip)]
    endpoints: Option<Endpoints>,
}

/// Node index of the sending relay in every built graph.
pub const SRC_NODE: usize = 0;
/// Node index of the receiving relay in every built graph.
pub const DST_NODE: usize = 1;

fn latency_ms(length_km: f64, speed_km_s: f64) -> f64 {
    (length_km / speed_km_s * 1000.0).max(MIN_LINK_LATENCY_MS)
}

impl RoutingGraph {
    /// Builds a graph from explicit nodes and edges.
    pub fn from_parts(snapshot_time: f64, strategy: RoutingStrategy, nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.a].push((e.b, e.latency_ms));
            adjacency[e.b].push((e.a, e.latency_ms));
        }
        Self {
            snapshot_time,
            strategy,
            nodes,
            edges,
            adjacency,
            endpoints: None,
        }
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn edges_of_kind(&self, kind: LinkKind) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

/// Instantiates the snapshot graph for one directed relay pair. Every
/// sampled edge draws one uniform number from `rng`, in edge order.
pub fn build_graph<R: Rng + ?Sized>(
    geometry: &SnapshotGeometry,
    ground: &GroundSegment,
    endpoints: &Endpoints,
    strategy: RoutingStrategy,
    cfg: &GraphConfig,
    speeds: &SpeedModels,
    rng: &mut R,
) -> Result<RoutingGraph, GraphError> {
    let user = |site: &GroundSite| Node {
        id: site.id.clone(),
        kind: NodeKind::User,
        position: site.position,
        altitude_km: 0.0,
    };
    let mut nodes = vec![user(&endpoints.src), user(&endpoints.dst)];
    let mut edges = Vec::new();
    let terrestrial = |len: f64, u: f64| -> Result<f64, GraphError> {
        let v = speeds
            .terrestrial
            .sample(len, u)
            .ok_or(GraphError::EmptySpeedModel)?;
        Ok(latency_ms(len, v))
    };

    if strategy.enables(LinkKind::Iul) {
        let len = haversine_km(endpoints.src.position, endpoints.dst.position);
        edges.push(Edge {
            a: SRC_NODE,
            b: DST_NODE,
            kind: LinkKind::Iul,
            length_km: len,
            latency_ms: terrestrial(len, rng.gen())?,
        });
    }

    if strategy.uses_satellites() {
        let sat0 = nodes.len();
        nodes.extend(geometry.sats.iter().map(|s| Node {
            id: s.sat_id.clone(),
            kind: NodeKind::Satellite,
            position: s.position,
            altitude_km: s.altitude_km,
        }));
        let gs0 = nodes.len();
        nodes.extend(ground.stations.iter().map(|g| Node {
            id: g.id.clone(),
            kind: NodeKind::GroundStation,
            position: g.position,
            altitude_km: 0.0,
        }));
        let pop0 = nodes.len();
        nodes.extend(ground.pops.iter().map(|p| Node {
            id: p.id.clone(),
            kind: NodeKind::PoP,
            position: p.position,
            altitude_km: 0.0,
        }));

        if strategy.enables(LinkKind::Usl) {
            for (si, slant) in geometry.visible_from(endpoints.src.position, cfg) {
                let v = speeds.satellite.sample(rng.gen());
                edges.push(Edge {
                    a: SRC_NODE,
                    b: sat0 + si,
                    kind: LinkKind::Usl,
                    length_km: slant,
                    latency_ms: latency_ms(slant, v),
                });
            }
        }
        if strategy.enables(LinkKind::Isl) {
            for &(a, b, len) in &geometry.isl {
                edges.push(Edge {
                    a: sat0 + a,
                    b: sat0 + b,
                    kind: LinkKind::Isl,
                    length_km: len,
                    latency_ms: latency_ms(len, SPEED_OF_LIGHT_KM_S) + cfg.isl_processing_ms,
                });
            }
        }
        if strategy.enables(LinkKind::Gsl) {
            for &(gi, si, slant) in &geometry.gsl {
                let v = speeds.satellite.sample(rng.gen());
                edges.push(Edge {
                    a: gs0 + gi,
                    b: sat0 + si,
                    kind: LinkKind::Gsl,
                    length_km: slant,
                    latency_ms: latency_ms(slant, v),
                });
            }
        }
        if strategy.enables(LinkKind::Gpl) {
            for gi in 0..ground.stations.len() {
                if let Some(pi) = ground.nearest_pop(gi) {
                    edges.push(Edge {
                        a: gs0 + gi,
                        b: pop0 + pi,
                        kind: LinkKind::Gpl,
                        length_km: haversine_km(
                            ground.stations[gi].position,
                            ground.pops[pi].position,
                        ),
                        latency_ms: cfg.gpl_latency_ms.max(MIN_LINK_LATENCY_MS),
                    });
                }
            }
        }
        if strategy.enables(LinkKind::Upl) {
            for (pi, p) in ground.pops.iter().enumerate() {
                let len = haversine_km(p.position, endpoints.dst.position);
                edges.push(Edge {
                    a: DST_NODE,
                    b: pop0 + pi,
                    kind: LinkKind::Upl,
                    length_km: len,
                    latency_ms: terrestrial(len, rng.gen())?,
                });
            }
        }
    }

    let mut graph = RoutingGraph::from_parts(geometry.t, strategy, nodes, edges);
    graph.endpoints = Some(endpoints.clone());
    Ok(graph)
}

/// Re-derives the graph at time `t`: satellites are re-propagated, edge
/// existence recomputed and every sampled edge draws a fresh speed.
pub fn refresh_graph<R: Rng + ?Sized>(
    graph: &RoutingGraph,
    elements: &[OrbitalElements],
    ground: &GroundSegment,
    t: f64,
    cfg: &GraphConfig,
    speeds: &SpeedModels,
    rng: &mut R,
) -> Result<RoutingGraph, GraphError> {
    if t < graph.snapshot_time {
        return Err(GraphError::TimeReversal {
            old: graph.snapshot_time,
            new: t,
        });
    }
    let endpoints = graph.endpoints.clone().unwrap_or_else(|| Endpoints {
        src: GroundSite::new(graph.nodes[SRC_NODE].id.clone(), graph.nodes[SRC_NODE].position),
        dst: GroundSite::new(graph.nodes[DST_NODE].id.clone(), graph.nodes[DST_NODE].position),
    });
    let geometry = if graph.strategy.uses_satellites() {
        SnapshotGeometry::propagate(elements, t, ground, cfg)?
    } else {
        SnapshotGeometry {
            t,
            sats: Vec::new(),
            isl: Vec::new(),
            gsl: Vec::new(),
        }
    };
    build_graph(&geometry, ground, &endpoints, graph.strategy, cfg, speeds, rng)
}

/// Up to `k` loop-free paths between two nodes of `graph`, cheapest first.
pub fn k_shortest_paths(graph: &RoutingGraph, src: usize, dst: usize, k: usize) -> Vec<PathResult> {
    yen(graph.adjacency(), src, dst, k)
}

/// Mean latency of the `min(k, available)` cheapest paths.
pub fn topk_latency_ms(paths: &[PathResult], k: usize) -> Result<f64, GraphError> {
    let take = k.min(paths.len());
    if take == 0 {
        return Err(GraphError::NoRoute);
    }
    Ok(paths[..take].iter().map(|p| p.latency_ms).sum::<f64>() / take as f64)
}

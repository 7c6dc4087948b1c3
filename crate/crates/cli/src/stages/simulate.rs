use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use leolat::graph::{GroundSegment, RoutingStrategy, SpeedModels};
use leolat::sim::{pair_id, Interface, NetworkModel, SeriesStore, Simulator, Timeline};
use leolat::speeds::{BucketedSpeedModel, SpeedEcdf};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::ingest::{Constellation, CONSTELLATION, SATELLITE_MODEL, TERRESTRIAL_MODEL};
use super::{hop_pairs, load_circuits, load_relays, relay_index, SERIES_FILE};
use crate::artifacts::OutputDir;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "series/manifest.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateSummary {
    pub pairs: usize,
    pub computed: usize,
    pub reused: usize,
    pub steps: usize,
    pub rows: usize,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} pairs ({} computed, {} reused), {} steps, {} rows",
            self.pairs, self.computed, self.reused, self.steps, self.rows
        )
    }
}

/// Store file of one pair, relative to the output directory.
pub fn pair_file(id: &str) -> String {
    let digest = hex::encode(Sha256::digest(id.as_bytes()));
    format!("series/pairs/{}.csv", &digest[..16])
}

fn read_manifest(out: &OutputDir) -> BTreeSet<String> {
    if !out.is_current_csv(MANIFEST) {
        return BTreeSet::new();
    }
    std::fs::read_to_string(out.path(MANIFEST))
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "pair_id,file")
        .filter_map(|l| l.split(',').next().map(str::to_string))
        .collect()
}

fn manifest_text(out: &OutputDir, ids: &[String]) -> String {
    let mut s = format!("# {}\npair_id,file\n", out.stamp());
    for id in ids {
        s.push_str(&format!("{id},{}\n", pair_file(id)));
    }
    s
}

/// Loads a completed pair if its file is current and matches the timeline.
fn load_pair(out: &OutputDir, id: &str, timeline: &Timeline) -> Option<SeriesStore> {
    let rel = pair_file(id);
    let text = out.read_csv("simulate", &rel).ok()?;
    let stored = SeriesStore::read_csv(text.as_bytes(), &rel).ok()?;
    let mut store = SeriesStore::new();
    for iface in [Interface::Satellite, Interface::Terrestrial] {
        let mut s = stored.get(id, iface)?.clone();
        if s.samples.len() != timeline.steps() || (s.start - timeline.start).abs() > 1e-6 {
            return None;
        }
        s.start = timeline.start;
        s.step_s = timeline.step_s;
        store.insert(s);
    }
    Some(store)
}

pub fn simulate(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<SimulateSummary, CliError> {
    if !cfg.strategy.uses_satellites() {
        return Err(CliError::Config(format!(
            "strategy {} has no satellite path; use bent-pipe or isl",
            cfg.strategy
        )));
    }
    let out = OutputDir::new(cfg);
    let terrestrial: BucketedSpeedModel = out.read_json("ingest", TERRESTRIAL_MODEL)?;
    let satellite: SpeedEcdf = out.read_json("ingest", SATELLITE_MODEL)?;
    let constellation: Constellation = out.read_json("ingest", CONSTELLATION)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let by_fp = relay_index(&relays);
    let pairs = hop_pairs(&circuits);

    let start = cfg.start.unwrap_or_else(|| {
        constellation
            .elements
            .iter()
            .map(|e| e.epoch)
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let timeline = Timeline::new(start, cfg.step_s, cfg.duration_s).map_err(|e| CliError::Config(e.to_string()))?;

    let done = read_manifest(&out);
    let mut store = SeriesStore::new();
    let mut completed = Vec::new();
    let mut todo = Vec::new();
    for (a, b) in &pairs {
        let id = pair_id(a, b);
        match done.contains(&id).then(|| load_pair(&out, &id, &timeline)).flatten() {
            Some(s) => {
                store.extend(s);
                completed.push(id);
            }
            None => todo.push((a.as_str(), b.as_str(), id)),
        }
    }
    let reused = completed.len();
    log::info!("{} pairs to simulate, {reused} reused from a previous run", todo.len());
    // rewrite so the manifest lists exactly the pairs verified above
    crate::artifacts::write_atomic(&out.path(MANIFEST), manifest_text(&out, &completed).as_bytes())?;

    if !todo.is_empty() {
        let model = NetworkModel {
            elements: constellation.elements,
            ground: GroundSegment::new(constellation.stations, constellation.pops),
            graph: cfg.graph.clone(),
            speeds: SpeedModels { terrestrial, satellite },
        };
        let began = Instant::now();
        let sim = Simulator::new(model, timeline).map_err(CliError::data)?;
        log::info!("propagated {} steps in {:.1?}", timeline.steps(), began.elapsed());

        let manifest = Mutex::new(
            OpenOptions::new()
                .append(true)
                .open(out.path(MANIFEST))
                .map_err(CliError::io(out.path(MANIFEST)))?,
        );
        let finished = AtomicUsize::new(0);
        let total = todo.len();
        let run = |(a, b, id): &(&str, &str, String)| -> Result<SeriesStore, CliError> {
            let (src, dst) = (by_fp[a], by_fp[b]);
            let mut pair = SeriesStore::new();
            for strategy in [cfg.strategy, RoutingStrategy::TerrestrialOnly] {
                pair.insert(sim.simulate_pair(src, dst, strategy, cfg.k, cfg.seed).map_err(CliError::data)?);
            }
            out.write_csv(&pair_file(id), |w, c| pair.write_csv(w, c))?;
            let line = format!("{id},{}\n", pair_file(id));
            manifest
                .lock()
                .expect("manifest lock")
                .write_all(line.as_bytes())
                .map_err(CliError::io(out.path(MANIFEST)))?;
            let n = finished.fetch_add(1, Ordering::Relaxed) + 1;
            let secs = began.elapsed().as_secs_f64().max(1e-9);
            log::info!("pair {n}/{total} {id} ({:.2} pairs/s)", n as f64 / secs);
            Ok(pair)
        };
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            builder = builder.num_threads(j);
        }
        let pool = builder.build().map_err(CliError::data)?;
        let results: Vec<Result<SeriesStore, CliError>> = pool.install(|| todo.par_iter().map(run).collect());
        for r in results {
            store.extend(r?);
        }
        completed.extend(todo.into_iter().map(|t| t.2));
    }

    completed.sort();
    crate::artifacts::write_atomic(&out.path(MANIFEST), manifest_text(&out, &completed).as_bytes())?;
    out.write_csv(SERIES_FILE, |w, c| store.write_csv(w, c))?;
    let rows = store.iter().map(|s| s.samples.len()).sum();
    let by_iface: BTreeMap<Interface, usize> = store.iter().fold(BTreeMap::new(), |mut m, s| {
        *m.entry(s.interface).or_default() += usize::from(!s.is_valid());
        m
    });
    for (iface, n) in by_iface.into_iter().filter(|(_, n)| *n > 0) {
        log::warn!("{n} {iface} series have more than half of their steps without a route");
    }
    Ok(SimulateSummary {
        pairs: pairs.len(),
        computed: pairs.len() - reused,
        reused,
        steps: timeline.steps(),
        rows,
    })
}

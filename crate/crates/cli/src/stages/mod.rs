//! One function per subcommand. Each reads its inputs, checks upstream
//! stamps and writes its artifacts under the output directory.

mod analyze;
mod ingest;
mod report;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::path::Path;

use leolat::sim::{circuit_series, pair_id, read_circuits, read_relays, Circuit, Interface, Relay, SeriesStore};
use sha2::{Digest, Sha256};

use crate::artifacts::OutputDir;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub use analyze::{adversary, calibrate, correlate, deploy_eval, dualhome};
pub use ingest::{ingest, Constellation, IngestSummary};
pub use report::report;
pub use simulate::{pair_file, simulate, SimulateSummary};

pub const SERIES_FILE: &str = "series/series.csv";

/// Runs every stage in order.
pub fn run_all(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<(), CliError> {
    ingest(cfg)?;
    simulate(cfg, jobs)?;
    calibrate(cfg)?;
    dualhome(cfg)?;
    deploy_eval(cfg)?;
    adversary(cfg)?;
    correlate(cfg)?;
    report(cfg)?;
    Ok(())
}

/// A sub-seed for one named unit of work.
pub(crate) fn derive_seed(seed: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
        _ => CliError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

pub(crate) fn load_relays(cfg: &ExperimentConfig) -> Result<Vec<Relay>, CliError> {
    let path = &cfg.inputs.relays;
    read_relays(open(path)?, &path.display().to_string()).map_err(CliError::data)
}

pub(crate) fn load_circuits(cfg: &ExperimentConfig, relays: &[Relay]) -> Result<Vec<Circuit>, CliError> {
    let path = &cfg.inputs.circuits;
    let circuits = read_circuits(open(path)?, &path.display().to_string()).map_err(CliError::data)?;
    let known: BTreeSet<&str> = relays.iter().map(|r| r.fingerprint.as_str()).collect();
    for c in &circuits {
        for fp in [&c.entry, &c.middle, &c.exit] {
            if !known.contains(fp.as_str()) {
                return Err(CliError::Data(format!("{}: circuit {} uses unknown relay {fp}", path.display(), c.id())));
            }
        }
    }
    Ok(circuits)
}

/// Distinct directed hops of the circuits, in sorted order.
pub(crate) fn hop_pairs(circuits: &[Circuit]) -> Vec<(String, String)> {
    circuits
        .iter()
        .flat_map(|c| c.hops())
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub(crate) fn load_series(out: &OutputDir) -> Result<SeriesStore, CliError> {
    let text = out.read_csv("simulate", SERIES_FILE)?;
    SeriesStore::read_csv(text.as_bytes(), SERIES_FILE).map_err(CliError::data)
}

/// Circuit series for both interfaces, built from the hop series.
pub(crate) fn circuit_store(circuits: &[Circuit], pairs: &SeriesStore) -> SeriesStore {
    let mut out = SeriesStore::new();
    for c in circuits {
        let [(a, b), (x, y)] = c.hops();
        for iface in [Interface::Satellite, Interface::Terrestrial] {
            let (Some(h1), Some(h2)) = (pairs.get(&pair_id(a, b), iface), pairs.get(&pair_id(x, y), iface)) else {
                continue;
            };
            match circuit_series(&c.id(), h1, h2) {
                Ok(s) => out.insert(s),
                Err(e) => log::warn!("circuit {}: {e}", c.id()),
            }
        }
    }
    out
}

pub(crate) fn relay_index(relays: &[Relay]) -> BTreeMap<&str, &Relay> {
    relays.iter().map(|r| (r.fingerprint.as_str(), r)).collect()
}

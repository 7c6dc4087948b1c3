use std::fmt;
use std::path::Path;

use leolat::csvio::read_rows_from_path;
use leolat::geo::{assign_planes, parse_tle, GeoCoord, OrbitalElements};
use leolat::graph::GroundSite;
use leolat::speeds::{ingest_satellite, ingest_terrestrial, IngestStats, SatelliteRow, TerrestrialRow};
use serde::{Deserialize, Serialize};

use crate::artifacts::OutputDir;
use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const TERRESTRIAL_MODEL: &str = "models/terrestrial.json";
pub const SATELLITE_MODEL: &str = "models/satellite.json";
pub const CONSTELLATION: &str = "models/constellation.json";
pub const INGEST_SUMMARY: &str = "models/ingest.json";

/// Element sets with plane labels plus the ground segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Constellation {
    pub elements: Vec<OrbitalElements>,
    pub stations: Vec<GroundSite>,
    pub pops: Vec<GroundSite>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub tle_records: usize,
    pub tle_rejected: usize,
    pub satellites: usize,
    pub planes: usize,
    pub stations: usize,
    pub pops: usize,
    pub terrestrial: IngestStats,
    pub terrestrial_buckets: usize,
    pub satellite: IngestStats,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "tle: {} records, {} rejected, {} satellites in {} planes",
            self.tle_records, self.tle_rejected, self.satellites, self.planes
        )?;
        writeln!(f, "ground: {} stations, {} pops", self.stations, self.pops)?;
        for (name, s) in [("terrestrial", &self.terrestrial), ("satellite", &self.satellite)] {
            writeln!(
                f,
                "{name} baseline: {} rows, {} accepted, {} rejected ({} superluminal, {} invalid)",
                s.rows,
                s.accepted,
                s.superluminal + s.invalid,
                s.superluminal,
                s.invalid
            )?;
        }
        write!(f, "terrestrial model: {} distance buckets", self.terrestrial_buckets)
    }
}

#[derive(Deserialize)]
struct SiteRow {
    id: String,
    lat: f64,
    lon: f64,
}

fn rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    read_rows_from_path(path).map_err(CliError::data)
}

fn read_sites(path: &Path) -> Result<Vec<GroundSite>, CliError> {
    rows::<SiteRow>(path)?
        .into_iter()
        .map(|(line, r)| {
            GeoCoord::new(r.lat, r.lon)
                .map(|p| GroundSite::new(r.id, p))
                .map_err(|e| CliError::Data(format!("{}:{line}: {e}", path.display())))
        })
        .collect()
}

pub fn ingest(cfg: &ExperimentConfig) -> Result<IngestSummary, CliError> {
    let out = OutputDir::new(cfg);
    let tle_path = &cfg.inputs.tle;
    let text = std::fs::read_to_string(tle_path).map_err(|_| CliError::MissingInput(tle_path.clone()))?;
    let parsed = parse_tle(&text).map_err(|e| CliError::Data(format!("{}: {e}", tle_path.display())))?;
    for r in &parsed.rejected {
        log::warn!("{}: {r}", tle_path.display());
    }
    let mut elements = parsed.elements;
    if elements.is_empty() {
        return Err(CliError::Data(format!("{}: no usable element sets", tle_path.display())));
    }
    assign_planes(&mut elements, cfg.plane_incl_tol_deg, cfg.plane_raan_tol_deg);
    let planes = elements
        .iter()
        .filter_map(|e| e.plane.map(|(s, p, _)| (s, p)))
        .collect::<std::collections::BTreeSet<_>>()
        .len();

    let stations = read_sites(&cfg.inputs.stations)?;
    let pops = read_sites(&cfg.inputs.pops)?;

    let ter_rows: Vec<TerrestrialRow> = rows(&cfg.inputs.terrestrial_baseline)?.into_iter().map(|r| r.1).collect();
    let (terrestrial, ter_stats) = ingest_terrestrial(&ter_rows, cfg.bucket_km, cfg.delimiters)
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.inputs.terrestrial_baseline.display())))?;
    let sat_rows: Vec<SatelliteRow> = rows(&cfg.inputs.satellite_baseline)?.into_iter().map(|r| r.1).collect();
    let (satellite, sat_stats) = ingest_satellite(&sat_rows, cfg.delimiters)
        .map_err(|e| CliError::Data(format!("{}: {e}", cfg.inputs.satellite_baseline.display())))?;

    let summary = IngestSummary {
        tle_records: elements.len() + parsed.rejected.len(),
        tle_rejected: parsed.rejected.len(),
        satellites: elements.len(),
        planes,
        stations: stations.len(),
        pops: pops.len(),
        terrestrial: ter_stats,
        terrestrial_buckets: terrestrial.buckets.len(),
        satellite: sat_stats,
    };
    out.write_json(TERRESTRIAL_MODEL, &terrestrial)?;
    out.write_json(SATELLITE_MODEL, &satellite)?;
    out.write_json(
        CONSTELLATION,
        &Constellation {
            elements,
            stations,
            pops,
        },
    )?;
    out.write_json(INGEST_SUMMARY, &summary)?;
    Ok(summary)
}

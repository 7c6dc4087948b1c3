//! Experiment configuration: a flat `key = value` file.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths are
//! resolved against the directory holding the config file. Lists are
//! comma-separated. Every key except `seed` and the input paths has a
//! default; `measured` is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use leolat::calibrate::{default_percentiles, DEFAULT_RESAMPLES};
use leolat::dualhome::{Scenario, SchedulerConfig, DEFAULT_PROBE_BYTES, DEFAULT_TAIL_PERCENTILE};
use leolat::graph::{GraphConfig, IslTopology, RoutingStrategy, DEFAULT_K};
use leolat::sim::{DEFAULT_DURATION_S, DEFAULT_STEP_S};
use leolat::speeds::{DEFAULT_BUCKET_KM, DEFAULT_DELIMITERS};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Input dataset keys. All are required except `measured`.
pub const INPUT_KEYS: [&str; 8] = [
    "tle",
    "stations",
    "pops",
    "terrestrial_baseline",
    "satellite_baseline",
    "relays",
    "circuits",
    "measured",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    pub tle: PathBuf,
    pub stations: PathBuf,
    pub pops: PathBuf,
    pub terrestrial_baseline: PathBuf,
    pub satellite_baseline: PathBuf,
    pub relays: PathBuf,
    pub circuits: PathBuf,
    pub measured: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationLevel {
    Circuit,
    Pair,
}

impl FromStr for CalibrationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "circuit" => Ok(CalibrationLevel::Circuit),
            "pair" => Ok(CalibrationLevel::Pair),
            other => Err(format!("unknown calibration level {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub inputs: Inputs,
    pub seed: u64,
    pub out: PathBuf,
    /// Unix seconds; defaults to the newest TLE epoch.
    pub start: Option<f64>,
    pub step_s: f64,
    pub duration_s: f64,
    pub strategy: RoutingStrategy,
    pub k: usize,
    pub graph: GraphConfig,
    pub plane_incl_tol_deg: f64,
    pub plane_raan_tol_deg: f64,
    pub bucket_km: f64,
    pub delimiters: usize,
    pub report_percentiles: Vec<f64>,
    pub eval_percentiles: Vec<f64>,
    pub error_percentiles: Vec<u32>,
    pub resamples: usize,
    pub calibration_level: CalibrationLevel,
    pub scheduler: SchedulerConfig,
    pub scenarios: Vec<Scenario>,
    pub deploy_n: Vec<usize>,
    pub adversary_points: usize,
    pub tail_percentile: f64,
    pub probe_bytes: f64,
    pub distance_bucket_km: f64,
    /// Canonical form used for the config hash.
    canonical: BTreeMap<String, String>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| CliError::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Reads raw `key = value` pairs, rejecting duplicates and malformed lines.
pub fn parse_pairs(text: &str, source: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("{source}:{}: expected key = value", i + 1)));
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.insert(k.clone(), v).is_some() {
            return Err(CliError::Config(format!("{source}:{}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed_override: Option<u64>, out_override: Option<PathBuf>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let pairs = parse_pairs(&text, &path.display().to_string())?;
        Self::from_pairs(pairs, &base, seed_override, out_override)
    }

    pub fn from_pairs(
        mut pairs: BTreeMap<String, String>,
        base: &Path,
        seed_override: Option<u64>,
        out_override: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        if let Some(seed) = seed_override {
            pairs.insert("seed".into(), seed.to_string());
        }
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let mut canonical = BTreeMap::new();
        let mut paths = BTreeMap::new();
        for key in INPUT_KEYS {
            if let Some(v) = pairs.remove(key) {
                let p = resolve(&v);
                canonical.insert(key.to_string(), format!("sha256:{}", file_digest(&p)?));
                paths.insert(key, p);
            } else if key != "measured" {
                return Err(CliError::Config(format!("missing required key {key}")));
            }
        }
        let seed_text = pairs
            .remove("seed")
            .ok_or_else(|| CliError::Config("seed is required (config key or --seed)".into()))?;
        let seed: u64 = parse("seed", &seed_text)?;
        canonical.insert("seed".into(), seed.to_string());
        let out = match (out_override, pairs.remove("out")) {
            (Some(o), _) => o,
            (None, Some(v)) => resolve(&v),
            (None, None) => base.join("out"),
        };

        let mut take = |key: &str, default: String| -> String {
            let v = pairs.remove(key).unwrap_or(default);
            canonical.insert(key.to_string(), v.clone());
            v
        };
        let start_text = take("start", String::new());
        let start = if start_text.is_empty() { None } else { Some(parse("start", &start_text)?) };
        let step_s = parse("step_s", &take("step_s", DEFAULT_STEP_S.to_string()))?;
        let duration_s = parse("duration_s", &take("duration_s", DEFAULT_DURATION_S.to_string()))?;
        let strategy = parse("strategy", &take("strategy", "isl".into()))?;
        let k = parse("k", &take("k", DEFAULT_K.to_string()))?;
        let d = GraphConfig::default();
        let graph = GraphConfig {
            elevation_threshold_deg: parse("elevation_deg", &take("elevation_deg", d.elevation_threshold_deg.to_string()))?,
            gpl_latency_ms: parse("gpl_latency_ms", &take("gpl_latency_ms", d.gpl_latency_ms.to_string()))?,
            isl_topology: parse::<IslTopology>("isl_topology", &take("isl_topology", "plus-grid".into()))?,
            isl_processing_ms: parse("isl_processing_ms", &take("isl_processing_ms", d.isl_processing_ms.to_string()))?,
            isl_clearance_km: parse("isl_clearance_km", &take("isl_clearance_km", d.isl_clearance_km.to_string()))?,
        };
        let plane_incl_tol_deg = parse("plane_incl_tol_deg", &take("plane_incl_tol_deg", "0.5".into()))?;
        let plane_raan_tol_deg = parse("plane_raan_tol_deg", &take("plane_raan_tol_deg", "2".into()))?;
        let bucket_km = parse("bucket_km", &take("bucket_km", DEFAULT_BUCKET_KM.to_string()))?;
        let delimiters = parse("delimiters", &take("delimiters", DEFAULT_DELIMITERS.to_string()))?;
        let report_percentiles = parse_list("report_percentiles", &take("report_percentiles", "50,90,95,98".into()))?;
        let grid = default_percentiles().iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let eval_percentiles = parse_list("eval_percentiles", &take("eval_percentiles", grid.clone()))?;
        let error_percentiles = parse_list("error_percentiles", &take("error_percentiles", grid))?;
        let resamples = parse("resamples", &take("resamples", DEFAULT_RESAMPLES.to_string()))?;
        let calibration_level = parse("calibration_level", &take("calibration_level", "circuit".into()))?;
        let s = SchedulerConfig::default();
        let scheduler = SchedulerConfig {
            interval_s: parse("interval_s", &take("interval_s", s.interval_s.to_string()))?,
            budget: parse("budget", &take("budget", s.budget.to_string()))?,
            mix: parse("mix", &take("mix", s.mix.to_string()))?,
            slack_percent: parse("slack_percent", &take("slack_percent", s.slack_percent.to_string()))?,
        };
        let scenarios = parse_list("scenarios", &take("scenarios", "top,weighted,random".into()))?;
        let deploy_n = parse_list("deploy_n", &take("deploy_n", "50,100".into()))?;
        let adversary_points = parse("adversary_points", &take("adversary_points", "10".into()))?;
        let tail_percentile = parse("tail_percentile", &take("tail_percentile", DEFAULT_TAIL_PERCENTILE.to_string()))?;
        let probe_bytes = parse("probe_bytes", &take("probe_bytes", DEFAULT_PROBE_BYTES.to_string()))?;
        let distance_bucket_km = parse("distance_bucket_km", &take("distance_bucket_km", "1000".into()))?;

        if let Some(unknown) = pairs.keys().next() {
            return Err(CliError::Config(format!("unknown key {unknown}")));
        }
        scheduler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if adversary_points == 0 {
            return Err(CliError::Config("adversary_points must be at least 1".into()));
        }

        let get = |k: &str| paths[k].clone();
        Ok(Self {
            inputs: Inputs {
                tle: get("tle"),
                stations: get("stations"),
                pops: get("pops"),
                terrestrial_baseline: get("terrestrial_baseline"),
                satellite_baseline: get("satellite_baseline"),
                relays: get("relays"),
                circuits: get("circuits"),
                measured: paths.get("measured").cloned(),
            },
            seed,
            out,
            start,
            step_s,
            duration_s,
            strategy,
            k,
            graph,
            plane_incl_tol_deg,
            plane_raan_tol_deg,
            bucket_km,
            delimiters,
            report_percentiles,
            eval_percentiles,
            error_percentiles,
            resamples,
            calibration_level,
            scheduler,
            scenarios,
            deploy_n,
            adversary_points,
            tail_percentile,
            probe_bytes,
            distance_bucket_km,
            canonical,
        })
    }

    /// SHA-256 over the canonical settings and input file contents. The
    /// output directory and worker count do not contribute.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.canonical {
            h.update(format!("{k}={v}\n"));
        }
        hex::encode(h.finalize())
    }

    /// `config_hash=… seed=…` as stamped into every artifact.
    pub fn stamp(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.seed)
    }
}

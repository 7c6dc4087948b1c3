#![allow(dead_code)]

use std::path::{Path, PathBuf};

use leolat_cli::ExperimentConfig;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/small")
}

/// Writes a config pointing at the bundled fixture, with `extra` lines
/// appended, and loads it with output under `dir/out`.
pub fn config(dir: &Path, extra: &str) -> ExperimentConfig {
    let path = write_config(dir, extra);
    ExperimentConfig::load(&path, None, Some(dir.join("out"))).expect("config loads")
}

pub fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let f = fixture_dir();
    let mut text = String::new();
    for (key, file) in [
        ("tle", "constellation.tle"),
        ("stations", "stations.csv"),
        ("pops", "pops.csv"),
        ("terrestrial_baseline", "terrestrial_baseline.csv"),
        ("satellite_baseline", "satellite_baseline.csv"),
        ("relays", "relays.csv"),
        ("circuits", "circuits.csv"),
    ] {
        text.push_str(&format!("{key} = {}\n", f.join(file).display()));
    }
    text.push_str("seed = 7\nstart = 1717200000\n");
    if !extra.contains("duration_s") {
        text.push_str("duration_s = 3600\n");
    }
    text.push_str(extra);
    let path = dir.join("test.conf");
    std::fs::write(&path, text).unwrap();
    path
}

/// Data rows of a stamped CSV (comment and header excluded).
pub fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::process::Command;

use common::{config, data_rows, fixture_dir, write_config};
use leolat::sim::{Interface, SeriesStore};
use leolat_cli::{stages, CliError};

fn hop_count() -> usize {
    let text = fs::read_to_string(fixture_dir().join("circuits.csv")).unwrap();
    let hops: BTreeSet<(String, String)> = text
        .lines()
        .skip(1)
        .flat_map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [(f[0].to_string(), f[1].to_string()), (f[1].to_string(), f[2].to_string())]
        })
        .collect();
    hops.len()
}

#[test]
fn ingest_counts_superluminal_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let s = stages::ingest(&cfg).unwrap();
    assert_eq!(s.satellite.superluminal, 1);
    assert_eq!(s.satellite.accepted, s.satellite.rows - 1);
    assert_eq!(s.satellites, 528);
    assert_eq!(s.planes, 22);
    for f in ["terrestrial.json", "satellite.json", "constellation.json", "ingest.json"] {
        assert!(dir.path().join("out/models").join(f).exists(), "{f}");
    }
}

#[test]
fn absent_tle_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "");
    let text = fs::read_to_string(&conf).unwrap();
    let missing = dir.path().join("nowhere.tle");
    let text = text
        .lines()
        .map(|l| if l.starts_with("tle ") { format!("tle = {}", missing.display()) } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&conf, text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_leolat"))
        .args(["--config", conf.to_str().unwrap(), "ingest"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere.tle"), "{stderr}");
}

#[test]
fn hour_timeline_row_count_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    stages::ingest(&cfg).unwrap();
    let first = stages::simulate(&cfg, Some(2)).unwrap();
    let hops = hop_count();
    assert_eq!(first.steps, 12);
    assert_eq!(first.pairs, hops);
    assert_eq!(first.computed, hops);
    assert_eq!(first.rows, hops * 2 * 12);
    let series = dir.path().join("out").join(stages::SERIES_FILE);
    assert_eq!(data_rows(&series).len(), hops * 2 * 12);
    let store = SeriesStore::read_csv(fs::File::open(&series).unwrap(), "series").unwrap();
    assert!(store.iter().all(|s| s.samples.len() == 12));
    let original = fs::read(&series).unwrap();
    let manifest = fs::read(dir.path().join("out/series/manifest.csv")).unwrap();

    let again = stages::simulate(&cfg, Some(3)).unwrap();
    assert_eq!((again.computed, again.reused), (0, hops));
    assert_eq!(fs::read(&series).unwrap(), original);

    let mut pair_files: Vec<_> = fs::read_dir(dir.path().join("out/series/pairs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    pair_files.sort();
    let deleted = pair_files.len() / 2;
    for p in &pair_files[..deleted] {
        fs::remove_file(p).unwrap();
    }
    let resumed = stages::simulate(&cfg, Some(1)).unwrap();
    assert_eq!((resumed.computed, resumed.reused), (deleted, hops - deleted));
    assert_eq!(fs::read(&series).unwrap(), original);
    assert_eq!(fs::read(dir.path().join("out/series/manifest.csv")).unwrap(), manifest);
}

#[test]
fn manifest_drives_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "duration_s = 900\n");
    stages::ingest(&cfg).unwrap();
    stages::simulate(&cfg, None).unwrap();
    // a pair file without a manifest entry is not trusted
    let manifest = dir.path().join("out/series/manifest.csv");
    let lines: Vec<String> = fs::read_to_string(&manifest).unwrap().lines().map(String::from).collect();
    fs::write(&manifest, lines[..lines.len() - 3].join("\n") + "\n").unwrap();
    let s = stages::simulate(&cfg, None).unwrap();
    assert_eq!(s.computed, 3);
}

#[test]
fn scenario_grid_gives_six_reports_and_curve_reaches_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "scenarios = top,weighted,random\ndeploy_n = 50,100\n");
    stages::ingest(&cfg).unwrap();
    stages::simulate(&cfg, None).unwrap();
    let written = stages::deploy_eval(&cfg).unwrap();
    assert_eq!(written.len(), 6);
    let csvs = fs::read_dir(dir.path().join("out/deploy"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 6);

    stages::adversary(&cfg).unwrap();
    let rows = data_rows(&dir.path().join("out/adversary/curve.csv"));
    for scenario in ["top-n", "weighted-n", "random-n"] {
        let last = rows.iter().rfind(|r| r.starts_with(scenario)).unwrap();
        let f: Vec<&str> = last.split(',').collect();
        assert_eq!(f[1], "12");
        assert_eq!(f[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(f[3].parse::<f64>().unwrap(), 1.0);
    }
}

#[test]
fn zero_error_calibration_leaves_tables_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    // percentiles need at least 20 samples
    let base = config(dir.path(), "duration_s = 7200\n");
    stages::ingest(&base).unwrap();
    stages::simulate(&base, None).unwrap();

    // measurements identical to the simulated circuit series
    let series = dir.path().join("out").join(stages::SERIES_FILE);
    let store = SeriesStore::read_csv(fs::File::open(&series).unwrap(), "series").unwrap();
    let mut measured = String::from("circuit_id,interface,rtt_ms\n");
    for line in fs::read_to_string(fixture_dir().join("circuits.csv")).unwrap().lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        for iface in [Interface::Satellite, Interface::Terrestrial] {
            let h1 = store.get(&format!("{}->{}", f[0], f[1]), iface).unwrap();
            let h2 = store.get(&format!("{}->{}", f[1], f[2]), iface).unwrap();
            let c = leolat::sim::circuit_series(&format!("{}>{}>{}", f[0], f[1], f[2]), h1, h2).unwrap();
            for v in c.valid() {
                measured.push_str(&format!("{},{iface},{v}\n", c.id));
            }
        }
    }
    fs::write(dir.path().join("measured.csv"), measured).unwrap();

    // adding the measurement file changes the config hash, so upstream stages rerun
    let cfg = config(
        dir.path(),
        &format!("duration_s = 7200\nmeasured = {}\n", dir.path().join("measured.csv").display()),
    );
    stages::ingest(&cfg).unwrap();
    stages::simulate(&cfg, None).unwrap();
    let used = stages::calibrate(&cfg).unwrap();
    assert_eq!(used.len(), 2);
    let out = dir.path().join("out/calibration");
    for scope in ["pairs", "circuits"] {
        let raw = data_rows(&out.join(format!("{scope}_raw.csv")));
        let cal = data_rows(&out.join(format!("{scope}_calibrated.csv")));
        assert!(!raw.is_empty());
        assert_eq!(raw, cal, "{scope}");
        for row in data_rows(&out.join(format!("{scope}_estimates.csv"))) {
            let f: Vec<f64> = row.split(',').skip(3).map(|x| x.parse().unwrap()).collect();
            assert_eq!(f[1], f[2]);
            assert_eq!(f[1], f[3]);
            assert_eq!(f[1], f[4]);
        }
    }
}

#[test]
fn later_stages_refuse_missing_or_stale_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let err = stages::calibrate(&cfg).unwrap_err();
    assert!(matches!(err, CliError::MissingStage { stage: "simulate", .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    let err = stages::simulate(&cfg, None).unwrap_err();
    assert!(matches!(err, CliError::MissingStage { stage: "ingest", .. }), "{err}");

    stages::ingest(&cfg).unwrap();
    let conf = dir.path().join("test.conf");
    let out = Command::new(env!("CARGO_BIN_EXE_leolat"))
        .args(["--config", conf.to_str().unwrap(), "--out"])
        .arg(dir.path().join("out"))
        .args(["--seed", "8", "simulate"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("different configuration"), "{stderr}");
    assert!(stderr.contains("leolat ingest"), "{stderr}");
}

#[test]
fn every_artifact_is_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "deploy_n = 3\nscenarios = top\n");
    stages::run_all(&cfg, None).unwrap();
    let stamp = format!("# config_hash={} seed=7", cfg.hash());
    let mut stack = vec![dir.path().join("out")];
    let mut files = 0;
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let text = fs::read_to_string(&p).unwrap();
            match p.extension().and_then(|x| x.to_str()) {
                Some("csv") => assert_eq!(text.lines().next(), Some(stamp.as_str()), "{}", p.display()),
                Some("json") => {
                    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                    assert_eq!(v["config_hash"], cfg.hash(), "{}", p.display());
                    assert_eq!(v["seed"], 7);
                }
                _ => panic!("unexpected artifact {}", p.display()),
            }
            files += 1;
        }
    }
    assert!(files > 20);
}

use std::collections::BTreeMap;
use std::fs::File;

use leolat::calibrate::{build_error_model, calibrate_estimate, CalibratedEstimate, ErrorModel};
use leolat::csvio::write_rows;
use leolat::dualhome::{
    adversary_visibility, assign_deployment, compare_hops, effective_hop_series, evaluate_deployment,
    probe_overhead_bytes_per_day, rtt_to_plt_ms, tail_correlation, DeploymentPlan, ReductionMetrics, Scenario,
};
use leolat::sim::{
    default_reduction_bins, pair_id, reduction_row, relative_reduction, write_reduction_table, Interface,
    LatencySeries, SeriesStore,
};
use serde::Serialize;

use super::{circuit_store, derive_seed, hop_pairs, load_circuits, load_relays, load_series};
use crate::artifacts::OutputDir;
use crate::config::{CalibrationLevel, ExperimentConfig};
use crate::error::CliError;

const IFACES: [Interface; 2] = [Interface::Satellite, Interface::Terrestrial];

#[derive(Serialize)]
struct EstimateRow<'a> {
    scope: &'a str,
    id: &'a str,
    interface: Interface,
    percentile: f64,
    raw_ms: f64,
    mean_ms: f64,
    ci_low_ms: f64,
    ci_high_ms: f64,
}

struct Estimate {
    id: String,
    interface: Interface,
    percentile: f64,
    raw_ms: f64,
    calibrated: CalibratedEstimate,
}

/// Raw and calibrated percentile latencies of every series in `store`.
fn estimates(
    cfg: &ExperimentConfig,
    store: &SeriesStore,
    models: &BTreeMap<Interface, ErrorModel>,
) -> Result<Vec<Estimate>, CliError> {
    let mut out = Vec::new();
    for s in store.iter() {
        for &p in &cfg.report_percentiles {
            let Ok(raw) = s.percentile(p) else { continue };
            let est = match models.get(&s.interface) {
                Some(m) => {
                    let seed = derive_seed(cfg.seed, &["calibrate", &s.id, &s.interface.to_string(), &p.to_string()]);
                    calibrate_estimate(raw, m, p.round() as u32, cfg.resamples, seed).map_err(CliError::data)?
                }
                None => CalibratedEstimate {
                    mean_ms: raw,
                    ci_low_ms: raw,
                    ci_high_ms: raw,
                    resamples: 0,
                },
            };
            out.push(Estimate {
                id: s.id.clone(),
                interface: s.interface,
                percentile: p,
                raw_ms: raw,
                calibrated: est,
            });
        }
    }
    Ok(out)
}

fn write_tables(
    out: &OutputDir,
    scope: &str,
    cfg: &ExperimentConfig,
    est: &[Estimate],
) -> Result<(), CliError> {
    let bins = default_reduction_bins();
    let lookup: BTreeMap<(&str, Interface, u64), (f64, f64)> = est
        .iter()
        .map(|e| ((e.id.as_str(), e.interface, e.percentile.to_bits()), (e.raw_ms, e.calibrated.mean_ms)))
        .collect();
    let ids: std::collections::BTreeSet<&str> = est.iter().map(|e| e.id.as_str()).collect();
    for (suffix, pick) in [("raw", 0usize), ("calibrated", 1)] {
        let rows: Vec<_> = cfg
            .report_percentiles
            .iter()
            .map(|&p| {
                let reductions: Vec<f64> = ids
                    .iter()
                    .filter_map(|id| {
                        let sat = lookup.get(&(*id, Interface::Satellite, p.to_bits()))?;
                        let ter = lookup.get(&(*id, Interface::Terrestrial, p.to_bits()))?;
                        let v = |x: &(f64, f64)| if pick == 0 { x.0 } else { x.1 };
                        relative_reduction(v(ter), v(sat)).ok()
                    })
                    .collect();
                reduction_row(p, &reductions, &bins)
            })
            .collect();
        out.write_csv(&format!("calibration/{scope}_{suffix}.csv"), |w, c| {
            write_reduction_table(w, c, &rows, &bins)
        })?;
    }
    Ok(())
}

/// Builds per-interface error models from measurements (when given) and
/// writes raw and calibrated reduction tables for pairs and circuits.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<BTreeMap<Interface, usize>, CliError> {
    let out = OutputDir::new(cfg);
    let pairs = load_series(&out)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let circs = circuit_store(&circuits, &pairs);

    let mut models = BTreeMap::new();
    if let Some(path) = &cfg.inputs.measured {
        let file = File::open(path).map_err(|_| CliError::MissingInput(path.clone()))?;
        let measured = SeriesStore::read_measured_csv(file, &path.display().to_string()).map_err(CliError::data)?;
        let simulated = match cfg.calibration_level {
            CalibrationLevel::Circuit => &circs,
            CalibrationLevel::Pair => &pairs,
        };
        for iface in IFACES {
            match build_error_model(simulated, &measured, &cfg.error_percentiles, Some(iface)) {
                Ok(m) => {
                    out.write_json(&format!("calibration/error_model_{iface}.json"), &m)?;
                    models.insert(iface, m);
                }
                Err(e) => log::warn!("{iface}: {e}; leaving {iface} latencies uncalibrated"),
            }
        }
    } else {
        log::warn!("no measured latencies configured; calibrated tables equal the raw ones");
    }

    for (scope, store) in [("pairs", &pairs), ("circuits", &circs)] {
        let est = estimates(cfg, store, &models)?;
        let rows = est.iter().map(|e| EstimateRow {
            scope,
            id: &e.id,
            interface: e.interface,
            percentile: e.percentile,
            raw_ms: e.raw_ms,
            mean_ms: e.calibrated.mean_ms,
            ci_low_ms: e.calibrated.ci_low_ms,
            ci_high_ms: e.calibrated.ci_high_ms,
        });
        out.write_csv(&format!("calibration/{scope}_estimates.csv"), |w, c| write_rows(w, c, rows))?;
        write_tables(&out, scope, cfg, &est)?;
    }
    Ok(models.iter().map(|(i, m)| (*i, m.series_used)).collect())
}

#[derive(Debug, Serialize)]
struct DualHomeSummary {
    relays_equipped: usize,
    probe_bytes_per_relay_day: f64,
    average_pairs: ReductionMetrics,
    average_circuits: ReductionMetrics,
    /// Page-load-time saving implied by the mean circuit RTT reduction.
    plt_reduction_ms: Option<f64>,
}

/// Every relay dual-homed.
pub fn dualhome(cfg: &ExperimentConfig) -> Result<ReductionMetrics, CliError> {
    let out = OutputDir::new(cfg);
    let store = load_series(&out)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let plan = DeploymentPlan::everyone(&relays);
    let effective = effective_hop_series(&circuits, &store, &plan, &cfg.scheduler).map_err(CliError::data)?;
    let report = compare_hops(&circuits, &store, &effective, &cfg.eval_percentiles);

    let mut eff_store = SeriesStore::new();
    for s in effective.into_values() {
        eff_store.insert(s);
    }
    out.write_csv("dualhome/effective.csv", |w, c| eff_store.write_csv(w, c))?;
    out.write_csv("dualhome/report.csv", |w, c| report.write_csv(w, c))?;
    let s = &cfg.scheduler;
    out.write_json(
        "dualhome/summary.json",
        &DualHomeSummary {
            relays_equipped: plan.members.len(),
            probe_bytes_per_relay_day: probe_overhead_bytes_per_day(s.budget, s.interval_s, cfg.probe_bytes),
            average_pairs: report.average_pairs,
            average_circuits: report.average_circuits,
            plt_reduction_ms: report.average_circuits.mean_reduction_ms.and_then(|m| rtt_to_plt_ms(m).ok()),
        },
    )?;
    Ok(report.average_circuits)
}

#[derive(Debug, Serialize)]
struct DeploySummaryRow {
    scenario: Scenario,
    n: usize,
    equipped: usize,
    average_pairs: ReductionMetrics,
    average_circuits: ReductionMetrics,
}

fn deploy_stem(s: Scenario, n: usize) -> String {
    format!("deploy/{s}-{n}")
}

/// One report and plan per scenario and deployment size.
pub fn deploy_eval(cfg: &ExperimentConfig) -> Result<Vec<String>, CliError> {
    let out = OutputDir::new(cfg);
    let store = load_series(&out)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let mut written = Vec::new();
    let mut summary = Vec::new();
    for &scenario in &cfg.scenarios {
        for &n in &cfg.deploy_n {
            let plan = assign_deployment(&relays, scenario, n, cfg.seed);
            let report = evaluate_deployment(&circuits, &store, &plan, &cfg.scheduler, &cfg.eval_percentiles)
                .map_err(CliError::data)?;
            let stem = deploy_stem(scenario, n);
            out.write_csv(&format!("{stem}.csv"), |w, c| report.write_csv(w, c))?;
            out.write_json(&format!("{stem}.plan.json"), &plan)?;
            summary.push(DeploySummaryRow {
                scenario,
                n,
                equipped: plan.members.len(),
                average_pairs: report.average_pairs,
                average_circuits: report.average_circuits,
            });
            written.push(format!("{stem}.csv"));
        }
    }
    out.write_json("deploy/summary.json", &summary)?;
    Ok(written)
}

#[derive(Serialize)]
struct CurveRow {
    scenario: Scenario,
    n: usize,
    pair_fraction: f64,
    circuit_fraction: f64,
}

/// Deployment sizes spread evenly up to every relay.
fn curve_sizes(relays: usize, points: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=points).map(|i| (i * relays).div_ceil(points)).collect();
    v.dedup();
    v
}

/// Share of pairs and circuits exposed to the satellite operator as the
/// deployment grows, for each scenario.
pub fn adversary(cfg: &ExperimentConfig) -> Result<usize, CliError> {
    let out = OutputDir::new(cfg);
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let pairs = hop_pairs(&circuits);
    let mut rows = Vec::new();
    for &scenario in &cfg.scenarios {
        for n in curve_sizes(relays.len(), cfg.adversary_points) {
            let plan = assign_deployment(&relays, scenario, n, cfg.seed);
            let v = adversary_visibility(&plan, &pairs, &circuits);
            rows.push(CurveRow {
                scenario,
                n,
                pair_fraction: v.pair_fraction,
                circuit_fraction: v.circuit_fraction,
            });
        }
    }
    let count = rows.len();
    out.write_csv("adversary/curve.csv", |w, c| write_rows(w, c, rows))?;
    Ok(count)
}

#[derive(Serialize)]
struct PairCorrelation<'a> {
    pair_id: &'a str,
    ter_given_sat: Option<f64>,
    sat_given_ter: Option<f64>,
}

#[derive(Serialize)]
struct MatrixCell<'a> {
    row_id: &'a str,
    row_interface: Interface,
    col_id: &'a str,
    col_interface: Interface,
    value: Option<f64>,
}

/// Tail co-occurrence between the two interfaces of each hop, plus the
/// full matrix across all hop series.
pub fn correlate(cfg: &ExperimentConfig) -> Result<usize, CliError> {
    let out = OutputDir::new(cfg);
    let store = load_series(&out)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let q = cfg.tail_percentile;
    let corr = |a: &LatencySeries, b: &LatencySeries| match tail_correlation(a, b, q) {
        Ok(v) => Some(v),
        Err(e) => {
            log::debug!("{}/{} vs {}/{}: {e}", a.id, a.interface, b.id, b.interface);
            None
        }
    };

    let ids: Vec<String> = hop_pairs(&circuits).iter().map(|(a, b)| pair_id(a, b)).collect();
    let mut rows = Vec::new();
    for id in &ids {
        if let (Some(sat), Some(ter)) = (store.get(id, Interface::Satellite), store.get(id, Interface::Terrestrial)) {
            rows.push(PairCorrelation {
                pair_id: id,
                ter_given_sat: corr(sat, ter),
                sat_given_ter: corr(ter, sat),
            });
        }
    }
    let defined = rows.iter().filter(|r| r.ter_given_sat.is_some()).count();
    out.write_csv("correlate/pairs.csv", |w, c| write_rows(w, c, rows))?;

    let store = &store;
    let series: Vec<&LatencySeries> = ids
        .iter()
        .flat_map(|id| IFACES.iter().filter_map(move |&i| store.get(id, i)))
        .collect();
    let cells = series.iter().flat_map(|a| {
        series.iter().map(move |b| MatrixCell {
            row_id: &a.id,
            row_interface: a.interface,
            col_id: &b.id,
            col_interface: b.interface,
            value: corr(a, b),
        })
    });
    out.write_csv("correlate/matrix.csv", |w, c| write_rows(w, c, cells))?;
    Ok(defined)
}

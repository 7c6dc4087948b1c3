use leolat::csvio::write_rows;
use leolat::sim::{
    default_reduction_bins, group_reduction_by_distance, pair_distance_km, pair_id, pair_reductions,
    reduction_table, write_reduction_table, Interface, ReductionRow, SeriesStore,
};
use serde::Serialize;

use super::{circuit_store, hop_pairs, load_circuits, load_relays, load_series, relay_index};
use crate::artifacts::OutputDir;
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Serialize)]
struct DistanceRow {
    percentile: f64,
    lower_km: f64,
    upper_km: f64,
    pairs: usize,
    mean_reduction: f64,
    mean_positive: Option<f64>,
    mean_increase: Option<f64>,
}

#[derive(Serialize)]
struct CurveRow<'a> {
    scope: &'a str,
    id: &'a str,
    interface: Interface,
    percentile: f64,
    rtt_ms: f64,
}

#[derive(Serialize)]
struct CdfRow<'a> {
    scope: &'a str,
    percentile: f64,
    reduction_pct: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct Summary {
    pairs: usize,
    circuits: usize,
    steps: usize,
    pair_table: Vec<ReductionRow>,
    circuit_table: Vec<ReductionRow>,
}

/// Reduction tables for pairs and circuits, reduction by pair distance,
/// percentile curves and reduction CDFs.
pub fn report(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let out = OutputDir::new(cfg);
    let pairs = load_series(&out)?;
    let relays = load_relays(cfg)?;
    let circuits = load_circuits(cfg, &relays)?;
    let circs = circuit_store(&circuits, &pairs);
    let bins = default_reduction_bins();

    let pair_table = reduction_table(&pairs, &cfg.report_percentiles, &bins);
    let circuit_table = reduction_table(&circs, &cfg.report_percentiles, &bins);
    out.write_csv("report/pairs_table.csv", |w, c| write_reduction_table(w, c, &pair_table, &bins))?;
    out.write_csv("report/circuits_table.csv", |w, c| write_reduction_table(w, c, &circuit_table, &bins))?;

    let by_fp = relay_index(&relays);
    let ends: std::collections::BTreeMap<String, f64> = hop_pairs(&circuits)
        .iter()
        .map(|(a, b)| (pair_id(a, b), pair_distance_km(by_fp[a.as_str()], by_fp[b.as_str()])))
        .collect();
    let mut distance = Vec::new();
    for &p in &cfg.report_percentiles {
        let entries: Vec<(f64, f64)> = pair_reductions(&pairs, p)
            .into_iter()
            .filter_map(|(id, r)| ends.get(&id).map(|&d| (d, r)))
            .collect();
        for b in group_reduction_by_distance(&entries, cfg.distance_bucket_km).into_values() {
            distance.push(DistanceRow {
                percentile: p,
                lower_km: b.lower_km,
                upper_km: b.upper_km,
                pairs: b.pairs,
                mean_reduction: b.mean_reduction,
                mean_positive: b.mean_positive,
                mean_increase: b.mean_increase,
            });
        }
    }
    out.write_csv("report/distance.csv", |w, c| write_rows(w, c, distance))?;

    let scopes = [("pairs", &pairs), ("circuits", &circs)];
    let curves = scopes.iter().flat_map(|(scope, store)| {
        store.iter().flat_map(move |s| {
            cfg.eval_percentiles.iter().filter_map(move |&p| {
                Some(CurveRow {
                    scope,
                    id: &s.id,
                    interface: s.interface,
                    percentile: p,
                    rtt_ms: s.percentile(p).ok()?,
                })
            })
        })
    });
    out.write_csv("report/curves.csv", |w, c| write_rows(w, c, curves))?;

    let mut cdf = Vec::new();
    for (scope, store) in scopes {
        for &p in &cfg.report_percentiles {
            cdf.extend(reduction_cdf(store, p).into_iter().map(|(r, f)| CdfRow {
                scope,
                percentile: p,
                reduction_pct: r,
                cdf: f,
            }));
        }
    }
    out.write_csv("report/reduction_cdf.csv", |w, c| write_rows(w, c, cdf))?;

    let steps = pairs.iter().map(|s| s.samples.len()).max().unwrap_or(0);
    out.write_json(
        "report/summary.json",
        &Summary {
            pairs: pair_reductions(&pairs, 50.0).len(),
            circuits: pair_reductions(&circs, 50.0).len(),
            steps,
            pair_table,
            circuit_table,
        },
    )?;
    Ok(())
}

/// Sorted reductions with their empirical cumulative fraction.
fn reduction_cdf(store: &SeriesStore, p: f64) -> Vec<(f64, f64)> {
    let mut r: Vec<f64> = pair_reductions(store, p).into_iter().map(|x| x.1).collect();
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    r.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect()
}

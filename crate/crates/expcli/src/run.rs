use std::path::Path;

use identify::{identify_tree_with, NetworkEstimate};
use network::FeederNetwork;
use phasor_core::Complex;
use rayon::prelude::*;
use serde::Serialize;
use simulator::{add_noise, measure, simulate, MeasurementSet, NoiseSpec};

use crate::scenario::{NoisePolicy, Scenario};
use crate::seed::{fresh_noise_seed, noise_seed};
use crate::ExpError;

#[derive(Debug, Clone, PartialEq)]
pub struct LineRecord {
    pub from: usize,
    pub to: usize,
    pub z_true: Complex,
    pub z_est: Complex,
    pub rel_err: f64,
    pub gamma_min: f64,
    pub iters: usize,
    pub cond_j: f64,
    pub cost_full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub algo: String,
    pub variant: identify::Variant,
    pub noise_pct: f64,
    pub realization: usize,
    pub snapshots: usize,
    /// Sorted by receiving node.
    pub lines: Vec<LineRecord>,
    /// `100 ||z - z_hat|| / ||z||` over the stacked impedance vector.
    pub aggregate_err_pct: f64,
}

impl ExperimentRecord {
    pub fn from_estimate(
        scenario: &str,
        algo: &str,
        noise_pct: f64,
        realization: usize,
        snapshots: usize,
        net: &FeederNetwork,
        est: &NetworkEstimate,
    ) -> Self {
        let mut lines: Vec<LineRecord> = est
            .lines
            .iter()
            .map(|l| {
                let z_true = net.z(l.to);
                LineRecord {
                    from: l.from,
                    to: l.to,
                    z_true,
                    z_est: l.estimate.z_hat,
                    rel_err: (l.estimate.z_hat - z_true).norm() / z_true.norm(),
                    gamma_min: l.estimate.gamma_min(),
                    iters: l.estimate.iterations,
                    cond_j: l.estimate.cond_j,
                    cost_full: l.estimate.cost_full,
                }
            })
            .collect();
        lines.sort_by_key(|l| l.to);
        let pairs: Vec<(Complex, Complex)> = lines.iter().map(|l| (l.z_true, l.z_est)).collect();
        ExperimentRecord {
            scenario: scenario.into(),
            algo: algo.into(),
            variant: est.variant,
            noise_pct,
            realization,
            snapshots,
            lines,
            aggregate_err_pct: aggregate_error_pct(&pairs),
        }
    }
}

/// `100 ||z - z_hat||_2 / ||z||_2` with both vectors stacked as real parts
/// and imaginary parts.
pub fn aggregate_error_pct(pairs: &[(Complex, Complex)]) -> f64 {
    let num: f64 = pairs.iter().map(|(t, e)| (t - e).norm_sqr()).sum();
    let den: f64 = pairs.iter().map(|(t, _)| t.norm_sqr()).sum();
    100.0 * (num / den).sqrt()
}

/// Noiseless measurements of a scenario at its largest snapshot count.
pub fn ideal_measurements(net: &FeederNetwork) -> Result<MeasurementSet, ExpError> {
    Ok(measure(net, &simulate(net)?))
}

/// Noisy measurements of one realization at `snapshots` measurements. Full
/// scale is taken from the complete noiseless dataset.
pub fn noisy_measurements(
    sc: &Scenario,
    ideal: &MeasurementSet,
    noise_pct: f64,
    realization: usize,
    snapshots: usize,
) -> Result<MeasurementSet, ExpError> {
    let seed = match sc.noise_policy {
        NoisePolicy::Prefix => noise_seed(sc.master_seed, realization as u64),
        NoisePolicy::Fresh => fresh_noise_seed(sc.master_seed, realization as u64, snapshots as u64),
    };
    let spec = NoiseSpec::for_ideal(ideal, noise_pct / 100.0, seed);
    Ok(add_noise(&ideal.prefix(snapshots), &spec)?)
}

/// Every (noise class, realization, snapshot count, algorithm) cell in that
/// order. Cells run in parallel; the output order does not depend on it.
pub fn run_scenario(sc: &Scenario) -> Result<Vec<ExperimentRecord>, ExpError> {
    sc.validate()?;
    let net = sc.build_network()?;
    let ideal = ideal_measurements(&net)?;
    let jobs: Vec<(f64, usize)> =
        sc.noise_pct.iter().flat_map(|&p| (0..sc.realizations).map(move |r| (p, r))).collect();
    let per_job: Vec<Vec<ExperimentRecord>> =
        jobs.par_iter().map(|&(pct, r)| run_cell_group(sc, &net, &ideal, pct, r)).collect::<Result<_, _>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

fn run_cell_group(
    sc: &Scenario,
    net: &FeederNetwork,
    ideal: &MeasurementSet,
    pct: f64,
    r: usize,
) -> Result<Vec<ExperimentRecord>, ExpError> {
    let mut out = Vec::with_capacity(sc.snapshot_counts.len() * sc.algorithms.len());
    let full = match sc.noise_policy {
        NoisePolicy::Prefix => Some(noisy_measurements(sc, ideal, pct, r, sc.max_snapshots())?),
        NoisePolicy::Fresh => None,
    };
    for &m in &sc.snapshot_counts {
        let ms = match &full {
            Some(f) => f.prefix(m),
            None => noisy_measurements(sc, ideal, pct, r, m)?,
        };
        for a in &sc.algorithms {
            let est = identify_tree_with(&ms, net, &|k| a.config(net.xr_ratio(k))).map_err(|source| ExpError::Identify {
                context: format!("{} / {} / {pct}% / realization {r} / M = {m}", sc.name, a.name),
                source,
            })?;
            out.push(ExperimentRecord::from_estimate(&sc.name, &a.name, pct, r, m, net, &est));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct LineRow<'a> {
    algo: &'a str,
    variant: &'a str,
    noise_pct: f64,
    realization: usize,
    snapshots: usize,
    line_from: usize,
    line_to: usize,
    z_re_true: f64,
    z_im_true: f64,
    z_re_est: f64,
    z_im_est: f64,
    rel_err: f64,
    gamma_min: f64,
    iters: usize,
    #[serde(rename = "cond_J")]
    cond_j: f64,
    cost_full: f64,
}

#[derive(Serialize)]
struct AggRow<'a> {
    algo: &'a str,
    variant: &'a str,
    noise_pct: f64,
    realization: usize,
    snapshots: usize,
    aggregate_err_pct: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ExpError> {
    let f = std::fs::File::create(path).map_err(|source| ExpError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::Writer::from_writer(f))
}

/// One row per line and record.
pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), ExpError> {
    let mut w = csv_writer(path)?;
    for r in records {
        for l in &r.lines {
            w.serialize(LineRow {
                algo: &r.algo,
                variant: r.variant.as_str(),
                noise_pct: r.noise_pct,
                realization: r.realization,
                snapshots: r.snapshots,
                line_from: l.from,
                line_to: l.to,
                z_re_true: l.z_true.re,
                z_im_true: l.z_true.im,
                z_re_est: l.z_est.re,
                z_im_est: l.z_est.im,
                rel_err: l.rel_err,
                gamma_min: l.gamma_min,
                iters: l.iters,
                cond_j: l.cond_j,
                cost_full: l.cost_full,
            })?;
        }
    }
    w.flush().map_err(|source| ExpError::Io { path: path.to_path_buf(), source })
}

pub fn write_aggregate_csv(path: &Path, records: &[ExperimentRecord]) -> Result<(), ExpError> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.serialize(AggRow {
            algo: &r.algo,
            variant: r.variant.as_str(),
            noise_pct: r.noise_pct,
            realization: r.realization,
            snapshots: r.snapshots,
            aggregate_err_pct: r.aggregate_err_pct,
        })?;
    }
    w.flush().map_err(|source| ExpError::Io { path: path.to_path_buf(), source })
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::run::ExperimentRecord;
use crate::ExpError;

/// Per-line mean log10 relative error at the largest snapshot count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineErrorRow {
    pub algo: String,
    pub noise_pct: f64,
    pub snapshots: usize,
    pub line_to: usize,
    pub mean_log10_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorVsMRow {
    pub algo: String,
    pub noise_pct: f64,
    pub snapshots: usize,
    pub realizations: usize,
    pub mean_err_pct: f64,
    /// Robustness statistic; the figures average.
    pub median_err_pct_nonpaper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CondRow {
    pub algo: String,
    pub noise_pct: f64,
    pub snapshots: usize,
    pub line_to: usize,
    #[serde(rename = "mean_cond_J")]
    pub mean_cond_j: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub line_errors: Vec<LineErrorRow>,
    pub error_vs_m: Vec<ErrorVsMRow>,
    pub cond_vs_line: Vec<CondRow>,
}

impl Summary {
    pub fn mean_error(&self, algo: &str, noise_pct: f64, snapshots: usize) -> Option<f64> {
        self.error_vs_m
            .iter()
            .find(|r| r.algo == algo && r.noise_pct == noise_pct && r.snapshots == snapshots)
            .map(|r| r.mean_err_pct)
    }

    pub fn curve(&self, algo: &str, noise_pct: f64) -> Vec<(usize, f64)> {
        self.error_vs_m.iter().filter(|r| r.algo == algo && r.noise_pct == noise_pct).map(|r| (r.snapshots, r.mean_err_pct)).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), ExpError> {
        write_rows(&dir.join("line_errors.csv"), &self.line_errors)?;
        write_rows(&dir.join("error_vs_m.csv"), &self.error_vs_m)?;
        write_rows(&dir.join("cond_vs_line.csv"), &self.cond_vs_line)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExpError> {
    let f = std::fs::File::create(path).map_err(|source| ExpError::Io { path: path.to_path_buf(), source })?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| ExpError::Io { path: path.to_path_buf(), source })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Figure tables from a complete sweep: every (algorithm, noise class) pair
/// must cover the same snapshot counts with the same realizations.
pub fn summarize(records: &[ExperimentRecord]) -> Result<Summary, ExpError> {
    if records.is_empty() {
        return Err(ExpError::IncompleteSweep("no records".into()));
    }
    // Groups in order of first appearance.
    let mut groups: Vec<(String, f64)> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    let mut sweep: Vec<usize> = records.iter().map(|r| r.snapshots).collect();
    sweep.sort_unstable();
    sweep.dedup();
    let mut realizations: Vec<usize> = records.iter().map(|r| r.realization).collect();
    realizations.sort_unstable();
    realizations.dedup();
    for r in records {
        let g = match groups.iter().position(|(a, p)| *a == r.algo && *p == r.noise_pct) {
            Some(g) => g,
            None => {
                groups.push((r.algo.clone(), r.noise_pct));
                groups.len() - 1
            }
        };
        let m = sweep.binary_search(&r.snapshots).expect("collected");
        cells.entry((g, m)).or_default().push(r);
    }
    for (g, (algo, pct)) in groups.iter().enumerate() {
        for (mi, m) in sweep.iter().enumerate() {
            let cell = cells.get(&(g, mi)).map_or(&[][..], |v| v.as_slice());
            let mut got: Vec<usize> = cell.iter().map(|r| r.realization).collect();
            got.sort_unstable();
            if got != realizations {
                return Err(ExpError::IncompleteSweep(format!(
                    "{algo} at {pct}% and M = {m}: realizations {got:?}, expected {realizations:?}"
                )));
            }
        }
    }
    let m_max = *sweep.last().expect("non-empty");
    let mut out = Summary { line_errors: Vec::new(), error_vs_m: Vec::new(), cond_vs_line: Vec::new() };
    for (g, (algo, pct)) in groups.iter().enumerate() {
        for (mi, &m) in sweep.iter().enumerate() {
            let cell = &cells[&(g, mi)];
            let mut errs: Vec<f64> = cell.iter().map(|r| r.aggregate_err_pct).collect();
            let mean = errs.iter().sum::<f64>() / errs.len() as f64;
            out.error_vs_m.push(ErrorVsMRow {
                algo: algo.clone(),
                noise_pct: *pct,
                snapshots: m,
                realizations: cell.len(),
                mean_err_pct: mean,
                median_err_pct_nonpaper: median(&mut errs),
            });
            if m != m_max {
                continue;
            }
            let lines: Vec<usize> = cell[0].lines.iter().map(|l| l.to).collect();
            for (li, &to) in lines.iter().enumerate() {
                let n = cell.len() as f64;
                let log_err = cell.iter().map(|r| r.lines[li].rel_err.log10()).sum::<f64>() / n;
                let cond = cell.iter().map(|r| r.lines[li].cond_j).sum::<f64>() / n;
                out.line_errors.push(LineErrorRow { algo: algo.clone(), noise_pct: *pct, snapshots: m, line_to: to, mean_log10_err: log_err });
                out.cond_vs_line.push(CondRow { algo: algo.clone(), noise_pct: *pct, snapshots: m, line_to: to, mean_cond_j: cond });
            }
        }
    }
    Ok(out)
}

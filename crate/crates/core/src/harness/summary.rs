//! Per-(policy, step) means with one-standard-error bands, and the files a campaign emits.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::CampaignConfig;
use super::run::{CampaignResult, RunFailure, RunRecord};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RUNS_FILE: &str = "runs.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub t: usize,
    pub count: usize,
    pub penalty_mean: f64,
    pub penalty_stderr: f64,
    pub cum_mean: f64,
    pub cum_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    /// False when any run of this policy failed.
    pub complete: bool,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub environment: String,
    pub n: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub policies: Vec<PolicySummary>,
    pub failures: Vec<RunFailure>,
}

impl Summary {
    pub fn policy(&self, label: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == label)
    }
}

/// Sample mean and standard error of the mean (0 for fewer than two values).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Rows of (seed, t, penalty, cumulative) for one policy.
fn cells_from_rows(rows: &[(u64, usize, f64, f64)]) -> Vec<Cell> {
    let mut by_t: BTreeMap<usize, Vec<(u64, f64, f64)>> = BTreeMap::new();
    for &(s, t, p, c) in rows {
        by_t.entry(t).or_default().push((s, p, c));
    }
    by_t.into_iter()
        .map(|(t, mut v)| {
            v.sort_by_key(|r| r.0);
            let p: Vec<f64> = v.iter().map(|r| r.1).collect();
            let c: Vec<f64> = v.iter().map(|r| r.2).collect();
            let (pm, ps) = mean_stderr(&p);
            let (cm, cs) = mean_stderr(&c);
            Cell {
                t,
                count: v.len(),
                penalty_mean: pm,
                penalty_stderr: ps,
                cum_mean: cm,
                cum_stderr: cs,
            }
        })
        .collect()
}

pub fn summarize(
    environment: &str,
    cfg: &CampaignConfig,
    labels: &[String],
    records: &[RunRecord],
    failures: &[RunFailure],
) -> Summary {
    let policies = labels
        .iter()
        .map(|label| {
            let rows: Vec<(u64, usize, f64, f64)> = records
                .iter()
                .filter(|r| &r.policy == label)
                .flat_map(|r| r.trace.iter().map(move |s| (r.seed, s.t, s.penalty, s.cum_penalty)))
                .collect();
            let runs = records.iter().filter(|r| &r.policy == label).count();
            PolicySummary {
                policy: label.clone(),
                runs,
                complete: runs == cfg.seeds,
                cells: cells_from_rows(&rows),
            }
        })
        .collect();
    Summary {
        environment: environment.to_string(),
        n: cfg.n,
        seeds: cfg.seeds,
        master_seed: cfg.master_seed,
        policies,
        failures: failures.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub run_id: String,
    pub seed: u64,
    pub policy: String,
    pub t: usize,
    pub action: usize,
    /// Outcome index, or the channel values separated by `;`.
    pub outcome: String,
    pub penalty: f64,
    pub cum_penalty: f64,
}

/// The `trace.csv` contents as bytes.
pub fn trace_csv_bytes(records: &[RunRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        for s in &r.trace {
            w.serialize(TraceRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                policy: r.policy.clone(),
                t: s.t,
                action: s.action,
                outcome: s.outcome.to_string(),
                penalty: s.penalty,
                cum_penalty: s.cum_penalty,
            })?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_trace_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    fs::write(path, trace_csv_bytes(records)?)?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Per-policy cells recomputed from an emitted trace, in order of first appearance.
pub fn summary_from_trace(rows: &[TraceRow]) -> Vec<PolicySummary> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<(u64, usize, f64, f64)>> = BTreeMap::new();
    for r in rows {
        if !grouped.contains_key(&r.policy) {
            order.push(r.policy.clone());
        }
        grouped
            .entry(r.policy.clone())
            .or_default()
            .push((r.seed, r.t, r.penalty, r.cum_penalty));
    }
    order
        .into_iter()
        .map(|p| {
            let rows = &grouped[&p];
            let mut seeds: Vec<u64> = rows.iter().map(|r| r.0).collect();
            seeds.sort_unstable();
            seeds.dedup();
            PolicySummary {
                policy: p,
                runs: seeds.len(),
                complete: true,
                cells: cells_from_rows(rows),
            }
        })
        .collect()
}

impl CampaignResult {
    /// Writes the files selected by the config's emit flags into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let emit = &self.config.emit;
        if emit.per_step_csv {
            write_trace_csv(&self.records, &dir.join(TRACE_FILE))?;
        }
        if emit.summary_json {
            fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&self.summary)?)?;
        }
        if emit.runs_json {
            fs::write(dir.join(RUNS_FILE), serde_json::to_string_pretty(&self.records)?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample sd sqrt(5/3), divided by 2
        assert!((s - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }
}

//! Experiment orchestration: one run per (security mode x seed), summary
//! statistics across seeds, and the CSV text emitters. Runs execute
//! sequentially in (mode, seed) order so every output file is
//! byte-deterministic.

use std::collections::BTreeMap;

use crate::engine::{run_once, RunOutput};
use crate::metrics::{format_value, MetricsReport};
use crate::scenario::{ScenarioConfig, SecurityMode};
use crate::trust::TrustLogRow;

#[derive(Debug)]
pub struct RunRow {
    pub mode: SecurityMode,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub rows: Vec<RunRow>,
    /// Full per-run outputs in the same (mode, seed) order as `rows`.
    pub outputs: Vec<RunOutput>,
    pub protocol_name: &'static str,
}

/// Mean, sample standard deviation, min, max of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStat {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> SummaryStat {
    let n = values.len();
    assert!(n > 0, "summary of empty sample");
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 || !mean.is_finite() {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SummaryStat {
        mean,
        sd,
        min,
        max,
        n,
    }
}

pub fn run_experiment(cfg: &ScenarioConfig) -> ExperimentResult {
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for mode in cfg.security_mode.modes() {
        for &seed in &cfg.seeds {
            let out = run_once(cfg, mode, seed, false);
            rows.push(RunRow {
                mode,
                seed,
                report: out.report.clone(),
            });
            outputs.push(out);
        }
    }
    ExperimentResult {
        rows,
        outputs,
        protocol_name: cfg.protocol.name(),
    }
}

pub const RUNS_CSV_PREFIX: &[&str] = &["seed", "protocol", "security_mode"];

pub fn runs_csv(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let header: Vec<&str> = RUNS_CSV_PREFIX
        .iter()
        .chain(MetricsReport::CSV_FIELDS.iter())
        .copied()
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in &result.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.seed,
            result.protocol_name,
            row.mode.name(),
            row.report.csv_row()
        ));
    }
    out
}

/// Per-mode per-metric stats across seeds, keyed (mode, metric index).
pub fn summary_stats(result: &ExperimentResult) -> BTreeMap<(SecurityMode, usize), SummaryStat> {
    let mut samples: BTreeMap<(SecurityMode, usize), Vec<f64>> = BTreeMap::new();
    for row in &result.rows {
        for (i, v) in row.report.field_values().into_iter().enumerate() {
            samples.entry((row.mode, i)).or_default().push(v);
        }
    }
    samples
        .into_iter()
        .map(|(k, vs)| (k, summarize(&vs)))
        .collect()
}

pub fn summary_csv(result: &ExperimentResult) -> String {
    let stats = summary_stats(result);
    let mut out = String::from("protocol,security_mode,metric,mean,sd,min,max,n\n");
    for ((mode, idx), s) in &stats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            result.protocol_name,
            mode.name(),
            MetricsReport::CSV_FIELDS[*idx],
            format_value(s.mean),
            format_value(s.sd),
            format_value(s.min),
            format_value(s.max),
            s.n
        ));
    }
    out
}

pub const TRUST_CSV_HEADER: &str =
    "time,observer,subject,event,forwards,misbehaviors,direct,distributed,composite,state";

pub fn trust_events_csv(log: &[TrustLogRow]) -> String {
    let mut out = String::from(TRUST_CSV_HEADER);
    out.push('\n');
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            format_value(row.time.seconds()),
            row.observer,
            row.subject,
            row.event,
            row.forwards,
            row.misbehaviors,
            format_value(row.direct),
            format_value(row.distributed),
            format_value(row.composite),
            row.state.name()
        ));
    }
    out
}

/// File name for one run's trust-event log under `trust_events/`.
pub fn trust_events_file_name(mode: SecurityMode, seed: u64) -> String {
    format!("{}_{}.csv", mode.name(), seed)
}

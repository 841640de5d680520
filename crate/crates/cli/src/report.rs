//! Run artifacts: per-epoch convergence log (JSON lines) and final metric
//! reports. Serialization is byte-deterministic: fixed field order, shortest
//! round-trip float formatting, `\n` line endings.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use crane_core::train::EpochRecord;
use serde::{Deserialize, Serialize};

/// One convergence-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_bpr: f64,
    pub loss_cl: f64,
    pub recall20_valid: f64,
    pub ndcg20_valid: f64,
    pub epoch_seconds: f64,
}

impl From<&EpochRecord> for LogLine {
    fn from(r: &EpochRecord) -> Self {
        LogLine {
            epoch: r.epoch,
            loss_total: r.loss_total,
            loss_bpr: r.loss_bpr,
            loss_cl: r.loss_cl,
            recall20_valid: r.recall20,
            ndcg20_valid: r.ndcg20,
            epoch_seconds: r.seconds,
        }
    }
}

/// Final metric report for one phase of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub split_seed: u64,
    /// "valid" or "test".
    pub phase: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub n_users: usize,
}

/// Serialize the convergence history as JSON lines.
pub fn render_log(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in history {
        let line: LogLine = r.into();
        out.push_str(&serde_json::to_string(&line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

/// Parse a JSONL convergence log.
pub fn parse_log(text: &str) -> Result<Vec<LogLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).with_context(|| format!("log line {}", n + 1))
        })
        .collect()
}

pub fn write_log(path: &Path, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, render_log(history))
        .with_context(|| format!("writing {}", path.display()))
}

/// Serialize a metrics report; one object, trailing newline.
pub fn render_metrics(m: &MetricsReport) -> String {
    let mut s = serde_json::to_string(m).expect("metrics serialize");
    s.push('\n');
    s
}

pub fn write_metrics(path: &Path, m: &MetricsReport) -> Result<()> {
    fs::write(path, render_metrics(m))
        .with_context(|| format!("writing {}", path.display()))
}

//! Result persistence: loss logs, MMSE curve exports and benchmark reports.
//!
//! CSV schemas are frozen; the exact headers are documented in the README and
//! asserted by tests. All numeric columns are f64 printed in shortest
//! round-trip form, so identical runs produce byte-identical files.

use crate::CliError;
use migap::{LossLogRow, MiEstimate, MmseCurve};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const LOSS_LOG_HEADER: [&str; 3] = ["step", "loss", "lr"];
pub const CURVE_HEADER: [&str; 5] = ["log_snr", "mmse_cond", "mmse_uncond", "gap", "ortho"];
pub const REPORT_HEADER: [&str; 7] = [
    "task",
    "ground_truth_nats",
    "variant",
    "mean_nats",
    "std_nats",
    "bias_nats",
    "seeds",
];

pub fn write_loss_log(path: &Path, rows: &[LossLogRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LOSS_LOG_HEADER)?;
    for r in rows {
        w.write_record(&[r.step.to_string(), r.loss.to_string(), r.lr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve(path: &Path, curve: &MmseCurve) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for i in 0..curve.grid.len() {
        let gap = curve.uncond[i] - curve.cond[i];
        w.write_record(&[
            curve.grid[i].to_string(),
            curve.cond[i].to_string(),
            curve.uncond[i].to_string(),
            gap.to_string(),
            curve.ortho[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One aggregated benchmark row: a task under one estimator variant,
/// summarized over seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub task: String,
    pub ground_truth_nats: Option<f64>,
    pub variant: String,
    pub mean_nats: f64,
    pub std_nats: f64,
    /// mean - ground truth, when the ground truth is known.
    pub bias_nats: Option<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub toolkit_version: String,
    pub profile: String,
    /// Unix seconds at assembly time. Lives only in the JSON report;
    /// CSV outputs stay timestamp-free so reruns are byte-identical.
    pub timestamp_unix: u64,
    pub rows: Vec<BenchmarkRow>,
    /// Cells that failed, as "task/variant/seed: message" strings.
    pub errors: Vec<String>,
}

impl BenchmarkReport {
    pub fn write_csv(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(REPORT_HEADER)?;
        for r in &self.rows {
            let seeds = r
                .seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            w.write_record(&[
                r.task.clone(),
                r.ground_truth_nats.map(|v| v.to_string()).unwrap_or_default(),
                r.variant.clone(),
                r.mean_nats.to_string(),
                r.std_nats.to_string(),
                r.bias_nats.map(|v| v.to_string()).unwrap_or_default(),
                seeds,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let body = serde_json::to_string_pretty(self)?;
        std::fs::write(path, body)?;
        Ok(())
    }
}

/// Serializable estimate record printed by `migap estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub task: String,
    pub variant: String,
    pub units: String,
    pub mean: f64,
    pub std: f64,
    pub n_points: usize,
    pub inference_times: usize,
}

impl EstimateRecord {
    pub fn new(task: String, est: &MiEstimate, bits: bool) -> Self {
        let scale = if bits { std::f64::consts::LN_2 } else { 1.0 };
        EstimateRecord {
            task,
            variant: est.variant.as_str().to_string(),
            units: if bits { "bits" } else { "nats" }.to_string(),
            mean: est.mean_nats / scale,
            std: est.std_nats / scale,
            n_points: est.n_points,
            inference_times: est.inference_times,
        }
    }
}

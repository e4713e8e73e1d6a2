//! Report files: evaluation reports as JSON, loss logs and analysis tables
//! as CSV, and the analysis summary as JSON. All writers are deterministic
//! (no timestamps, stable ordering, shortest round-trip float formatting).

use std::fs;
use std::path::Path;

use ffnlab_core::analysis::{ImportanceVector, RiTable};
use ffnlab_core::eval::EvalReport;
use ffnlab_core::train::LossRecord;

use crate::{LabError, Result};

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    crate::store::write_atomic(path, body.as_bytes())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let raw = fs::read_to_string(path)
        .map_err(|e| LabError::Config(format!("cannot read report {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Loads every `*.json` report under a directory, sorted by file name.
pub fn read_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(LabError::Config(format!("no report files under {}", dir.display())));
    }
    files.iter().map(|f| read_report(f)).collect()
}

pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["step", "lr", "loss", "grad_norm"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            r.lr.to_string(),
            r.loss.to_string(),
            r.grad_norm.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Config(e.to_string()))?;
    crate::store::write_atomic(path, &bytes)
}

/// RI table: one row per (config, task).
pub fn write_ri_csv(path: &Path, table: &RiTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config",
        "task",
        "metric",
        "metric_kind",
        "baseline_value",
        "value",
        "ri_percent",
        "below_chance",
    ])?;
    for row in &table.rows {
        let metric = match row.metric {
            ffnlab_core::eval::MetricKind::Accuracy => "accuracy",
            ffnlab_core::eval::MetricKind::Perplexity => "perplexity",
        };
        let class = match row.class {
            ffnlab_core::analysis::MetricClass::AccuracyBased => "accuracy-based",
            ffnlab_core::analysis::MetricClass::LossBased => "loss-based",
        };
        w.write_record([
            row.config.clone(),
            row.task.clone(),
            metric.into(),
            class.into(),
            row.baseline_value.to_string(),
            row.value.to_string(),
            row.ri_percent.to_string(),
            row.below_chance.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Config(e.to_string()))?;
    crate::store::write_atomic(path, &bytes)
}

pub fn write_importance_csv(path: &Path, iv: &ImportanceVector) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "raw_importance", "config_count", "standardized"])?;
    for layer in &iv.layers {
        w.write_record([
            layer.layer.to_string(),
            layer.raw.map(|v| v.to_string()).unwrap_or_default(),
            layer.config_count.to_string(),
            layer.standardized.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Config(e.to_string()))?;
    crate::store::write_atomic(path, &bytes)
}

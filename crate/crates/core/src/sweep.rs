//! Replication and sweep orchestration plus CSV output.
//!
//! Every (point, replication) pair runs as its own sequential event loop
//! on the rayon pool. Results are collected in index order, so the output
//! does not depend on scheduling. Replication `r` of every sweep point uses
//! the same substream seeds, which pairs the points for comparison.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig, Sweep, SweepAxis};
use crate::engine::run_replication;
use crate::metrics::{aggregate, Aggregate, Estimate, MetricsError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("nothing to write: the result table is empty")]
    EmptyTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Axis name, or `base` for a single point.
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Configuration that reproduces the table, sweep included.
    pub config: ScenarioConfig,
}

impl SweepTable {
    pub fn row(&self, value: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

/// Resolves the configuration of one sweep point.
pub fn point_config(base: &ScenarioConfig, axis: SweepAxis, value: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    cfg.set(axis.config_key(), &axis.config_value(value))
        .map_err(|e| ConfigError::Invalid(vec![e]))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_points(points: &[ScenarioConfig]) -> Result<Vec<Aggregate>, SimError> {
    let reps: Vec<u64> = points.iter().map(|c| u64::from(c.replications)).collect();
    let jobs: Vec<(usize, u64)> = reps
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| (0..n).map(move |r| (i, r)))
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(i, r)| run_replication(&points[i], r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(points.len());
    let mut start = 0;
    for (cfg, n) in points.iter().zip(reps) {
        let end = start + n as usize;
        out.push(aggregate(&summaries[start..end], cfg.confidence)?);
        start = end;
    }
    Ok(out)
}

/// Aggregates `base.replications` runs of a single configuration.
pub fn run_point(base: &ScenarioConfig) -> Result<Aggregate, SimError> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    cfg.validate()?;
    Ok(run_points(std::slice::from_ref(&cfg))?.remove(0))
}

pub fn run_sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[String]) -> Result<SweepTable, SimError> {
    if values.is_empty() {
        return Err(ConfigError::field("sweep.values", "sweep needs at least one value").into());
    }
    base.validate()?;
    let mut errors = Vec::new();
    let mut points = Vec::new();
    for v in values {
        match point_config(base, axis, v) {
            Ok(c) => points.push(c),
            Err(e) => errors.extend(e.fields().iter().map(|f| crate::config::FieldError {
                key: format!("sweep {}={v}: {}", axis.name(), f.key),
                message: f.message.clone(),
            })),
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors).into());
    }
    let aggregates = run_points(&points)?;
    let mut config = base.clone();
    config.sweep = Some(Sweep {
        axis,
        values: values.to_vec(),
    });
    Ok(SweepTable {
        axis: axis.name().into(),
        rows: values
            .iter()
            .cloned()
            .zip(aggregates)
            .map(|(value, aggregate)| SweepRow { value, aggregate })
            .collect(),
        config,
    })
}

/// Runs the sweep named in the config, or the base point when there is none.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SweepTable, SimError> {
    match &cfg.sweep {
        Some(s) => run_sweep(cfg, s.axis, &s.values),
        None => {
            let aggregate = run_point(cfg)?;
            Ok(SweepTable {
                axis: "base".into(),
                rows: vec![SweepRow {
                    value: "base".into(),
                    aggregate,
                }],
                config: cfg.clone(),
            })
        }
    }
}

pub const CSV_HEADER: [&str; 16] = [
    "axis",
    "value",
    "delay_mean_s",
    "delay_ci_s",
    "failure_prob",
    "failure_ci",
    "paoi_mean_s",
    "paoi_ci_s",
    "generated",
    "delivered",
    "dropped_holding",
    "dropped_nu",
    "dropped_sds_retry",
    "dropped_total",
    "pending",
    "replications",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn estimate_cells(e: &Estimate) -> [String; 2] {
    [opt(e.mean), opt(e.half_width)]
}

pub fn to_csv(table: &SweepTable) -> Result<Vec<u8>, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for row in &table.rows {
        let a = &row.aggregate;
        let c = &a.counts;
        let mut rec = vec![table.axis.clone(), row.value.clone()];
        rec.extend(estimate_cells(&a.delay));
        rec.extend(estimate_cells(&a.failure_probability));
        rec.extend(estimate_cells(&a.paoi));
        rec.extend(
            [
                c.generated,
                c.delivered,
                c.dropped_holding,
                c.dropped_nu,
                c.dropped_sds_retry,
                c.dropped(),
                c.pending,
                a.runs as u64,
            ]
            .map(|n| n.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| SimError::Io {
        path: "<buffer>".into(),
        source: e.into_error(),
    })
}

/// Sidecar path next to the CSV: `results.csv` -> `results.resolved.conf`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("resolved.conf")
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the CSV and its reproducibility sidecar; returns both paths.
pub fn emit_results(table: &SweepTable, destination: &Path) -> Result<(PathBuf, PathBuf), SimError> {
    if table.rows.is_empty() {
        return Err(SimError::EmptyTable);
    }
    write(destination, &to_csv(table)?)?;
    let sidecar = sidecar_path(destination);
    let text = format!(
        "# Resolved configuration; rerun with --scenario {}\n{}",
        sidecar.file_name().and_then(|n| n.to_str()).unwrap_or("<this file>"),
        table.config.to_text()
    );
    write(&sidecar, text.as_bytes())?;
    Ok((destination.to_path_buf(), sidecar))
}

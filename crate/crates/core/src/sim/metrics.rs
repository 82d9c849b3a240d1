// SPDX-License-Identifier: Apache-2.0

//! Time series collected during a run and the CSV files derived from them.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::coordinator::CoordinatorRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty flow group")]
    EmptyGroup,
    #[error("group throughput has zero mean")]
    ZeroMean,
    #[error("no samples for {0} in the requested window")]
    NoSamples(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Flow,
    Tenant,
    Link,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Flow => "flow",
            Scope::Tenant => "tenant",
            Scope::Link => "link",
        })
    }
}

/// One row of `metrics.csv`; covers the sampling interval ending at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub scope: Scope,
    pub id: String,
    pub throughput_bps: f64,
    /// Cumulative delivered (flow, tenant) or transmitted (link) bytes.
    pub bytes: u64,
    /// Cumulative drops in packets.
    pub drops: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FctRecord {
    pub flow: u32,
    pub tenant: u32,
    pub size: u64,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortSample {
    pub time: f64,
    pub port: String,
    pub enqueued_bytes: u64,
    pub dropped_bytes: u64,
    pub marked_packets: u64,
    pub tagged_packets: u64,
    pub counter_state: String,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub sampling_interval: f64,
    pub samples: Vec<Sample>,
    pub fct: Vec<FctRecord>,
    pub coordinator: Vec<CoordinatorRecord>,
    pub ports: Vec<PortSample>,
}

/// Population coefficient of variation.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

fn in_window(t: f64, t0: f64, t1: f64) -> bool {
    // Sample times mark interval ends; tolerate rounding at the edges.
    t > t0 + 1e-9 && t <= t1 + 1e-9
}

impl MetricsLog {
    pub fn series(&self, scope: Scope, id: &str) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter(|s| s.scope == scope && s.id == id)
            .map(|s| (s.time, s.throughput_bps))
            .collect()
    }

    pub fn ids(&self, scope: Scope) -> Vec<String> {
        let mut ids: Vec<String> = self
            .samples
            .iter()
            .filter(|s| s.scope == scope)
            .map(|s| s.id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Mean throughput over the sampling intervals inside `[t0, t1]`.
    pub fn mean_throughput(&self, scope: Scope, id: &str, t0: f64, t1: f64) -> Result<f64, MetricsError> {
        let values: Vec<f64> = self
            .samples
            .iter()
            .filter(|s| s.scope == scope && s.id == id && in_window(s.time, t0, t1))
            .map(|s| s.throughput_bps)
            .collect();
        if values.is_empty() {
            return Err(MetricsError::NoSamples(format!("{scope} {id}")));
        }
        Ok(values.iter().sum::<f64>() / values.len() as f64)
    }

    /// Mean throughput of consecutive windows of `width` seconds covering
    /// `[t0, t1]`, as `(window end, mean)`.
    pub fn windowed(&self, scope: Scope, id: &str, t0: f64, t1: f64, width: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = t0;
        while start + width <= t1 + 1e-9 {
            if let Ok(m) = self.mean_throughput(scope, id, start, start + width) {
                out.push((start + width, m));
            }
            start += width;
        }
        out
    }

    /// CoV of the mean throughputs of a group of series over a window.
    pub fn compute_fairness(&self, scope: Scope, ids: &[String], t0: f64, t1: f64) -> Result<f64, MetricsError> {
        let means = ids
            .iter()
            .map(|id| self.mean_throughput(scope, id, t0, t1))
            .collect::<Result<Vec<_>, _>>()?;
        coefficient_of_variation(&means)
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<Vec<PathBuf>, MetricsError> {
        fs::create_dir_all(dir).map_err(|source| MetricsError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();

        let path = dir.join("metrics.csv");
        write_rows(
            &path,
            &["time", "scope", "id", "throughput_bps", "bytes", "drops"],
            self.samples.iter().map(|s| {
                vec![
                    s.time.to_string(),
                    s.scope.to_string(),
                    s.id.clone(),
                    s.throughput_bps.to_string(),
                    s.bytes.to_string(),
                    s.drops.to_string(),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join("fct.csv");
        write_rows(
            &path,
            &["flowId", "tenantId", "size", "start", "finish", "fct_s"],
            self.fct.iter().map(|r| {
                vec![
                    r.flow.to_string(),
                    r.tenant.to_string(),
                    r.size.to_string(),
                    r.start.to_string(),
                    r.finish.to_string(),
                    (r.finish - r.start).to_string(),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join("coordinator.csv");
        write_rows(
            &path,
            &["windowId", "tenantId", "hostId", "inputFS", "targetFS"],
            self.coordinator.iter().map(|r| {
                vec![
                    r.window.to_string(),
                    r.tenant.to_string(),
                    r.host.0.to_string(),
                    r.input.to_string(),
                    r.target.to_string(),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join("ports.csv");
        write_rows(
            &path,
            &[
                "time",
                "port",
                "enqueued_bytes",
                "dropped_bytes",
                "marked_packets",
                "tagged_packets",
                "tenant_counter",
            ],
            self.ports.iter().map(|p| {
                vec![
                    p.time.to_string(),
                    p.port.clone(),
                    p.enqueued_bytes.to_string(),
                    p.dropped_bytes.to_string(),
                    p.marked_packets.to_string(),
                    p.tagged_packets.to_string(),
                    p.counter_state.clone(),
                ]
            }),
        )?;
        written.push(path);
        Ok(written)
    }
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), MetricsError> {
    let csv_err = |source| MetricsError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

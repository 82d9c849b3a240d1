// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::expect::{self, CheckResult};
use super::HarnessError;
use crate::scenario::Scenario;
use crate::sim::metrics::Scope;
use crate::sim::{self, RunOutput, RunStats};

/// Headline numbers measured over the last 40% of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Measurements {
    pub window: (f64, f64),
    pub tenant_throughput: BTreeMap<String, f64>,
    /// Each tenant's throughput over the first tenant's.
    pub tenant_ratios: BTreeMap<String, f64>,
    pub tenant_cov: Option<f64>,
    /// The switch egress link with the highest mean utilization.
    pub bottleneck: Option<String>,
    pub bottleneck_utilization: Option<f64>,
    /// Seconds after the last flow arrival until the weight-normalized
    /// tenant throughputs first have CoV below 0.1.
    pub convergence_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub measurements: Measurements,
    pub events: u64,
    pub network_drops: u64,
    pub host_drops: u64,
    pub signals: u64,
    pub csv: Vec<PathBuf>,
}

impl RunSummary {
    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn measurements(scenario: &Scenario, out: &RunOutput) -> Measurements {
    let log = &out.log;
    let (t0, t1) = (scenario.duration * 0.6, scenario.duration);
    let mut tenant_throughput = BTreeMap::new();
    for t in &scenario.tenants {
        if let Ok(m) = log.mean_throughput(Scope::Tenant, &t.id.to_string(), t0, t1) {
            tenant_throughput.insert(t.id.to_string(), m);
        }
    }
    let mut tenant_ratios = BTreeMap::new();
    if let Some(first) = scenario.tenants.first() {
        if let Some(&base) = tenant_throughput.get(&first.id.to_string()) {
            for (id, v) in &tenant_throughput {
                if base > 0.0 {
                    tenant_ratios.insert(id.clone(), v / base);
                }
            }
        }
    }
    let values: Vec<f64> = tenant_throughput.values().copied().collect();
    let tenant_cov = sim::metrics::coefficient_of_variation(&values).ok();

    let mut bottleneck = None;
    for (name, &cap) in &out.link_capacity {
        let from = name.split("->").next().unwrap_or_default();
        if out.flows.iter().any(|f| f.src == from) {
            continue;
        }
        if let Ok(m) = log.mean_throughput(Scope::Link, name, t0, t1) {
            let u = m / cap;
            if bottleneck.as_ref().map_or(true, |(_, b)| u > *b) {
                bottleneck = Some((name.clone(), u));
            }
        }
    }

    let last_arrival = out.flows.iter().map(|f| f.start).fold(0.0, f64::max);
    let weights: BTreeMap<String, f64> = scenario
        .tenants
        .iter()
        .map(|t| (t.id.to_string(), t.weight))
        .collect();
    let series: Vec<(f64, Vec<f64>)> = {
        let per: Vec<Vec<(f64, f64)>> = weights
            .iter()
            .map(|(id, w)| {
                log.series(Scope::Tenant, id)
                    .into_iter()
                    .map(|(t, v)| (t, v / w))
                    .collect()
            })
            .collect();
        let n = per.iter().map(|s| s.len()).min().unwrap_or(0);
        (0..n)
            .map(|i| (per[0][i].0, per.iter().map(|s| s[i].1).collect()))
            .collect()
    };
    let convergence_time = series
        .iter()
        .filter(|(t, _)| *t > last_arrival + 1e-9)
        .find(|(_, v)| {
            sim::metrics::coefficient_of_variation(v).map_or(false, |c| c < 0.1)
        })
        .map(|(t, _)| t - last_arrival);

    Measurements {
        window: (t0, t1),
        tenant_throughput,
        tenant_ratios,
        tenant_cov,
        bottleneck: bottleneck.as_ref().map(|b| b.0.clone()),
        bottleneck_utilization: bottleneck.map(|b| b.1),
        convergence_time,
    }
}

/// Simulates `scenario`, checks its expectations and, if `out_dir` is
/// given, writes the CSVs and `summary.json` there.
pub fn execute(scenario: &Scenario, out_dir: Option<&Path>) -> Result<(RunSummary, RunOutput), HarnessError> {
    let parsed = scenario
        .expect
        .iter()
        .map(|e| expect::parse(e))
        .collect::<Result<Vec<_>, _>>()?;
    let out = sim::run(scenario)?;
    let checks: Vec<CheckResult> = parsed
        .iter()
        .map(|e| expect::check(e, &out, scenario.duration))
        .collect();
    let csv = match out_dir {
        Some(dir) => out.log.write_csvs(dir)?,
        None => Vec::new(),
    };
    let RunStats {
        events,
        host_drops,
        network_drops,
        signals,
        ..
    } = out.stats;
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        pass: checks.iter().all(|c| c.pass),
        measurements: measurements(scenario, &out),
        checks,
        events,
        network_drops,
        host_drops,
        signals,
        csv,
    };
    if let Some(dir) = out_dir {
        let path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        fs::write(&path, text + "\n").map_err(|source| HarnessError::Io { path, source })?;
    }
    Ok((summary, out))
}

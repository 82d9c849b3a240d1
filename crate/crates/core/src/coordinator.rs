// SPDX-License-Identifier: Apache-2.0

//! Network-wide fair-share balancing.
//!
//! Hosts send one [`UsageReport`] per report cycle. The coordinator gathers
//! the reports that arrive while a window is open, and on close turns the
//! reported fair shares into targets.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;
use serde::{Deserialize, Serialize};

use crate::ids::{NodeId, TenantId};

#[derive(Debug, Clone, PartialEq)]
pub struct UsageReport {
    pub host: NodeId,
    pub seq: u64,
    pub entries: Vec<(TenantId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetUpdate {
    pub host: NodeId,
    pub window: u64,
    /// Sequence number of the host report this update answers, if any.
    pub answers: Option<u64>,
    pub entries: Vec<(TenantId, f64)>,
    /// Target for tenants without an entry of their own.
    pub fallback: Option<f64>,
    /// Number of hosts that reported each tenant in the window.
    pub spread: Vec<(TenantId, u32)>,
}

/// Which reported shares are balanced against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Scope {
    /// All tenants on all hosts form one input array.
    #[default]
    Global,
    /// One input array per tenant, indexed by host.
    PerTenant,
}

/// How a balanced input array becomes targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    /// Every contributor receives `Avg·(1+α)`.
    #[default]
    Mean,
    /// Contributor `i` receives `Avg·(1+α) − (s_i − Avg)`.
    Reflect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinatorParams {
    pub alpha: f64,
    pub scope: Scope,
    pub mode: Mode,
}

impl Default for CoordinatorParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            scope: Scope::Global,
            mode: Mode::Mean,
        }
    }
}

/// Mean shifted by the first input, so equal inputs average to themselves
/// exactly.
fn mean(inputs: &[f64]) -> f64 {
    let c = inputs[0];
    c + inputs.iter().map(|s| s - c).sum::<f64>() / inputs.len() as f64
}

/// Reflection targets: `Target − (s_i − Avg)` with `Target = Avg·(1+α)`,
/// floored at zero. Empty input yields no targets.
pub fn compute_targets(inputs: &[f64], alpha: f64) -> Vec<f64> {
    if inputs.is_empty() {
        return Vec::new();
    }
    let avg = mean(inputs);
    let target = avg * (1.0 + alpha);
    inputs
        .iter()
        .map(|&s| (target - (s - avg)).max(0.0))
        .collect()
}

/// Broadcast target `Avg·(1+α)`, or `None` for an empty input.
pub fn mean_target(inputs: &[f64], alpha: f64) -> Option<f64> {
    if inputs.is_empty() {
        None
    } else {
        Some((mean(inputs) * (1.0 + alpha)).max(0.0))
    }
}

fn targets_for(inputs: &[f64], params: &CoordinatorParams) -> Vec<f64> {
    match params.mode {
        Mode::Reflect => compute_targets(inputs, params.alpha),
        Mode::Mean => {
            let t = mean_target(inputs, params.alpha).unwrap_or(0.0);
            vec![t; inputs.len()]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectOutcome {
    Stored,
    Duplicate,
}

#[derive(Debug, Clone, Default)]
pub struct ReportWindow {
    pub id: u64,
    pub received: BTreeMap<NodeId, UsageReport>,
}

impl ReportWindow {
    pub fn new(id: u64) -> Self {
        Self {
            id,
            received: BTreeMap::new(),
        }
    }

    /// Stores a report unless this host already reported in the window.
    pub fn collect(&mut self, report: UsageReport) -> CollectOutcome {
        if self.received.contains_key(&report.host) {
            debug!(
                "window {}: duplicate report from host {} ignored",
                self.id, report.host
            );
            return CollectOutcome::Duplicate;
        }
        self.received.insert(report.host, report);
        CollectOutcome::Stored
    }
}

/// One row of the coordinator trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorRecord {
    pub window: u64,
    pub tenant: TenantId,
    pub host: NodeId,
    pub input: f64,
    pub target: f64,
}

/// Computes the updates for a closed window, one per reporting host plus a
/// fallback-only update for every host in `listeners` that stayed silent.
pub fn close_window(
    window: &ReportWindow,
    params: &CoordinatorParams,
    listeners: &BTreeSet<NodeId>,
) -> (Vec<TargetUpdate>, Vec<CoordinatorRecord>) {
    // (tenant, host) -> input, in deterministic order.
    let mut contributions: Vec<(TenantId, NodeId, f64)> = Vec::new();
    for report in window.received.values() {
        for &(tenant, share) in &report.entries {
            contributions.push((tenant, report.host, share.max(0.0)));
        }
    }
    contributions.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut outputs = vec![0.0; contributions.len()];
    let mut fallback = None;
    match params.scope {
        Scope::Global => {
            let inputs: Vec<f64> = contributions.iter().map(|c| c.2).collect();
            outputs = targets_for(&inputs, params);
            if params.mode == Mode::Mean {
                fallback = mean_target(&inputs, params.alpha);
            }
        }
        Scope::PerTenant => {
            let mut start = 0;
            while start < contributions.len() {
                let tenant = contributions[start].0;
                let end = start
                    + contributions[start..]
                        .iter()
                        .take_while(|c| c.0 == tenant)
                        .count();
                let inputs: Vec<f64> = contributions[start..end].iter().map(|c| c.2).collect();
                outputs[start..end].copy_from_slice(&targets_for(&inputs, params));
                start = end;
            }
        }
    }

    let mut per_host: BTreeMap<NodeId, Vec<(TenantId, f64)>> = BTreeMap::new();
    let mut records = Vec::with_capacity(contributions.len());
    for (&(tenant, host, input), &target) in contributions.iter().zip(&outputs) {
        per_host.entry(host).or_default().push((tenant, target));
        records.push(CoordinatorRecord {
            window: window.id,
            tenant,
            host,
            input,
            target,
        });
    }

    let mut spread: BTreeMap<TenantId, u32> = BTreeMap::new();
    for c in &contributions {
        *spread.entry(c.0).or_default() += 1;
    }
    let spread: Vec<(TenantId, u32)> = spread.into_iter().collect();

    let mut updates = Vec::new();
    let hosts: BTreeSet<NodeId> = listeners
        .iter()
        .copied()
        .chain(window.received.keys().copied())
        .collect();
    for host in hosts {
        let answers = window.received.get(&host).map(|r| r.seq);
        let entries = per_host.remove(&host).unwrap_or_default();
        if answers.is_none() && fallback.is_none() {
            continue;
        }
        updates.push(TargetUpdate {
            host,
            window: window.id,
            answers,
            entries,
            fallback,
            spread: spread.clone(),
        });
    }
    (updates, records)
}

/// Coordinator state across windows.
#[derive(Debug, Clone)]
pub struct Coordinator {
    params: CoordinatorParams,
    open: ReportWindow,
    listeners: BTreeSet<NodeId>,
    trace: Vec<CoordinatorRecord>,
}

impl Coordinator {
    pub fn new(params: CoordinatorParams) -> Self {
        Self {
            params,
            open: ReportWindow::new(0),
            listeners: BTreeSet::new(),
            trace: Vec::new(),
        }
    }

    pub fn params(&self) -> &CoordinatorParams {
        &self.params
    }

    pub fn open_window(&self) -> &ReportWindow {
        &self.open
    }

    /// Reports always land in the window that is open when they arrive.
    pub fn on_report(&mut self, report: UsageReport) -> CollectOutcome {
        self.listeners.insert(report.host);
        self.open.collect(report)
    }

    pub fn close(&mut self) -> Vec<TargetUpdate> {
        let (updates, records) = close_window(&self.open, &self.params, &self.listeners);
        self.trace.extend(records);
        self.open = ReportWindow::new(self.open.id + 1);
        updates
    }

    pub fn trace(&self) -> &[CoordinatorRecord] {
        &self.trace
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(host: u32, seq: u64, entries: &[(u32, f64)]) -> UsageReport {
        UsageReport {
            host: NodeId(host),
            seq,
            entries: entries.iter().map(|&(t, s)| (TenantId(t), s)).collect(),
        }
    }

    #[test]
    fn equal_inputs_are_accelerated() {
        let out = compute_targets(&[3.0, 3.0, 3.0], 0.1);
        for t in out {
            assert!((t - 3.3).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_swaps_deviation() {
        assert_eq!(compute_targets(&[4.0, 6.0], 0.0), vec![6.0, 4.0]);
    }

    #[test]
    fn single_contributor_gets_accelerated_share() {
        let out = compute_targets(&[10.0], 0.1);
        assert!((out[0] - 11.0).abs() < 1e-12);
        assert_eq!(mean_target(&[], 0.1), None);
        assert!(compute_targets(&[], 0.1).is_empty());
    }

    #[test]
    fn reflection_floors_at_zero() {
        assert_eq!(compute_targets(&[0.0, 10.0], 0.0), vec![10.0, 0.0]);
        assert_eq!(compute_targets(&[0.0, 0.0, 30.0], 0.0)[2], 0.0);
    }

    #[test]
    fn first_report_is_stored_and_second_ignored() {
        let mut w = ReportWindow::new(0);
        assert_eq!(w.collect(report(1, 0, &[(0, 1.0)])), CollectOutcome::Stored);
        assert_eq!(w.collect(report(1, 0, &[(0, 9.0)])), CollectOutcome::Duplicate);
        assert_eq!(w.received[&NodeId(1)].entries[0].1, 1.0);
    }

    #[test]
    fn late_report_lands_in_next_window() {
        let mut c = Coordinator::new(CoordinatorParams {
            alpha: 0.0,
            scope: Scope::PerTenant,
            mode: Mode::Reflect,
        });
        c.on_report(report(1, 0, &[(0, 4.0)]));
        let first = c.close();
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].answers, Some(0));
        // Host 2's seq-0 report arrives after window 0 closed.
        c.on_report(report(2, 0, &[(0, 6.0)]));
        c.on_report(report(1, 1, &[(0, 4.0)]));
        let second = c.close();
        assert_eq!(second.len(), 2);
        assert!(second.iter().all(|u| u.window == 1));
        let to_host1 = second.iter().find(|u| u.host == NodeId(1)).unwrap();
        assert_eq!(to_host1.entries, vec![(TenantId(0), 6.0)]);
    }

    #[test]
    fn global_mean_broadcasts_one_target() {
        let mut c = Coordinator::new(CoordinatorParams::default());
        c.on_report(report(1, 0, &[(0, 1.0), (1, 2.0)]));
        c.on_report(report(2, 0, &[(0, 3.0)]));
        let updates = c.close();
        let want = 2.0 * 1.1;
        for u in &updates {
            assert!((u.fallback.unwrap() - want).abs() < 1e-12);
            for &(_, t) in &u.entries {
                assert!((t - want).abs() < 1e-12);
            }
        }
        assert_eq!(c.trace().len(), 3);
        // Silent listeners still get the broadcast.
        let updates = c.close();
        assert!(updates.is_empty());
        c.on_report(report(1, 1, &[(0, 5.0)]));
        let updates = c.close();
        assert_eq!(updates.len(), 2);
        let silent = updates.iter().find(|u| u.host == NodeId(2)).unwrap();
        assert_eq!(silent.answers, None);
        assert!(silent.entries.is_empty());
    }

    #[test]
    fn per_tenant_scope_balances_each_tenant_separately() {
        let window = ReportWindow {
            id: 3,
            received: [
                (NodeId(1), report(1, 3, &[(0, 4.0), (1, 1.0)])),
                (NodeId(2), report(2, 3, &[(0, 6.0), (1, 1.0)])),
            ]
            .into_iter()
            .collect(),
        };
        let params = CoordinatorParams {
            alpha: 0.0,
            scope: Scope::PerTenant,
            mode: Mode::Reflect,
        };
        let (updates, records) = close_window(&window, &params, &BTreeSet::new());
        assert_eq!(records.len(), 4);
        let h1 = updates.iter().find(|u| u.host == NodeId(1)).unwrap();
        assert_eq!(h1.entries, vec![(TenantId(0), 6.0), (TenantId(1), 1.0)]);
        assert_eq!(h1.fallback, None);
    }
}

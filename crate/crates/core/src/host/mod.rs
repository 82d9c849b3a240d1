// SPDX-License-Identifier: Apache-2.0

//! End-host agent: unit-flow table, tenant controllers, byte-counters and the
//! distributed rate adaptation loop.

pub mod cawc;
pub mod token_bucket;

use std::collections::BTreeMap;

use log::warn;

use crate::bf::{self, BandwidthFunction};
use crate::coordinator::{TargetUpdate, UsageReport};
use crate::ids::{FlowKey, NodeId, TenantId, UnitFlowId};
use crate::sim::time::SimTime;
use token_bucket::TokenBucket;

#[derive(Debug, Clone, PartialEq)]
pub struct HostParams {
    pub device_rate_limit: f64,
    pub report_cycle: SimTime,
    pub rate_control_cycle: SimTime,
    /// Fair-share attenuation applied on the second congested cycle.
    pub k: f64,
    pub min_fair_share: f64,
    /// Bandwidth of one fair-share unit in a flow's initial BF.
    pub fair_share_unit: f64,
    pub burst_bytes: f64,
    /// Treat every congestion signal as inter-tenant. Used when switches run
    /// without the tenant-counter.
    pub assume_inter_tenant: bool,
    /// Move each flow's fair share toward the target on every cycle, not only
    /// on the first cycle after a new target arrives.
    pub compensate_every_cycle: bool,
}

impl Default for HostParams {
    fn default() -> Self {
        Self {
            device_rate_limit: 10e9,
            report_cycle: SimTime::from_millis(10),
            rate_control_cycle: SimTime::from_millis(1),
            k: 1.0,
            min_fair_share: 0.01,
            fair_share_unit: bf::DEFAULT_FAIR_SHARE_UNIT,
            burst_bytes: 2250.0,
            assume_inter_tenant: false,
            compensate_every_cycle: true,
        }
    }
}

/// A tenant as seen by one host.
#[derive(Debug, Clone, PartialEq)]
pub struct TenantSpec {
    pub weight: f64,
    pub bf: BandwidthFunction,
}

#[derive(Debug, Clone)]
struct TenantController {
    spec: TenantSpec,
    /// This host's portion of the tenant BF: `spec.bf` divided by the number
    /// of hosts the coordinator last saw carrying the tenant.
    bf: BandwidthFunction,
    spread: u32,
    members: Vec<UnitFlowId>,
}

impl TenantController {
    fn new(spec: TenantSpec) -> Self {
        Self {
            bf: spec.bf.clone(),
            spec,
            spread: 1,
            members: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnitFlow {
    pub id: UnitFlowId,
    pub key: FlowKey,
    pub original_bf: BandwidthFunction,
    /// Working BF installed by the tenant controller.
    pub bf: BandwidthFunction,
    pub fair_share: f64,
    pub allocated_rate: f64,
    /// Byte-counter for the current report cycle.
    pub bytes_this_cycle: u64,
    pub bytes_this_rc: u64,
    pub last_rc_bytes: u64,
    pub blocked_this_rc: bool,
    pub active: bool,
    pub congested_prev_cycle: bool,
    pub congested_this_cycle: bool,
    pub competitive: bool,
    joined: bool,
    target_generation: u64,
    bucket: TokenBucket,
}

impl UnitFlow {
    pub fn bucket(&self) -> &TokenBucket {
        &self.bucket
    }
}

/// Outcome of asking whether a unit-flow may put a packet on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendDecision {
    Allow,
    WaitUntil(SimTime),
}

/// Per-flow result of one rate adaptation cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RateDecision {
    pub flow: UnitFlowId,
    pub fair_share: f64,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct HostAgent {
    id: NodeId,
    params: HostParams,
    tenants: BTreeMap<TenantId, TenantController>,
    flows: Vec<UnitFlow>,
    index: BTreeMap<FlowKey, UnitFlowId>,
    targets: BTreeMap<TenantId, f64>,
    fallback_target: Option<f64>,
    target_generation: u64,
    last_report: SimTime,
    report_seq: u64,
    awaiting: Option<u64>,
    membership_dirty: bool,
}

impl HostAgent {
    pub fn new(id: NodeId, params: HostParams, tenants: BTreeMap<TenantId, TenantSpec>) -> Self {
        Self {
            id,
            params,
            tenants: tenants
                .into_iter()
                .map(|(t, spec)| (t, TenantController::new(spec)))
                .collect(),
            flows: Vec::new(),
            index: BTreeMap::new(),
            targets: BTreeMap::new(),
            fallback_target: None,
            target_generation: 0,
            last_report: SimTime::ZERO,
            report_seq: 0,
            awaiting: None,
            membership_dirty: false,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn params(&self) -> &HostParams {
        &self.params
    }

    pub fn flows(&self) -> &[UnitFlow] {
        &self.flows
    }

    pub fn flow(&self, id: UnitFlowId) -> &UnitFlow {
        &self.flows[id.0 as usize]
    }

    pub fn flow_mut(&mut self, id: UnitFlowId) -> &mut UnitFlow {
        &mut self.flows[id.0 as usize]
    }

    pub fn lookup(&self, key: &FlowKey) -> Option<UnitFlowId> {
        self.index.get(key).copied()
    }

    pub fn target(&self, tenant: TenantId) -> Option<f64> {
        self.targets.get(&tenant).copied().or(self.fallback_target)
    }

    /// Returns the unit-flow for `key`, creating it in the non-competitive
    /// pool if needed. A tenant unknown to the host gets weight 1 and its
    /// flow BF as tenant BF.
    pub fn classify(&mut self, key: FlowKey, starting_rate: f64, now: SimTime) -> UnitFlowId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let p = &self.params;
        let weight = self
            .tenants
            .get(&key.tenant)
            .map(|t| t.spec.weight)
            .unwrap_or(1.0);
        let original_bf = bf::init_flow(weight, weight, p.device_rate_limit, p.fair_share_unit)
            .unwrap_or_else(|_| BandwidthFunction::constant(0.0));
        let fair_share = original_bf.inverse_clamped(starting_rate.max(0.0));
        let id = UnitFlowId(self.flows.len() as u32);
        self.tenants
            .entry(key.tenant)
            .or_insert_with(|| {
                TenantController::new(TenantSpec {
                    weight,
                    bf: original_bf.clone(),
                })
            })
            .members
            .push(id);
        self.flows.push(UnitFlow {
            id,
            key,
            bf: original_bf.clone(),
            original_bf,
            fair_share,
            allocated_rate: f64::INFINITY,
            bytes_this_cycle: 0,
            bytes_this_rc: 0,
            last_rc_bytes: 0,
            blocked_this_rc: false,
            active: true,
            congested_prev_cycle: false,
            congested_this_cycle: false,
            competitive: false,
            joined: false,
            target_generation: 0,
            bucket: TokenBucket::new(p.device_rate_limit, p.burst_bytes, now),
        });
        self.index.insert(key, id);
        id
    }

    /// Token-bucket gate. Flows in the non-competitive pool are never paced.
    pub fn admit(&mut self, id: UnitFlowId, bytes: u64, now: SimTime) -> SendDecision {
        let f = &mut self.flows[id.0 as usize];
        if !f.competitive {
            return SendDecision::Allow;
        }
        let bytes_for_bucket = bytes.min(f.bucket.burst() as u64);
        match f.bucket.try_send(bytes_for_bucket, now) {
            Ok(true) => SendDecision::Allow,
            _ => {
                f.blocked_this_rc = true;
                SendDecision::WaitUntil(f.bucket.ready_at(bytes_for_bucket, now))
            }
        }
    }

    /// Byte-counter update for an admitted packet.
    pub fn on_sent(&mut self, id: UnitFlowId, bytes: u64) {
        let f = &mut self.flows[id.0 as usize];
        f.bytes_this_cycle += bytes;
        f.bytes_this_rc += bytes;
    }

    fn effective_members(&self, tenant: TenantId) -> Vec<UnitFlowId> {
        self.tenants
            .get(&tenant)
            .map(|t| {
                t.members
                    .iter()
                    .copied()
                    .filter(|m| {
                        let f = &self.flows[m.0 as usize];
                        f.competitive && f.active
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Re-aggregates the tenant's active competitive flows against the
    /// tenant BF and installs the results as their working BFs.
    pub fn tenant_refresh(&mut self, tenant: TenantId) {
        let members = self.effective_members(tenant);
        if members.is_empty() {
            return;
        }
        let Some(controller) = self.tenants.get(&tenant) else {
            return;
        };
        let originals: Vec<BandwidthFunction> = members
            .iter()
            .map(|m| self.flows[m.0 as usize].original_bf.clone())
            .collect();
        match bf::bf_aggregate(&originals, &controller.bf) {
            Ok(aggregated) => {
                for (m, agg) in members.iter().zip(aggregated) {
                    self.flows[m.0 as usize].bf = agg;
                }
            }
            Err(e) => warn!("host {}: aggregation for tenant {tenant} failed: {e}", self.id),
        }
    }

    fn refresh_all(&mut self) {
        let tenants: Vec<TenantId> = self.tenants.keys().copied().collect();
        for t in tenants {
            self.tenant_refresh(t);
        }
        self.membership_dirty = false;
    }

    /// Builds this cycle's usage report, or `None` while the previous report
    /// is still unanswered or no tenant has active competitive flows.
    pub fn report_usage(&mut self, now: SimTime) -> Option<UsageReport> {
        if self.awaiting.is_some() {
            return None;
        }
        self.refresh_all();
        let elapsed = now.saturating_sub(self.last_report).as_secs();
        let mut entries = Vec::new();
        for (&tenant, controller) in &self.tenants {
            let mut any = false;
            let mut bytes = 0u64;
            for m in &controller.members {
                let f = &self.flows[m.0 as usize];
                if f.competitive && f.active {
                    any = true;
                    bytes += f.bytes_this_cycle;
                }
            }
            if !any {
                continue;
            }
            let bw = if elapsed > 0.0 {
                bytes as f64 * 8.0 / elapsed
            } else {
                0.0
            };
            entries.push((tenant, controller.bf.inverse_clamped(bw)));
        }
        for f in &mut self.flows {
            f.bytes_this_cycle = 0;
        }
        self.last_report = now;
        if entries.is_empty() {
            return None;
        }
        let report = UsageReport {
            host: self.id,
            seq: self.report_seq,
            entries,
        };
        self.awaiting = Some(self.report_seq);
        self.report_seq += 1;
        Some(report)
    }

    pub fn apply_target(&mut self, update: &TargetUpdate) {
        for &(tenant, target) in &update.entries {
            self.targets.insert(tenant, target);
        }
        if update.fallback.is_some() {
            self.fallback_target = update.fallback;
        }
        for &(tenant, hosts) in &update.spread {
            if let Some(c) = self.tenants.get_mut(&tenant) {
                let hosts = hosts.max(1);
                if c.spread != hosts {
                    c.spread = hosts;
                    c.bf = c.spec.bf.scale_bandwidth(1.0 / hosts as f64);
                    self.membership_dirty = true;
                }
            }
        }
        self.target_generation += 1;
        if update.answers.is_some() && update.answers == self.awaiting {
            self.awaiting = None;
        }
    }

    /// Reacts to a CAWC signal addressed to one of this host's unit-flows.
    pub fn handle_congestion_signal(&mut self, key: &FlowKey, inter_tenant: bool) {
        let inter_tenant = inter_tenant || self.params.assume_inter_tenant;
        let Some(&id) = self.index.get(key) else {
            warn!("host {}: congestion signal for unknown flow {key:?}", self.id);
            return;
        };
        let f = &mut self.flows[id.0 as usize];
        if f.competitive {
            f.congested_this_cycle = true;
        } else if inter_tenant {
            f.competitive = true;
            f.joined = true;
            f.congested_this_cycle = true;
            self.membership_dirty = true;
        }
    }

    /// One run of the distributed rate adaptation algorithm.
    pub fn rate_adaptation_cycle(&mut self, now: SimTime) -> Vec<RateDecision> {
        let p = self.params.clone();
        let rc_secs = p.rate_control_cycle.as_secs();
        let growth = 1.0 + rc_secs / p.report_cycle.as_secs();

        // Activity of the cycle that just ended.
        for f in &mut self.flows {
            let was_active = f.active;
            f.active = f.bytes_this_rc > 0 || f.blocked_this_rc;
            if f.competitive && f.active != was_active {
                self.membership_dirty = true;
            }
        }
        if self.membership_dirty {
            self.refresh_all();
        }

        let mut planned: Vec<(usize, f64, f64)> = Vec::new();
        let mut rate_sum = 0.0;
        for (i, f) in self.flows.iter_mut().enumerate() {
            if !f.competitive || !f.active {
                continue;
            }
            if f.joined {
                f.joined = false;
                let rate = f.bytes_this_rc as f64 * 8.0 / rc_secs;
                f.fair_share = f.bf.inverse_clamped(rate);
            }
            let mut fs = f.fair_share.max(p.min_fair_share);
            let target = self
                .targets
                .get(&f.key.tenant)
                .copied()
                .or(self.fallback_target);
            let fresh = p.compensate_every_cycle || f.target_generation != self.target_generation;
            f.target_generation = self.target_generation;
            if let (Some(target), true) = (target, fresh) {
                if fs != target {
                    fs += bf::solve_compensation(&f.bf, fs, target);
                }
            }
            if f.congested_this_cycle && f.congested_prev_cycle {
                fs -= p.k;
            } else if !f.congested_this_cycle {
                fs *= growth;
            }
            fs = fs.max(p.min_fair_share).min(f.bf.max_share().max(p.min_fair_share));
            let bw = f.bf.eval(fs);
            rate_sum += bw;
            planned.push((i, fs, bw));
        }

        let scaling = if rate_sum >= p.device_rate_limit && rate_sum > 0.0 {
            p.device_rate_limit / rate_sum
        } else {
            1.0
        };
        let mut decisions = Vec::with_capacity(planned.len());
        for (i, fs, bw) in planned {
            let f = &mut self.flows[i];
            f.fair_share = fs;
            f.allocated_rate = bw * scaling;
            f.bucket.set_rate(f.allocated_rate, now);
            decisions.push(RateDecision {
                flow: f.id,
                fair_share: fs,
                rate: f.allocated_rate,
            });
        }

        for f in &mut self.flows {
            f.congested_prev_cycle = f.congested_this_cycle;
            f.congested_this_cycle = false;
            f.last_rc_bytes = f.bytes_this_rc;
            f.bytes_this_rc = 0;
            f.blocked_this_rc = false;
        }
        decisions
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Deterministic packet-level discrete-event simulator.

pub mod event;
pub mod metrics;
pub mod packet;
pub mod time;
pub mod topology;
pub mod traffic;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use log::{debug, info, trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bf::BandwidthFunction;
use crate::coordinator::{Coordinator, CoordinatorParams, TargetUpdate, UsageReport};
use crate::host::cawc::{CawcParams, CawcScoreboard};
use crate::host::{HostAgent, HostParams, SendDecision, TenantSpec};
use crate::ids::{FlowId, FlowKey, NodeId, PortId, TenantId, UnitFlowId};
use crate::scenario::{Scenario, SourceKind};
use crate::switch::{CounterState, EcnParams, EnqueueOutcome, PortQueue, TenantCounter};
use event::EventQueue;
use metrics::{FctRecord, MetricsLog, PortSample, Sample, Scope};
use packet::{Packet, PacketKind, CONTROL_BYTES, MTU};
use time::SimTime;
use topology::{ecmp_hash, NodeKind, Topology, TopologyError};
use traffic::{Aimd, AimdParams, Cbr, Readiness};

/// Data packets a host keeps queued at its own NIC.
const NIC_QUEUE_PACKETS: usize = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("sources[{index}]: {message}")]
    Source { index: usize, message: String },
    #[error("tenants[{index}]: {message}")]
    Tenant { index: usize, message: String },
    #[error("pronet.tenantCounter.switches: unknown switch {0:?}")]
    UnknownSwitch(String),
}

#[derive(Debug)]
enum Transport {
    Cbr(Cbr),
    Aimd(Aimd),
}

impl Transport {
    fn poll(&mut self, now: SimTime) -> Readiness {
        match self {
            Transport::Cbr(c) => c.poll(now),
            Transport::Aimd(a) => a.poll(now),
        }
    }
}

#[derive(Debug)]
struct Source {
    tenant: TenantId,
    src: NodeId,
    dst: NodeId,
    size: Option<u64>,
    start: SimTime,
    transport: Transport,
    route: Arc<[PortId]>,
    reverse: Arc<[PortId]>,
    unit_flow: Option<UnitFlowId>,
    delivered: u64,
    done_sending: bool,
    finished: Option<SimTime>,
    rto_at: Option<SimTime>,
}

struct Port {
    from: NodeId,
    to: NodeId,
    capacity: f64,
    delay: SimTime,
    queue: PortQueue<Packet>,
    in_tx: Option<Packet>,
    name: String,
    tx_bytes: u64,
    tx_bytes_prev: u64,
}

struct HostNode {
    agent: Option<HostAgent>,
    sources: Vec<FlowId>,
    rr: usize,
    wake_at: Option<SimTime>,
    scoreboard: Option<CawcScoreboard<FlowKey>>,
}

#[derive(Debug)]
enum Event {
    TxDone(PortId),
    Arrive(PortId, Packet),
    HostWake(NodeId),
    Rto(FlowId),
    RateControl(NodeId),
    Report(NodeId),
    CoordinatorReport(UsageReport),
    CoordinatorClose,
    Target(TargetUpdate),
    Sample,
}

/// Counters not covered by the time series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub events: u64,
    pub host_drops: u64,
    pub network_drops: u64,
    pub aimd_losses: u64,
    pub signals: u64,
    pub competitive_flows: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub stats: RunStats,
    /// Tenant and start time of each flow, indexed by flow id.
    pub flows: Vec<FlowInfo>,
    /// Capacity of each directed link, keyed `a->b`.
    pub link_capacity: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowInfo {
    pub tenant: u32,
    pub start: f64,
    pub src: String,
    pub dst: String,
}

pub struct Simulator {
    topo: Topology,
    queue: EventQueue<Event>,
    ports: Vec<Port>,
    port_of: BTreeMap<(NodeId, NodeId), PortId>,
    hosts: BTreeMap<NodeId, HostNode>,
    sources: Vec<Source>,
    reverse_of: BTreeMap<FlowKey, Arc<[PortId]>>,
    coordinator: Option<Coordinator>,
    control_delay: SimTime,
    report_cycle: SimTime,
    rate_control_cycle: SimTime,
    sampling: SimTime,
    horizon: SimTime,
    tenants: Vec<TenantId>,
    flow_drops: Vec<u64>,
    delivered_prev: Vec<u64>,
    log: MetricsLog,
    stats: RunStats,
}

fn tenant_bf(weight: f64, unit: f64, limit: f64, guarantee: Option<f64>) -> BandwidthFunction {
    let g = guarantee.unwrap_or(0.0).clamp(0.0, limit);
    let slope = weight * unit;
    let top = (limit - g) / slope;
    if top <= 0.0 {
        BandwidthFunction::constant(g)
    } else {
        BandwidthFunction::new(vec![(0.0, g), (top, limit)]).expect("valid tenant BF")
    }
}

impl Simulator {
    pub fn new(scenario: &Scenario) -> Result<Simulator, SimError> {
        let topo = Topology::build(&scenario.topology)?;
        let pn = &scenario.pronet;
        let seed = scenario.seed;

        let counter_switches: Option<BTreeSet<NodeId>> = match &pn.tenant_counter.switches {
            Some(names) => Some(
                names
                    .iter()
                    .map(|n| topo.node(n).map_err(|_| SimError::UnknownSwitch(n.clone())))
                    .collect::<Result<_, _>>()?,
            ),
            None => None,
        };
        let ecn = EcnParams {
            min_bytes: pn.ecn.min,
            max_bytes: pn.ecn.max,
        };
        let counter_enabled = pn.enabled && pn.tenant_counter.enabled;

        let mut ports = Vec::new();
        let mut port_of = BTreeMap::new();
        for (li, link) in topo.links().iter().enumerate() {
            for (from, to) in [(link.a, link.b), (link.b, link.a)] {
                let id = PortId(ports.len() as u32);
                let at_switch = topo.kind(from) == NodeKind::Switch;
                let counter = (at_switch
                    && counter_enabled
                    && counter_switches.as_ref().map_or(true, |s| s.contains(&from)))
                .then(|| TenantCounter::new(SimTime::from_secs(pn.tenant_counter.th)));
                let (buffer, port_ecn) = if at_switch {
                    (topo.buffer_bytes, Some(ecn))
                } else {
                    (u64::MAX / 4, None)
                };
                let rng = ChaCha8Rng::seed_from_u64(ecmp_hash(&[seed, 0x5eed, li as u64, id.0 as u64]));
                ports.push(Port {
                    from,
                    to,
                    capacity: link.capacity,
                    delay: SimTime::from_secs(link.delay),
                    queue: PortQueue::new(buffer, port_ecn, counter, rng),
                    in_tx: None,
                    name: format!("{}->{}", topo.name(from), topo.name(to)),
                    tx_bytes: 0,
                    tx_bytes_prev: 0,
                });
                port_of.entry((from, to)).or_insert(id);
            }
        }

        let report_cycle = SimTime::from_secs(pn.report_cycle);
        let rate_control_cycle = SimTime::from_secs(pn.rate_control_cycle());
        let unit = pn.fair_share_unit;

        let host_limit = |h: NodeId| {
            let nic: f64 = topo
                .links()
                .iter()
                .filter(|l| l.a == h || l.b == h)
                .map(|l| l.capacity)
                .sum();
            pn.device_rate_limit.unwrap_or(nic)
        };
        // Tenant BFs top out at the combined limit of the tenant's senders.
        let mut senders: BTreeMap<u32, BTreeSet<NodeId>> = BTreeMap::new();
        for s in &scenario.sources {
            if let Ok(n) = topo.node(&s.src) {
                senders.entry(s.tenant).or_default().insert(n);
            }
        }
        let tenant_limit: BTreeMap<u32, f64> = senders
            .iter()
            .map(|(t, hs)| (*t, hs.iter().map(|&h| host_limit(h)).sum()))
            .collect();

        let mut hosts = BTreeMap::new();
        for h in topo.hosts() {
            let limit = host_limit(h);
            let agent = pn.enabled.then(|| {
                let params = HostParams {
                    device_rate_limit: limit,
                    report_cycle,
                    rate_control_cycle,
                    k: pn.k,
                    min_fair_share: pn.min_fair_share,
                    fair_share_unit: unit,
                    burst_bytes: pn.burst_bytes.unwrap_or(1.5 * MTU as f64),
                    assume_inter_tenant: !pn.tenant_counter.enabled,
                    compensate_every_cycle: pn.compensate_every_cycle,
                };
                let specs = scenario
                    .tenants
                    .iter()
                    .map(|t| {
                        let bf = t
                            .bf
                            .clone()
                            .unwrap_or_else(|| {
                                let cap = tenant_limit.get(&t.id).copied().unwrap_or(limit);
                                tenant_bf(t.weight, unit, cap, t.min_guarantee)
                            });
                        (TenantId(t.id), TenantSpec { weight: t.weight, bf })
                    })
                    .collect();
                HostAgent::new(h, params, specs)
            });
            let scoreboard = pn.enabled.then(|| {
                CawcScoreboard::new(CawcParams {
                    sliding_time: SimTime::from_secs(pn.cawc.sliding_time),
                    threshold: pn.cawc.threshold,
                    check_period_packets: pn.cawc.check_period_packets,
                })
            });
            hosts.insert(
                h,
                HostNode {
                    agent,
                    sources: Vec::new(),
                    rr: 0,
                    wake_at: None,
                    scoreboard,
                },
            );
        }

        let mut sim = Simulator {
            topo,
            queue: EventQueue::new(),
            ports,
            port_of,
            hosts,
            sources: Vec::new(),
            reverse_of: BTreeMap::new(),
            coordinator: pn.enabled.then(|| {
                Coordinator::new(CoordinatorParams {
                    alpha: pn.alpha,
                    scope: pn.coordinator.scope,
                    mode: pn.coordinator.mode,
                })
            }),
            control_delay: SimTime::from_secs(pn.coordinator.delay),
            report_cycle,
            rate_control_cycle,
            sampling: SimTime::from_secs(scenario.sampling),
            horizon: SimTime::from_secs(scenario.duration),
            tenants: scenario.tenants.iter().map(|t| TenantId(t.id)).collect(),
            flow_drops: Vec::new(),
            delivered_prev: Vec::new(),
            log: MetricsLog {
                sampling_interval: scenario.sampling,
                ..MetricsLog::default()
            },
            stats: RunStats::default(),
        };
        sim.add_sources(scenario)?;
        Ok(sim)
    }

    fn route_ports(&self, path: &[NodeId]) -> Arc<[PortId]> {
        path.windows(2)
            .map(|w| self.port_of[&(w[0], w[1])])
            .collect::<Vec<_>>()
            .into()
    }

    fn add_sources(&mut self, scenario: &Scenario) -> Result<(), SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(ecmp_hash(&[scenario.seed, 0xf10e]));
        for (index, spec) in scenario.sources.iter().enumerate() {
            let err = |message: String| SimError::Source { index, message };
            let src = self.topo.node(&spec.src).map_err(|e| err(e.to_string()))?;
            let dst = self.topo.node(&spec.dst).map_err(|e| err(e.to_string()))?;
            if self.topo.kind(src) != NodeKind::Host || self.topo.kind(dst) != NodeKind::Host {
                return Err(err("src and dst must be hosts".into()));
            }
            let entries: Vec<(SourceKind, f64, Option<f64>, Option<u64>)> = match spec.kind {
                SourceKind::FlowList => {
                    let transport = spec.transport.unwrap_or(SourceKind::Aimd);
                    let mut arrivals: Vec<(f64, u64)> =
                        spec.flows.iter().map(|f| (f.start, f.size)).collect();
                    if let Some(p) = &spec.poisson {
                        arrivals.extend(traffic::poisson_arrivals(
                            &mut rng,
                            p.rate,
                            p.count,
                            p.mean_size,
                            p.start,
                        ));
                    }
                    arrivals
                        .into_iter()
                        .map(|(start, size)| (transport, start, None, Some(size)))
                        .collect()
                }
                kind => vec![(kind, spec.start, spec.stop, spec.size)],
            };
            for (kind, start, stop, size) in entries {
                let id = FlowId(self.sources.len() as u32);
                let tenant = TenantId(spec.tenant);
                let path = match &spec.path {
                    Some(names) => self.topo.named_path(names, src, dst),
                    None => self.topo.ecmp_path(src, dst, tenant, id.0 as u64, scenario.seed),
                }
                .map_err(|e| err(e.to_string()))?;
                let route = self.route_ports(&path);
                let rev_path: Vec<NodeId> = path.iter().rev().copied().collect();
                let reverse = self.route_ports(&rev_path);
                let start_t = SimTime::from_secs(start);
                let stop_t = stop.map(SimTime::from_secs);
                let (transport, starting_rate) = match kind {
                    SourceKind::Cbr => {
                        let rate = spec.rate.expect("validated");
                        (
                            Transport::Cbr(
                                Cbr::new(rate, start_t, stop_t, size, spec.host_buffer_packets)
                                    .with_jitter(spec.jitter, scenario.seed ^ ((id.0 as u64) << 32)),
                            ),
                            rate,
                        )
                    }
                    _ => {
                        let mut params = AimdParams::default();
                        if let Some(m) = spec.max_cwnd {
                            params.max_cwnd = m;
                        }
                        (
                            Transport::Aimd(Aimd::new(params, start_t, stop_t, size)),
                            spec.rate.unwrap_or(self.ports[route[0].0 as usize].capacity),
                        )
                    }
                };
                let key = FlowKey { tenant, src, dst };
                let host = self.hosts.get_mut(&src).expect("host");
                let unit_flow = host
                    .agent
                    .as_mut()
                    .map(|a| a.classify(key, starting_rate, SimTime::ZERO));
                host.sources.push(id);
                self.reverse_of.entry(key).or_insert_with(|| reverse.clone());
                self.sources.push(Source {
                    tenant,
                    src,
                    dst,
                    size,
                    start: start_t,
                    transport,
                    route,
                    reverse,
                    unit_flow,
                    delivered: 0,
                    done_sending: false,
                    finished: None,
                    rto_at: None,
                });
            }
        }
        self.flow_drops = vec![0; self.sources.len()];
        self.delivered_prev = vec![0; self.sources.len()];
        Ok(())
    }

    pub fn run(mut self) -> RunOutput {
        for i in 0..self.sources.len() {
            let s = &self.sources[i];
            self.queue.schedule(s.start, Event::HostWake(s.src));
        }
        if self.coordinator.is_some() {
            let hosts: Vec<NodeId> = self.hosts.keys().copied().collect();
            for &h in &hosts {
                self.queue.schedule(self.report_cycle, Event::Report(h));
            }
            for &h in &hosts {
                self.queue.schedule(self.rate_control_cycle, Event::RateControl(h));
            }
            let half = SimTime(self.rate_control_cycle.0 / 2);
            self.queue.schedule(self.report_cycle + half, Event::CoordinatorClose);
        }
        self.queue.schedule(self.sampling, Event::Sample);

        while let Some(t) = self.queue.peek_time() {
            if t > self.horizon {
                break;
            }
            let (now, event) = self.queue.pop().expect("peeked");
            self.stats.events += 1;
            self.handle(now, event);
        }

        for s in &self.sources {
            match &s.transport {
                Transport::Cbr(c) => self.stats.host_drops += c.host_drops,
                Transport::Aimd(a) => self.stats.aimd_losses += a.losses,
            }
        }
        self.stats.network_drops = self.ports.iter().map(|p| p.queue.counters().dropped_packets).sum();
        self.stats.competitive_flows = self
            .hosts
            .values()
            .filter_map(|h| h.agent.as_ref())
            .map(|a| a.flows().iter().filter(|f| f.competitive).count() as u64)
            .sum();
        if let Some(c) = &self.coordinator {
            self.log.coordinator = c.trace().to_vec();
        }
        info!(
            "run finished: {} events, {} network drops, {} signals",
            self.stats.events, self.stats.network_drops, self.stats.signals
        );
        RunOutput {
            flows: self
                .sources
                .iter()
                .map(|s| FlowInfo {
                    tenant: s.tenant.0,
                    start: s.start.as_secs(),
                    src: self.topo.name(s.src).to_string(),
                    dst: self.topo.name(s.dst).to_string(),
                })
                .collect(),
            link_capacity: self.ports.iter().map(|p| (p.name.clone(), p.capacity)).collect(),
            log: self.log,
            stats: self.stats,
        }
    }

    fn handle(&mut self, now: SimTime, event: Event) {
        match event {
            Event::TxDone(port) => self.on_tx_done(port, now),
            Event::Arrive(port, pkt) => self.on_arrive(port, pkt, now),
            Event::HostWake(host) => {
                let node = self.hosts.get_mut(&host).expect("host");
                if node.wake_at == Some(now) {
                    node.wake_at = None;
                }
                self.try_send(host, now);
            }
            Event::Rto(flow) => self.on_rto(flow, now),
            Event::RateControl(host) => {
                if let Some(agent) = self.hosts.get_mut(&host).and_then(|h| h.agent.as_mut()) {
                    for d in agent.rate_adaptation_cycle(now) {
                        trace!("host {host} flow {}: fs {:.3}, rate {:.0}", d.flow, d.fair_share, d.rate);
                    }
                }
                self.queue
                    .schedule(now + self.rate_control_cycle, Event::RateControl(host));
                self.try_send(host, now);
            }
            Event::Report(host) => {
                if let Some(agent) = self.hosts.get_mut(&host).and_then(|h| h.agent.as_mut()) {
                    if let Some(report) = agent.report_usage(now) {
                        self.queue
                            .schedule(now + self.control_delay, Event::CoordinatorReport(report));
                    }
                }
                self.queue.schedule(now + self.report_cycle, Event::Report(host));
            }
            Event::CoordinatorReport(report) => {
                if let Some(c) = self.coordinator.as_mut() {
                    c.on_report(report);
                }
            }
            Event::CoordinatorClose => {
                if let Some(c) = self.coordinator.as_mut() {
                    for update in c.close() {
                        self.queue.schedule(now + self.control_delay, Event::Target(update));
                    }
                }
                self.queue
                    .schedule(now + self.report_cycle, Event::CoordinatorClose);
            }
            Event::Target(update) => {
                if let Some(agent) = self.hosts.get_mut(&update.host).and_then(|h| h.agent.as_mut()) {
                    agent.apply_target(&update);
                }
            }
            Event::Sample => {
                self.sample(now);
                if now + self.sampling <= self.horizon {
                    self.queue.schedule(now + self.sampling, Event::Sample);
                }
            }
        }
    }

    fn schedule_wake(&mut self, host: NodeId, at: SimTime) {
        let node = self.hosts.get_mut(&host).expect("host");
        if node.wake_at.map_or(true, |w| at < w) {
            node.wake_at = Some(at);
            self.queue.schedule(at, Event::HostWake(host));
        }
    }

    fn try_send(&mut self, host: NodeId, now: SimTime) {
        let (n, rr) = {
            let node = &self.hosts[&host];
            (node.sources.len(), node.rr)
        };
        if n == 0 {
            return;
        }
        let mut earliest = SimTime::MAX;
        let mut progressed = true;
        let mut round = 0;
        while progressed {
            progressed = false;
            for j in 0..n {
                let idx = (rr + round + j) % n;
                let fid = self.hosts[&host].sources[idx];
                let s = &mut self.sources[fid.0 as usize];
                if s.done_sending {
                    continue;
                }
                let (seq, bytes) = match s.transport.poll(now) {
                    Readiness::Ready { seq, bytes } => (seq, bytes),
                    Readiness::WaitUntil(t) => {
                        earliest = earliest.min(t);
                        continue;
                    }
                    Readiness::Blocked => continue,
                    Readiness::Done => {
                        s.done_sending = true;
                        continue;
                    }
                };
                let nic = s.route[0];
                if self.ports[nic.0 as usize].queue.data_len() >= NIC_QUEUE_PACKETS {
                    continue;
                }
                if let (Some(uf), Some(agent)) = (
                    s.unit_flow,
                    self.hosts.get_mut(&host).and_then(|h| h.agent.as_mut()),
                ) {
                    match agent.admit(uf, bytes, now) {
                        SendDecision::Allow => agent.on_sent(uf, bytes),
                        SendDecision::WaitUntil(t) => {
                            earliest = earliest.min(t);
                            continue;
                        }
                    }
                }
                let s = &mut self.sources[fid.0 as usize];
                match &mut s.transport {
                    Transport::Cbr(c) => c.on_sent(),
                    Transport::Aimd(a) => a.on_sent(seq, now),
                }
                let pkt = Packet {
                    flow: fid,
                    tenant: s.tenant,
                    src: s.src,
                    dst: s.dst,
                    bytes,
                    kind: PacketKind::Data { seq },
                    ecn: false,
                    inter_tenant: false,
                    route: s.route.clone(),
                    hop: 0,
                    sent_at: now,
                };
                self.arm_rto(fid);
                self.enqueue(nic, pkt, now);
                progressed = true;
            }
            round += 1;
        }
        let node = self.hosts.get_mut(&host).expect("host");
        node.rr = (rr + 1) % n;
        if earliest < SimTime::MAX {
            self.schedule_wake(host, earliest);
        }
    }

    fn arm_rto(&mut self, fid: FlowId) {
        let s = &mut self.sources[fid.0 as usize];
        if s.rto_at.is_some() {
            return;
        }
        if let Transport::Aimd(a) = &s.transport {
            if let Some(deadline) = a.rto_deadline() {
                s.rto_at = Some(deadline);
                self.queue.schedule(deadline, Event::Rto(fid));
            }
        }
    }

    fn on_rto(&mut self, fid: FlowId, now: SimTime) {
        let s = &mut self.sources[fid.0 as usize];
        s.rto_at = None;
        let host = s.src;
        let fired = match &mut s.transport {
            Transport::Aimd(a) => a.on_rto(now),
            Transport::Cbr(_) => false,
        };
        if fired {
            debug!("flow {fid}: retransmission timeout at {now}");
            self.try_send(host, now);
        }
        self.arm_rto(fid);
    }

    fn enqueue(&mut self, port: PortId, pkt: Packet, now: SimTime) {
        let flow = pkt.flow;
        let data = pkt.is_data();
        let p = &mut self.ports[port.0 as usize];
        match p.queue.enqueue(pkt, now) {
            EnqueueOutcome::Dropped => {
                if data {
                    self.flow_drops[flow.0 as usize] += 1;
                }
            }
            EnqueueOutcome::Enqueued { .. } => self.start_tx(port, now),
        }
    }

    fn start_tx(&mut self, port: PortId, now: SimTime) {
        let p = &mut self.ports[port.0 as usize];
        if p.in_tx.is_some() {
            return;
        }
        let Some(pkt) = p.queue.dequeue() else {
            return;
        };
        let done = now + SimTime::transmission(pkt.bytes, p.capacity);
        p.in_tx = Some(pkt);
        self.queue.schedule(done, Event::TxDone(port));
    }

    fn on_tx_done(&mut self, port: PortId, now: SimTime) {
        let p = &mut self.ports[port.0 as usize];
        let pkt = p.in_tx.take().expect("transmitting");
        p.tx_bytes += pkt.bytes;
        let arrive = now + p.delay;
        let from = p.from;
        self.queue.schedule(arrive, Event::Arrive(port, pkt));
        self.start_tx(port, now);
        if self.hosts.contains_key(&from) {
            self.try_send(from, now);
        }
    }

    fn on_arrive(&mut self, port: PortId, mut pkt: Packet, now: SimTime) {
        let at = self.ports[port.0 as usize].to;
        pkt.hop += 1;
        if pkt.hop < pkt.route.len() {
            let next = pkt.route[pkt.hop];
            self.enqueue(next, pkt, now);
            return;
        }
        debug_assert!(self.hosts.contains_key(&at));
        match pkt.kind {
            PacketKind::Data { seq } => self.on_data(at, pkt, seq, now),
            PacketKind::Ack { seq, ecn_echo } => {
                let s = &mut self.sources[pkt.flow.0 as usize];
                let host = s.src;
                if let Transport::Aimd(a) = &mut s.transport {
                    a.on_ack(seq, ecn_echo, now);
                }
                self.try_send(host, now);
                self.arm_rto(pkt.flow);
            }
            PacketKind::Signal { key, inter_tenant } => {
                if let Some(agent) = self.hosts.get_mut(&at).and_then(|h| h.agent.as_mut()) {
                    agent.handle_congestion_signal(&key, inter_tenant);
                }
            }
        }
    }

    fn on_data(&mut self, at: NodeId, pkt: Packet, seq: u64, now: SimTime) {
        let fid = pkt.flow;
        let s = &mut self.sources[fid.0 as usize];
        s.delivered += pkt.bytes;
        if let (Some(size), None) = (s.size, s.finished) {
            if s.delivered >= size {
                s.finished = Some(now);
                self.log.fct.push(FctRecord {
                    flow: fid.0,
                    tenant: s.tenant.0,
                    size,
                    start: s.start.as_secs(),
                    finish: now.as_secs(),
                });
            }
        }
        if matches!(s.transport, Transport::Aimd(_)) {
            let ack = Packet {
                flow: fid,
                tenant: s.tenant,
                src: s.dst,
                dst: s.src,
                bytes: CONTROL_BYTES,
                kind: PacketKind::Ack {
                    seq,
                    ecn_echo: pkt.ecn,
                },
                ecn: false,
                inter_tenant: false,
                route: s.reverse.clone(),
                hop: 0,
                sent_at: now,
            };
            self.enqueue(ack.route[0], ack, now);
        }
        let key = FlowKey {
            tenant: pkt.tenant,
            src: pkt.src,
            dst: pkt.dst,
        };
        let verdict = self
            .hosts
            .get_mut(&at)
            .and_then(|h| h.scoreboard.as_mut())
            .and_then(|b| b.on_packet(key, pkt.bytes, pkt.ecn, pkt.inter_tenant, now));
        if let Some(v) = verdict {
            for (flow_key, inter_tenant) in v.flows {
                let Some(route) = self.reverse_of.get(&flow_key).cloned() else {
                    continue;
                };
                self.stats.signals += 1;
                let signal = Packet {
                    flow: fid,
                    tenant: flow_key.tenant,
                    src: at,
                    dst: flow_key.src,
                    bytes: CONTROL_BYTES,
                    kind: PacketKind::Signal {
                        key: flow_key,
                        inter_tenant,
                    },
                    ecn: false,
                    inter_tenant: false,
                    route,
                    hop: 0,
                    sent_at: now,
                };
                self.enqueue(signal.route[0], signal, now);
            }
        }
    }

    fn sample(&mut self, now: SimTime) {
        let t = now.as_secs();
        let dt = self.sampling.as_secs();
        let mut tenant_rate: BTreeMap<TenantId, (f64, u64, u64)> =
            self.tenants.iter().map(|&t| (t, (0.0, 0, 0))).collect();
        for (i, s) in self.sources.iter().enumerate() {
            let delta = s.delivered - self.delivered_prev[i];
            self.delivered_prev[i] = s.delivered;
            let bps = delta as f64 * 8.0 / dt;
            let entry = tenant_rate.entry(s.tenant).or_insert((0.0, 0, 0));
            entry.0 += bps;
            entry.1 += s.delivered;
            entry.2 += self.flow_drops[i];
            let started = s.start < now;
            let recently_done = s.finished.map_or(true, |f| f.as_secs() > t - dt);
            if started && recently_done {
                self.log.samples.push(Sample {
                    time: t,
                    scope: Scope::Flow,
                    id: i.to_string(),
                    throughput_bps: bps,
                    bytes: s.delivered,
                    drops: self.flow_drops[i],
                });
            }
        }
        for (tenant, (bps, bytes, drops)) in tenant_rate {
            self.log.samples.push(Sample {
                time: t,
                scope: Scope::Tenant,
                id: tenant.to_string(),
                throughput_bps: bps,
                bytes,
                drops,
            });
        }
        for p in &mut self.ports {
            let delta = p.tx_bytes - p.tx_bytes_prev;
            p.tx_bytes_prev = p.tx_bytes;
            let c = p.queue.counters();
            self.log.samples.push(Sample {
                time: t,
                scope: Scope::Link,
                id: p.name.clone(),
                throughput_bps: delta as f64 * 8.0 / dt,
                bytes: p.tx_bytes,
                drops: c.dropped_packets,
            });
            if self.topo.kind(p.from) == NodeKind::Switch {
                self.log.ports.push(PortSample {
                    time: t,
                    port: p.name.clone(),
                    enqueued_bytes: c.enqueued_bytes,
                    dropped_bytes: c.dropped_bytes,
                    marked_packets: c.marked_packets,
                    tagged_packets: c.tagged_packets,
                    counter_state: match p.queue.counter_state() {
                        None => "off".into(),
                        Some(CounterState::Competitive) => "competitive".into(),
                        Some(CounterState::NonCompetitive) => "nonCompetitive".into(),
                    },
                });
            }
        }
    }

}

/// Builds and runs a scenario.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Ok(Simulator::new(scenario)?.run())
}

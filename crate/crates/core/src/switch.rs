// SPDX-License-Identifier: Apache-2.0

//! Egress port model: byte-limited drop-tail FIFO with a linear ECN ramp, a
//! strict-priority control lane, and the optional tenant-counter.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ids::TenantId;
use crate::sim::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum CounterState {
    NonCompetitive,
    Competitive,
}

/// Three-register state machine that detects interleaved tenants.
#[derive(Debug, Clone, PartialEq)]
pub struct TenantCounter {
    last_tenant: Option<TenantId>,
    last_ts: Option<SimTime>,
    last_diff_ts: Option<SimTime>,
    threshold: SimTime,
    state: CounterState,
}

fn within(now: SimTime, then: Option<SimTime>, threshold: SimTime) -> bool {
    match then {
        Some(t) => now.saturating_sub(t) < threshold,
        None => false,
    }
}

impl TenantCounter {
    pub fn new(threshold: SimTime) -> Self {
        Self {
            last_tenant: None,
            last_ts: None,
            last_diff_ts: None,
            threshold,
            state: CounterState::NonCompetitive,
        }
    }

    pub fn state(&self) -> CounterState {
        self.state
    }

    /// Runs one packet through the pipeline and returns its tag.
    pub fn update(&mut self, tenant: TenantId, ts: SimTime) -> bool {
        // Stage 1: swap the last-tenant registers.
        let old_tenant = self.last_tenant.replace(tenant);
        let old_ts = self.last_ts.replace(ts);

        // Stage 2: remember when a different tenant was last seen; the value
        // read before the write flows on to stage 3.
        let ldts = self.last_diff_ts;
        if old_tenant.is_some_and(|t| t != tenant) && within(ts, old_ts, self.threshold) {
            self.last_diff_ts = old_ts;
        }

        // Stage 3.
        if within(ts, ldts, self.threshold) {
            self.state = CounterState::Competitive;
            true
        } else {
            self.state = CounterState::NonCompetitive;
            false
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EcnParams {
    pub min_bytes: u64,
    pub max_bytes: u64,
}

impl Default for EcnParams {
    fn default() -> Self {
        Self {
            min_bytes: 50_000,
            max_bytes: 200_000,
        }
    }
}

impl EcnParams {
    /// Marking probability for a packet arriving at queue depth `depth`.
    pub fn probability(&self, depth: u64) -> f64 {
        if depth >= self.max_bytes {
            1.0
        } else if depth < self.min_bytes {
            0.0
        } else {
            (depth - self.min_bytes) as f64 / (self.max_bytes - self.min_bytes) as f64
        }
    }
}

/// What a port needs to know about a packet.
pub trait Queued {
    fn bytes(&self) -> u64;
    fn tenant(&self) -> TenantId;
    fn is_priority(&self) -> bool;
    fn counts_for_tenant(&self) -> bool {
        !self.is_priority()
    }
    fn mark_ecn(&mut self);
    fn set_inter_tenant(&mut self);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Enqueued { marked: bool },
    Dropped,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PortCounters {
    pub enqueued_bytes: u64,
    pub dequeued_bytes: u64,
    pub dropped_bytes: u64,
    pub dropped_packets: u64,
    pub marked_packets: u64,
    pub tagged_packets: u64,
}

#[derive(Debug, Clone)]
pub struct PortQueue<P> {
    pub buffer_bytes: u64,
    pub ecn: Option<EcnParams>,
    pub counter: Option<TenantCounter>,
    data: VecDeque<P>,
    priority: VecDeque<P>,
    data_bytes: u64,
    rng: ChaCha8Rng,
    counters: PortCounters,
}

impl<P: Queued> PortQueue<P> {
    pub fn new(
        buffer_bytes: u64,
        ecn: Option<EcnParams>,
        counter: Option<TenantCounter>,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            buffer_bytes,
            ecn,
            counter,
            data: VecDeque::new(),
            priority: VecDeque::new(),
            data_bytes: 0,
            rng,
            counters: PortCounters::default(),
        }
    }

    pub fn data_bytes(&self) -> u64 {
        self.data_bytes
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty() && self.priority.is_empty()
    }

    pub fn counters(&self) -> &PortCounters {
        &self.counters
    }

    pub fn counter_state(&self) -> Option<CounterState> {
        self.counter.as_ref().map(|c| c.state())
    }

    /// The tenant counter sees every data arrival, including ones dropped.
    pub fn enqueue(&mut self, mut pkt: P, now: SimTime) -> EnqueueOutcome {
        let bytes = pkt.bytes();
        if pkt.is_priority() {
            self.counters.enqueued_bytes += bytes;
            self.priority.push_back(pkt);
            return EnqueueOutcome::Enqueued { marked: false };
        }
        let inter = match self.counter.as_mut() {
            Some(counter) if pkt.counts_for_tenant() => counter.update(pkt.tenant(), now),
            _ => false,
        };
        if self.data_bytes + bytes > self.buffer_bytes {
            self.counters.dropped_bytes += bytes;
            self.counters.dropped_packets += 1;
            return EnqueueOutcome::Dropped;
        }
        let marked = match self.ecn {
            Some(ecn) => {
                let p = ecn.probability(self.data_bytes);
                p >= 1.0 || (p > 0.0 && self.rng.gen::<f64>() < p)
            }
            None => false,
        };
        if inter && marked {
            pkt.set_inter_tenant();
            self.counters.tagged_packets += 1;
        }
        if marked {
            pkt.mark_ecn();
            self.counters.marked_packets += 1;
        }
        self.counters.enqueued_bytes += bytes;
        self.data_bytes += bytes;
        self.data.push_back(pkt);
        EnqueueOutcome::Enqueued { marked }
    }

    /// Control packets always leave first.
    pub fn dequeue(&mut self) -> Option<P> {
        let pkt = match self.priority.pop_front() {
            Some(p) => p,
            None => {
                let p = self.data.pop_front()?;
                self.data_bytes -= p.bytes();
                p
            }
        };
        self.counters.dequeued_bytes += pkt.bytes();
        Some(pkt)
    }
}

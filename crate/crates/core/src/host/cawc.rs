// SPDX-License-Identifier: Apache-2.0

//! Receiver-side congestion detector.
//!
//! The scoreboard keeps the packets received during the last `sliding_time`
//! and, every `check_period_packets` packets, compares the ECN-marked byte
//! ratio against a threshold.

use std::collections::{BTreeMap, VecDeque};

use crate::sim::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CawcParams {
    pub sliding_time: SimTime,
    pub threshold: f64,
    pub check_period_packets: u32,
}

impl Default for CawcParams {
    fn default() -> Self {
        Self {
            sliding_time: SimTime::from_micros(10),
            threshold: 0.2,
            check_period_packets: 50,
        }
    }
}

#[derive(Debug, Clone)]
struct Record<K> {
    at: SimTime,
    bytes: u64,
    ecn: bool,
    inter_tenant: bool,
    flow: K,
}

/// Outcome of a check that crossed the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionVerdict<K> {
    pub ratio: f64,
    /// Any packet in the window carried the switch's inter-tenant flag.
    pub inter_tenant: bool,
    /// Every flow with a packet in the window, each with its own inter-tenant
    /// flag.
    pub flows: Vec<(K, bool)>,
}

#[derive(Debug, Clone)]
pub struct CawcScoreboard<K> {
    params: CawcParams,
    window: VecDeque<Record<K>>,
    window_bytes: u64,
    marked_bytes: u64,
    since_check: u32,
}

impl<K: Ord + Clone> CawcScoreboard<K> {
    pub fn new(params: CawcParams) -> Self {
        Self {
            params,
            window: VecDeque::new(),
            window_bytes: 0,
            marked_bytes: 0,
            since_check: 0,
        }
    }

    fn evict(&mut self, now: SimTime) {
        let horizon = now.saturating_sub(self.params.sliding_time);
        while let Some(front) = self.window.front() {
            if front.at >= horizon {
                break;
            }
            self.window_bytes -= front.bytes;
            if front.ecn {
                self.marked_bytes -= front.bytes;
            }
            self.window.pop_front();
        }
    }

    /// ECN-marked byte fraction of the current window.
    pub fn ratio(&self) -> f64 {
        if self.window_bytes == 0 {
            0.0
        } else {
            self.marked_bytes as f64 / self.window_bytes as f64
        }
    }

    pub fn on_packet(
        &mut self,
        flow: K,
        bytes: u64,
        ecn: bool,
        inter_tenant: bool,
        now: SimTime,
    ) -> Option<CongestionVerdict<K>> {
        self.window.push_back(Record {
            at: now,
            bytes,
            ecn,
            inter_tenant,
            flow,
        });
        self.window_bytes += bytes;
        if ecn {
            self.marked_bytes += bytes;
        }
        self.evict(now);
        self.since_check += 1;
        if self.since_check < self.params.check_period_packets {
            return None;
        }
        self.since_check = 0;
        let ratio = self.ratio();
        if ratio <= self.params.threshold {
            return None;
        }
        let mut flows: BTreeMap<K, bool> = BTreeMap::new();
        for r in &self.window {
            *flows.entry(r.flow.clone()).or_insert(false) |= r.inter_tenant;
        }
        let any_inter = flows.values().any(|&f| f);
        Some(CongestionVerdict {
            ratio,
            inter_tenant: any_inter,
            flows: flows.into_iter().collect(),
        })
    }
}

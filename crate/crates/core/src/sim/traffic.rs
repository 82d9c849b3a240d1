// SPDX-License-Identifier: Apache-2.0

//! Traffic source models: constant bit rate and a window-based AIMD sender.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::sim::packet::MTU;
use crate::sim::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readiness {
    Ready { seq: u64, bytes: u64 },
    WaitUntil(SimTime),
    /// Waiting for acknowledgements.
    Blocked,
    Done,
}

fn packets_for(size: u64) -> u64 {
    size.div_ceil(MTU).max(1)
}

fn packet_bytes(size: Option<u64>, seq: u64) -> u64 {
    match size {
        Some(size) => MTU.min(size.saturating_sub(seq * MTU)).max(1),
        None => MTU,
    }
}

/// splitmix64 finalizer mapped to [0, 1).
fn unit_draw(x: u64) -> f64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Open-loop sender. Packets are generated at `rate` from `start`; those the
/// host cannot send are held in a buffer of `buffer_packets` and the overflow
/// is discarded.
#[derive(Debug, Clone)]
pub struct Cbr {
    pub rate: f64,
    start: SimTime,
    stop: Option<SimTime>,
    size: Option<u64>,
    buffer_packets: u64,
    interval: f64,
    jitter: f64,
    jitter_seed: u64,
    emitted: u64,
    pub sent: u64,
    pub host_drops: u64,
}

impl Cbr {
    pub fn new(
        rate: f64,
        start: SimTime,
        stop: Option<SimTime>,
        size: Option<u64>,
        buffer_packets: u64,
    ) -> Self {
        Self {
            rate,
            start,
            stop,
            size,
            buffer_packets: buffer_packets.max(1),
            interval: MTU as f64 * 8.0 / rate,
            jitter: 0.0,
            jitter_seed: 0,
            emitted: 0,
            sent: 0,
            host_drops: 0,
        }
    }

    fn total(&self) -> Option<u64> {
        self.size.map(packets_for)
    }

    /// Delays packet `n` by `fraction` of an interval times a uniform draw
    /// keyed on `(seed, n)`. Generation times stay increasing.
    pub fn with_jitter(mut self, fraction: f64, seed: u64) -> Self {
        self.jitter = fraction.clamp(0.0, 1.0 - 1e-9);
        self.jitter_seed = seed;
        self
    }

    fn gen_time(&self, n: u64) -> SimTime {
        let mut at = n as f64;
        if self.jitter > 0.0 {
            at += self.jitter * unit_draw(self.jitter_seed ^ n.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        }
        self.start + SimTime::from_secs(at * self.interval)
    }

    /// Packets generated by `now`.
    fn generated(&self, now: SimTime) -> u64 {
        if now < self.start {
            return 0;
        }
        let end = match self.stop {
            Some(stop) if stop < now => stop,
            _ => now,
        };
        if end < self.start {
            return 0;
        }
        let mut n = ((end - self.start).as_secs() / self.interval).floor() as u64 + 1;
        // Guard against rounding disagreement with gen_time.
        while n > 0 && self.gen_time(n - 1) > end {
            n -= 1;
        }
        while self.gen_time(n) <= end {
            n += 1;
        }
        match self.total() {
            Some(total) => n.min(total),
            None => n,
        }
    }

    pub fn poll(&mut self, now: SimTime) -> Readiness {
        let generated = self.generated(now);
        if generated > self.emitted + self.buffer_packets {
            let overflow = generated - self.emitted - self.buffer_packets;
            self.host_drops += overflow;
            self.emitted += overflow;
        }
        if generated > self.emitted {
            return Readiness::Ready {
                seq: self.emitted,
                bytes: packet_bytes(self.size, self.emitted),
            };
        }
        let next = self.gen_time(generated);
        let exhausted = self.total().is_some_and(|t| generated >= t)
            || self.stop.is_some_and(|stop| next > stop);
        if exhausted {
            Readiness::Done
        } else {
            Readiness::WaitUntil(next)
        }
    }

    pub fn on_sent(&mut self) {
        self.emitted += 1;
        self.sent += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AimdParams {
    pub max_cwnd: f64,
    pub rto: SimTime,
    pub initial_cwnd: f64,
}

impl Default for AimdParams {
    fn default() -> Self {
        Self {
            max_cwnd: 256.0,
            rto: SimTime::from_millis(10),
            initial_cwnd: 2.0,
        }
    }
}

/// TCP-like sender: slow start, additive increase of one packet per window,
/// and halving on an ECN echo or a loss at most once per window.
///
/// Routes are fixed and FIFO, so an acknowledgement proves every packet
/// transmitted before it that is still outstanding was dropped.
#[derive(Debug, Clone)]
pub struct Aimd {
    params: AimdParams,
    start: SimTime,
    stop: Option<SimTime>,
    size: Option<u64>,
    pub cwnd: f64,
    ssthresh: f64,
    next_seq: u64,
    next_tx: u64,
    /// Outstanding packets by transmission order: tx number -> seq.
    inflight: BTreeMap<u64, u64>,
    tx_of: BTreeMap<u64, u64>,
    retx: BTreeSet<u64>,
    recover_seq: u64,
    pub acked: u64,
    last_progress: SimTime,
    pub losses: u64,
    pub reductions: u64,
}

impl Aimd {
    pub fn new(params: AimdParams, start: SimTime, stop: Option<SimTime>, size: Option<u64>) -> Self {
        Self {
            params,
            start,
            stop,
            size,
            cwnd: params.initial_cwnd,
            ssthresh: f64::INFINITY,
            next_seq: 0,
            next_tx: 0,
            inflight: BTreeMap::new(),
            tx_of: BTreeMap::new(),
            retx: BTreeSet::new(),
            recover_seq: 0,
            acked: 0,
            last_progress: start,
            losses: 0,
            reductions: 0,
        }
    }

    fn total(&self) -> Option<u64> {
        self.size.map(packets_for)
    }

    pub fn inflight(&self) -> usize {
        self.inflight.len()
    }

    pub fn poll(&mut self, now: SimTime) -> Readiness {
        if now < self.start {
            return Readiness::WaitUntil(self.start);
        }
        if let Some(total) = self.total() {
            if self.acked >= total {
                return Readiness::Done;
            }
        } else if self.stop.is_some_and(|stop| now >= stop) {
            return Readiness::Done;
        }
        if self.inflight.len() as f64 >= self.cwnd.floor() {
            return Readiness::Blocked;
        }
        if let Some(&seq) = self.retx.first() {
            return Readiness::Ready {
                seq,
                bytes: packet_bytes(self.size, seq),
            };
        }
        if self.total().map_or(true, |t| self.next_seq < t) {
            return Readiness::Ready {
                seq: self.next_seq,
                bytes: packet_bytes(self.size, self.next_seq),
            };
        }
        Readiness::Blocked
    }

    pub fn on_sent(&mut self, seq: u64, now: SimTime) {
        if !self.retx.remove(&seq) {
            debug_assert_eq!(seq, self.next_seq);
            self.next_seq += 1;
        }
        if self.inflight.is_empty() {
            self.last_progress = now;
        }
        if let Some(old) = self.tx_of.insert(seq, self.next_tx) {
            self.inflight.remove(&old);
        }
        self.inflight.insert(self.next_tx, seq);
        self.next_tx += 1;
    }

    fn reduce(&mut self) {
        self.cwnd = (self.cwnd / 2.0).max(1.0);
        self.ssthresh = self.cwnd;
        self.recover_seq = self.next_seq;
        self.reductions += 1;
    }

    /// Processes an acknowledgement; returns false for stale or duplicate ones.
    pub fn on_ack(&mut self, seq: u64, ecn_echo: bool, now: SimTime) -> bool {
        let Some(tx) = self.tx_of.remove(&seq) else {
            return false;
        };
        self.inflight.remove(&tx);
        self.acked += 1;
        self.last_progress = now;
        let lost: Vec<(u64, u64)> = self.inflight.range(..tx).map(|(&t, &s)| (t, s)).collect();
        for &(t, s) in &lost {
            self.inflight.remove(&t);
            self.tx_of.remove(&s);
            self.retx.insert(s);
        }
        self.losses += lost.len() as u64;
        if ecn_echo || !lost.is_empty() {
            if seq >= self.recover_seq {
                self.reduce();
            }
        } else if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
        self.cwnd = self.cwnd.min(self.params.max_cwnd);
        true
    }

    /// Deadline of the retransmission timer, if armed.
    pub fn rto_deadline(&self) -> Option<SimTime> {
        (!self.inflight.is_empty()).then(|| self.last_progress + self.params.rto)
    }

    /// Fires the retransmission timer if it has expired.
    pub fn on_rto(&mut self, now: SimTime) -> bool {
        match self.rto_deadline() {
            Some(deadline) if now >= deadline => {
                let lost: Vec<u64> = self.inflight.values().copied().collect();
                self.losses += lost.len() as u64;
                self.retx.extend(lost);
                self.inflight.clear();
                self.tx_of.clear();
                self.ssthresh = (self.cwnd / 2.0).max(1.0);
                self.cwnd = 1.0;
                self.recover_seq = self.next_seq;
                self.last_progress = now;
                true
            }
            _ => false,
        }
    }
}

/// `count` Poisson arrivals at `rate` per second starting at `start`
/// seconds, with exponentially distributed sizes of mean `mean_size` bytes.
pub fn poisson_arrivals<R: Rng>(
    rng: &mut R,
    rate: f64,
    count: usize,
    mean_size: f64,
    start: f64,
) -> Vec<(f64, u64)> {
    let mut t = start;
    (0..count)
        .map(|_| {
            let u: f64 = 1.0 - rng.gen::<f64>();
            t += -u.ln() / rate;
            let v: f64 = 1.0 - rng.gen::<f64>();
            let size = (-v.ln() * mean_size).ceil().max(1.0) as u64;
            (t, size)
        })
        .collect()
}

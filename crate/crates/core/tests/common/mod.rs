// SPDX-License-Identifier: Apache-2.0

//! Generators and brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use pronet::bf::BandwidthFunction;
use pronet::ids::TenantId;
use pronet::sim::time::SimTime;
use rand::Rng;

pub const GBPS: f64 = 1e9;

/// Random non-decreasing BF with 1 to `max_segments` segments. Plateaus and
/// a nonzero value at share 0 occur with moderate probability.
pub fn random_bf(rng: &mut impl Rng, max_segments: usize, base: f64) -> BandwidthFunction {
    let segments = rng.gen_range(1..=max_segments);
    let mut s = 0.0;
    let mut b = base;
    let mut points = vec![(s, b)];
    for _ in 0..segments {
        s += rng.gen_range(0.05..5.0);
        if !rng.gen_bool(0.2) {
            b += rng.gen_range(0.01..10.0) * GBPS;
        }
        points.push((s, b));
    }
    BandwidthFunction::new(points).expect("generated BF is valid")
}

/// A (flows, tenant) aggregation instance whose tenant BF stays within what
/// the flows can carry together.
pub fn random_instance(rng: &mut impl Rng) -> (Vec<BandwidthFunction>, BandwidthFunction) {
    let n = rng.gen_range(1..=8);
    let flows: Vec<BandwidthFunction> = (0..n).map(|_| random_bf(rng, 4, 0.0)).collect();
    let total: f64 = flows.iter().map(|f| f.max_bandwidth()).sum();
    let guarantee = if rng.gen_bool(0.3) {
        rng.gen_range(0.0..0.3) * total
    } else {
        0.0
    };
    let shape = random_bf(rng, 5, guarantee);
    let cap = rng.gen_range(0.2..=1.0) * total;
    let scale = if shape.max_bandwidth() > 0.0 {
        (cap / shape.max_bandwidth()).min(1.0)
    } else {
        1.0
    };
    (flows, shape.scale_bandwidth(scale))
}

/// Midpoint Riemann sum with `n` cells.
pub fn riemann(f: &BandwidthFunction, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f.eval(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Random packet trace: non-decreasing timestamps and tenants drawn from a
/// small set, with runs of one tenant.
pub fn random_trace(rng: &mut impl Rng, th: SimTime) -> Vec<(TenantId, SimTime)> {
    let len = rng.gen_range(1..=200);
    let tenants = rng.gen_range(1..=4u32);
    let mut t = 0u64;
    let mut tenant = rng.gen_range(0..tenants);
    (0..len)
        .map(|_| {
            t += match rng.gen_range(0..4) {
                0 => 0,
                1 => rng.gen_range(0..th.0 / 4 + 1),
                2 => rng.gen_range(0..2 * th.0 + 1),
                _ => th.0,
            };
            if rng.gen_bool(0.3) {
                tenant = rng.gen_range(0..tenants);
            }
            (TenantId(tenant), SimTime(t))
        })
        .collect()
}

/// Packet `i` is tagged iff the packets before it that arrived less than
/// `th` earlier include at least two distinct tenants.
pub fn counter_oracle(trace: &[(TenantId, SimTime)], th: SimTime) -> Vec<bool> {
    (0..trace.len())
        .map(|i| {
            let ts = trace[i].1;
            let mut seen: Option<TenantId> = None;
            trace[..i]
                .iter()
                .filter(|(_, t)| ts.saturating_sub(*t) < th)
                .any(|(tenant, _)| match seen {
                    None => {
                        seen = Some(*tenant);
                        false
                    }
                    Some(s) => s != *tenant,
                })
        })
        .collect()
}

/// Random coordinator input array of 1 to 64 non-negative fair shares.
pub fn random_inputs(rng: &mut impl Rng) -> Vec<f64> {
    let n = rng.gen_range(1..=64);
    let scale = 10f64.powi(rng.gen_range(-3..=3));
    (0..n).map(|_| rng.gen_range(0.0..1.0) * scale).collect()
}

/// `|a - b|` within a few ulps of the magnitudes involved.
pub fn fp_close(a: f64, b: f64, terms: usize) -> bool {
    (a - b).abs() <= 4.0 * terms as f64 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

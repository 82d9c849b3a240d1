// SPDX-License-Identifier: Apache-2.0

use pronet::harness::figures;
use pronet::host::token_bucket::TokenBucket;
use pronet::scenario::Scenario;
use pronet::sim::metrics::Scope;
use pronet::sim::time::SimTime;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn token_bucket_never_exceeds_rate_plus_burst(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rate = r.gen_range(1e6..1e10);
        let burst = r.gen_range(1500.0..1e5);
        let mut tb = TokenBucket::new(rate, burst, SimTime::ZERO);
        let mut now = SimTime::ZERO;
        let mut sent = 0u64;
        for _ in 0..2000 {
            now = SimTime(now.0 + r.gen_range(0..20_000));
            let bytes = r.gen_range(64..=1500);
            if tb.try_send(bytes, now).unwrap() {
                sent += bytes;
            }
            prop_assert!(tb.tokens() <= burst + 1e-9);
            prop_assert!(tb.tokens() >= 0.0);
        }
        let bound = burst + rate * now.as_secs() / 8.0;
        prop_assert!(sent as f64 <= bound + 1e-6, "{sent} > {bound}");
    }

    #[test]
    fn ready_at_is_ready(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut tb = TokenBucket::new(r.gen_range(1e6..1e10), 3000.0, SimTime::ZERO);
        let mut now = SimTime::ZERO;
        for _ in 0..200 {
            let bytes = r.gen_range(64..=1500);
            let at = tb.ready_at(bytes, now);
            prop_assert!(at >= now);
            prop_assert!(tb.try_send(bytes, at).unwrap());
            now = at;
        }
    }
}

fn short(name: &str, duration: f64) -> Scenario {
    let (_, mut s) = figures::all()
        .into_iter()
        .find(|(_, s)| s.name == name)
        .expect("bundled scenario");
    s.duration = duration;
    s.expect.clear();
    s
}

#[test]
fn links_never_carry_more_than_capacity() {
    let s = short("fig7b", 0.5);
    let out = pronet::sim::run(&s).unwrap();
    let dt = out.log.sampling_interval;
    let mut seen = 0;
    for sample in out.log.samples.iter().filter(|x| x.scope == Scope::Link) {
        let cap = out.link_capacity[&sample.id];
        // One packet may straddle a sample boundary.
        assert!(sample.throughput_bps <= cap + 1500.0 * 8.0 / dt, "{sample:?}");
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn runs_are_deterministic_and_seed_dependent() {
    let s = short("fig9a", 0.3);
    let a = pronet::sim::run(&s).unwrap();
    let b = pronet::sim::run(&s).unwrap();
    assert_eq!(a.log.samples, b.log.samples);
    let mut other = s.clone();
    other.seed += 1;
    let c = pronet::sim::run(&other).unwrap();
    assert_ne!(a.log.samples, c.log.samples);
}

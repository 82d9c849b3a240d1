// SPDX-License-Identifier: Apache-2.0

mod common;

use common::{counter_oracle, random_trace};
use pronet::ids::TenantId;
use pronet::sim::time::SimTime;
use pronet::switch::{CounterState, TenantCounter};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn counter_matches_oracle(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let th = SimTime(r.gen_range(1..100_000));
        let trace = random_trace(&mut r, th);
        let want = counter_oracle(&trace, th);
        let mut counter = TenantCounter::new(th);
        for (i, &(tenant, ts)) in trace.iter().enumerate() {
            let tag = counter.update(tenant, ts);
            prop_assert_eq!(tag, want[i], "packet {} of {:?}", i, trace);
            let state = if tag { CounterState::Competitive } else { CounterState::NonCompetitive };
            prop_assert_eq!(counter.state(), state);
        }
    }
}

#[test]
fn single_tenant_never_tags() {
    let th = SimTime::from_millis(1);
    let mut c = TenantCounter::new(th);
    for i in 0..1000 {
        assert!(!c.update(TenantId(3), SimTime(i * 10)));
    }
    assert_eq!(c.state(), CounterState::NonCompetitive);
}

#[test]
fn interleaving_tags_until_timeout() {
    let th = SimTime(100);
    let mut c = TenantCounter::new(th);
    assert!(!c.update(TenantId(0), SimTime(0)));
    assert!(!c.update(TenantId(1), SimTime(10)));
    assert!(c.update(TenantId(1), SimTime(20)));
    assert!(c.update(TenantId(1), SimTime(99)));
    assert!(!c.update(TenantId(1), SimTime(100)));
}

use std::collections::BTreeMap;

use num::ToPrimitive;
use persist_core::chain::legal::check_trajectory;
use persist_core::chain::{advance, exact_step_distribution, polya_step, simulate, ChainKind, UrnState};
use persist_core::martin::exact_forward_law;
use persist_core::rng::stream;
use persist_core::{ChainSpec, ChainState, Trajectory};
use proptest::prelude::*;

fn spec_of(kind: ChainKind) -> ChainSpec {
    ChainSpec::new(kind, kind.is_er().then_some(0.3)).unwrap()
}

fn in_time_slice(state: &ChainState, t: u64) -> bool {
    match state {
        ChainState::Urn(u) => u.red + u.blue + 1 == t,
        ChainState::Records(r) => r.n() == t && 1 <= r.k() && r.k() <= t,
        ChainState::Graph(g) => g.n() as u64 == t,
        ChainState::Tree(x) => x.len() as u64 == t,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_are_time_graded_legal_and_round_trip(
        kind in proptest::sample::select(ChainKind::ALL.to_vec()),
        seed in any::<u64>(),
        horizon in 1usize..60,
    ) {
        let spec = spec_of(kind);
        let tr = simulate(&spec, horizon, seed).unwrap();
        prop_assert_eq!(tr.horizon(), horizon);
        let mut count = 0u64;
        for (k, s) in tr.states().enumerate() {
            prop_assert!(in_time_slice(&s, k as u64 + 1), "state {} of {:?}", k + 1, kind);
            count += 1;
        }
        prop_assert_eq!(count, horizon as u64);
        prop_assert!(check_trajectory(&tr).is_ok());
        let back = Trajectory::from_jsonl(&tr.to_jsonl()).unwrap();
        prop_assert_eq!(back.last(), tr.last());
        prop_assert_eq!(back.deltas(), tr.deltas());
    }

    #[test]
    fn er_memory_chain_remembers_everything(seed in any::<u64>(), horizon in 2usize..40) {
        let tr = simulate(&ChainSpec::er_memory(0.4).unwrap(), horizon, seed).unwrap();
        let states: Vec<_> = tr.states().map(|s| s.as_graph().unwrap().clone()).collect();
        for n in 0..states.len() {
            for m in 0..n {
                prop_assert_eq!(&states[n].induced_prefix(m + 1).unwrap(), &states[m]);
            }
        }
    }
}

#[test]
fn samplers_match_exact_one_step_laws() {
    const REPS: u64 = 100_000;
    for (ki, kind) in ChainKind::ALL.into_iter().enumerate() {
        let spec = spec_of(kind);
        let mut states = Vec::new();
        for t in 1..=3 {
            states.extend(exact_forward_law(&spec, &spec.start(), t).unwrap().into_keys());
        }
        for (si, x) in states.iter().enumerate() {
            let law = exact_step_distribution(&spec, x).unwrap();
            let mut rng = stream(0x57E9, (ki * 1000 + si) as u64);
            let mut counts: BTreeMap<ChainState, u64> = BTreeMap::new();
            for _ in 0..REPS {
                let mut s = x.clone();
                advance(&spec, &mut s, &mut rng).unwrap();
                *counts.entry(s).or_default() += 1;
            }
            for y in counts.keys() {
                assert!(law.contains_key(y), "{kind}: sampled {y:?} outside the exact support from {x:?}");
            }
            for (y, p) in &law {
                let p = p.to_f64().unwrap();
                let freq = counts.get(y).copied().unwrap_or(0) as f64 / REPS as f64;
                let sigma = (p * (1.0 - p) / REPS as f64).sqrt();
                assert!((freq - p).abs() <= 4.0 * sigma + 1e-12, "{kind} from {x:?} to {y:?}: {freq} vs {p}");
            }
        }
    }
}

#[test]
fn polya_proportion_settles() {
    let mut settled = 0;
    for seed in 0..100 {
        let mut rng = stream(0x9017A, seed);
        let mut s = UrnState::default();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        while s.time() < 20_000 {
            s = polya_step(s, &mut rng);
            if s.time() >= 10_000 {
                let p = (s.red + 1) as f64 / (s.time() + 1) as f64;
                lo = lo.min(p);
                hi = hi.max(p);
            }
        }
        if hi - lo < 0.05 {
            settled += 1;
        }
    }
    assert!(settled >= 95, "{settled} of 100 seeds settled");
}

use num::{BigRational, One, ToPrimitive, Zero};
use persist_core::chain::{entry_time, exact_step_distribution, simulate, RecordsState};
use persist_core::martin::{
    er_kernel, er_kernel_exact, exact_conditional_oracle, pm_kernel, records_kernel_ratio, records_kernel_ratio_exact,
    ua_extended_kernel, ua_extended_kernel_exact, ua_kernel, ua_kernel_exact,
};
use persist_core::{AdjacencyLimit, ChainSpec, ChainState, Graph, Theta};

fn oracle_kernel(spec: &ChainSpec, x: &ChainState, y: &ChainState) -> Option<BigRational> {
    let marginal = exact_conditional_oracle(spec, &spec.start(), y).unwrap();
    (!marginal.is_zero()).then(|| exact_conditional_oracle(spec, x, y).unwrap() / marginal)
}

#[test]
fn graph_kernels_are_transition_ratios() {
    let ua = ChainSpec::uniform_attachment();
    let relabel = ChainSpec::er_relabel(0.5).unwrap();
    let memory = ChainSpec::er_memory(0.3).unwrap();
    for n in 2..=4 {
        for gn in Graph::all_graphs(n).unwrap() {
            let y = ChainState::Graph(gn.clone());
            for m in 1..n {
                for gm in Graph::all_graphs(m).unwrap() {
                    let x = ChainState::Graph(gm.clone());
                    assert_eq!(ua_kernel_exact(&gm, &gn).unwrap(), oracle_kernel(&ua, &x, &y).unwrap());
                    let k = er_kernel_exact(&gm, &gn, relabel.theta().unwrap()).unwrap();
                    assert_eq!(k, oracle_kernel(&relabel, &x, &y).unwrap());
                    let pm = oracle_kernel(&memory, &x, &y).unwrap().to_f64().unwrap();
                    assert!((pm_kernel(&gm, &gn, memory.theta().unwrap()).unwrap() - pm).abs() <= 1e-9 * pm.max(1.0));
                }
            }
        }
    }
}

#[test]
fn records_kernel_is_a_transition_ratio() {
    let spec = ChainSpec::records();
    for n in 2..=8u64 {
        for l in 1..=n {
            let y = ChainState::Records(RecordsState::new(n, l).unwrap());
            for m in 1..n {
                for k in 1..=m {
                    let x = ChainState::Records(RecordsState::new(m, k).unwrap());
                    let oracle = oracle_kernel(&spec, &x, &y).unwrap();
                    assert_eq!(records_kernel_ratio_exact(m, k, n, l).unwrap(), oracle, "({m},{k}) -> ({n},{l})");
                }
            }
        }
    }
}

#[test]
fn every_kernel_is_one_at_the_start() {
    let theta = Theta::new(0.3).unwrap();
    let point = Graph::point();
    for n in 2..=5 {
        for g in Graph::all_graphs(n).unwrap() {
            assert!((ua_kernel(&point, &g).unwrap() - 1.0).abs() < 1e-12);
            assert!((er_kernel(&point, &g, theta).unwrap() - 1.0).abs() < 1e-12);
            assert!((pm_kernel(&point, &g, theta).unwrap() - 1.0).abs() < 1e-12);
        }
        for l in 1..=n as u64 {
            assert!((records_kernel_ratio(1, 1, n as u64, l).unwrap() - 1.0).abs() < 1e-12);
        }
    }
    assert_eq!(ua_extended_kernel_exact(&point, &AdjacencyLimit::all_ones(5).unwrap()).unwrap(), BigRational::one());
}

#[test]
fn extended_kernels_are_harmonic() {
    const WINDOW: usize = 4;
    let spec = ChainSpec::uniform_attachment();
    let pairs: Vec<(usize, usize)> = (2..=WINDOW).flat_map(|j| (1..j).map(move |i| (i, j))).collect();
    for mask in 0u32..1 << pairs.len() {
        let mut limit = AdjacencyLimit::all_ones(WINDOW).unwrap();
        for (b, &(i, j)) in pairs.iter().enumerate() {
            limit.set(i, j, mask >> b & 1 == 1).unwrap();
        }
        for n in 1..=3 {
            for g in Graph::all_graphs(n).unwrap() {
                let here = ua_extended_kernel_exact(&g, &limit).unwrap();
                let ahead: BigRational = exact_step_distribution(&spec, &ChainState::Graph(g.clone()))
                    .unwrap()
                    .iter()
                    .map(|(y, p)| p * ua_extended_kernel_exact(y.as_graph().unwrap(), &limit).unwrap())
                    .fold(BigRational::zero(), |a, b| a + b);
                assert_eq!(ahead, here, "mask {mask:b}, x = {g:?}");
            }
        }
    }
}

/// Once every pair inside `[m]` has settled, `K(G_m, X_n)` can only move
/// through the factors `(1 - m/n)^(-e(G_m))` and `((n - m)/(n + 1 - j))^(e_j)`,
/// so `|ln K(G_m, X_n) - ln K(G_m, M)| <= (e(G_m) + e(M)) ln(n / (n - m))`.
#[test]
fn ua_kernel_settles_once_the_window_freezes() {
    const M: usize = 3;
    const HORIZON: usize = 500;
    let spec = ChainSpec::uniform_attachment();
    for seed in 0..20 {
        let tr = simulate(&spec, HORIZON, seed).unwrap();
        let last = tr.last().as_graph().unwrap().clone();
        let mut freeze = M;
        for j in 2..=M {
            for i in 1..j {
                if let Some(t) = entry_time(&tr, i, j).unwrap() {
                    freeze = freeze.max(t);
                }
            }
        }
        let window = last.induced_prefix(M).unwrap();
        let bits = (2..=M).flat_map(|j| (1..j).map(move |i| (i, j))).map(|(i, j)| (i, j, window.has_edge(i, j)));
        let limit = AdjacencyLimit::from_bits(M, bits).unwrap();
        let own_prefix = tr.state_at(M).unwrap().as_graph().unwrap().clone();
        for gm in [Graph::empty(M), own_prefix] {
            let target = ua_extended_kernel(&gm, &limit).unwrap();
            assert!(target > 0.0);
            let bound_edges = (gm.edge_count() + window.edge_count()) as f64;
            for (k, s) in tr.states().enumerate().skip(freeze.max(M + 1) - 1) {
                let n = k + 1;
                let value = ua_kernel(&gm, s.as_graph().unwrap()).unwrap();
                let slack = bound_edges * (n as f64 / (n - M) as f64).ln() + 1e-12;
                assert!((value.ln() - target.ln()).abs() <= slack, "seed {seed}, n {n}: {value} vs {target}");
            }
        }
    }
}

use num::{BigRational, One, Zero};
use persist_core::graph::{embedding_count, sampling_density, sampling_density_exact, Graph, Permutation};
use persist_core::rng::stream;
use proptest::prelude::*;

fn graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |bits| {
            let pairs = (2..=n).flat_map(|j| (1..j).map(move |i| (i, j)));
            Graph::from_edges(n, pairs.zip(bits).filter(|(_, b)| *b).map(|(p, _)| p)).unwrap()
        })
    })
}

fn graph_and_perm(max_n: usize) -> impl Strategy<Value = (Graph, Permutation)> {
    graph(max_n).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), Just((1..=n).collect::<Vec<_>>()).prop_shuffle())
            .prop_map(|(g, image)| (g, Permutation::new(image).unwrap()))
    })
}

proptest! {
    #[test]
    fn permutation_preserves_edge_count_and_inverts((g, pi) in graph_and_perm(12)) {
        let h = g.permute(&pi).unwrap();
        prop_assert_eq!(h.edge_count(), g.edge_count());
        prop_assert_eq!(h.permute(&pi.inverse()).unwrap(), g);
    }

    #[test]
    fn edges_into_is_bounded_and_sums_to_edge_count(g in graph(40)) {
        let mut total = 0;
        for j in 2..=g.n() {
            let e = g.edges_into(j).unwrap();
            prop_assert!(e <= j - 1);
            total += e;
        }
        prop_assert_eq!(total, g.edge_count());
    }

    #[test]
    fn densities_lie_in_unit_interval(h in graph(4), g in graph(9)) {
        prop_assume!(h.n() <= g.n());
        let rho = sampling_density(&h, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&rho));
    }

    #[test]
    fn embedding_count_is_relabeling_invariant((g, pi) in graph_and_perm(9), h in graph(4)) {
        prop_assume!(h.n() <= g.n());
        prop_assert_eq!(embedding_count(&h, &g).unwrap(), embedding_count(&h, &g.permute(&pi).unwrap()).unwrap());
    }

    #[test]
    fn prefixes_compose(g in graph(12), a in 1usize..12, b in 1usize..12) {
        let (m, k) = (a.min(b).min(g.n()), a.max(b).min(g.n()));
        let direct = g.induced_prefix(m).unwrap();
        prop_assert_eq!(g.induced_prefix(k).unwrap().induced_prefix(m).unwrap(), direct);
    }
}

#[test]
fn densities_sum_to_one_exhaustively() {
    let mut rng = stream(31, 0);
    for v in 1..=6 {
        for _ in 0..4 {
            let g = Graph::from_edges(
                v,
                (2..=v).flat_map(|j| (1..j).map(move |i| (i, j))).filter(|_| rand::Rng::random_bool(&mut rng, 0.5)),
            )
            .unwrap();
            for m in 1..=3.min(v) {
                let total: BigRational = Graph::all_graphs(m)
                    .unwrap()
                    .map(|h| sampling_density_exact(&h, &g).unwrap())
                    .fold(BigRational::zero(), |a, b| a + b);
                assert_eq!(total, BigRational::one(), "v = {v}, m = {m}");
            }
        }
    }
}

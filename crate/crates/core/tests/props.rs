use d2color::engine::message::{Message, Role, TAG_BITS};
use d2color::engine::NodeRng;
use d2color::field::{colorspace_reduce, ColorspaceReducer};
use d2color::{oracle, Graph, SquareView};
use proptest::prelude::*;
use rand::RngCore;

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..24).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n)
            .prop_map(move |e| Graph::from_edges_dedup(n, e.into_iter().filter(|(a, b)| a != b)).unwrap())
    })
}

fn arb_perm(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #[test]
    fn adjacency_and_two_paths_are_symmetric(g in arb_graph()) {
        let sq = SquareView::new(&g);
        for u in 0..g.n() {
            for &v in g.neighbors(u) {
                prop_assert!(g.neighbors(v as usize).contains(&(u as u32)));
            }
            let d2 = g.d2_neighbors(u).unwrap();
            for v in 0..g.n() {
                if u == v {
                    continue;
                }
                prop_assert_eq!(d2.contains(&v), g.d2_neighbors(v).unwrap().contains(&u));
                let paths = g.neighbors(u).iter().filter(|&&x| g.has_edge(x as usize, v)).count();
                prop_assert_eq!(g.two_path_count(u, v).unwrap(), paths);
                prop_assert_eq!(g.two_path_count(v, u).unwrap(), paths);
                prop_assert_eq!(sq.path_multiplicity(u, v), paths);
            }
        }
    }

    #[test]
    fn greedy_is_always_valid((g, order) in arb_graph().prop_flat_map(|g| { let n = g.n(); (Just(g), arb_perm(n)) })) {
        let col = oracle::greedy_d2(&g, &order).unwrap();
        let rep = oracle::validate(&g, &col).unwrap();
        prop_assert!(rep.ok);
        prop_assert!(col.iter().all(|&c| c as usize <= g.delta_sq()));
        let half: Vec<_> = col.iter().enumerate().map(|(i, &c)| (i % 2 == 0).then_some(c)).collect();
        prop_assert!(oracle::partial_validate(&g, &half).unwrap().ok);
    }

    #[test]
    fn derandomized_seed_is_good(
        p in prop::sample::select(vec![101u64, 211, 401, 1009]),
        lists in prop::collection::vec(prop::collection::btree_set(0u32..2000, 1..4), 1..6),
    ) {
        let red = ColorspaceReducer::for_palette(p, 2000).unwrap();
        let lists: Vec<Vec<u32>> = lists.into_iter().map(|s| s.into_iter().collect()).collect();
        match colorspace_reduce(&red, &lists) {
            Ok((e, walk)) => {
                let good = oracle::brute_force_good_seeds(&lists, p, red.d).unwrap();
                prop_assert!(good.binary_search(&e).is_ok());
                for w in walk.windows(2) {
                    prop_assert!(w[1].before == w[0].after);
                }
                prop_assert!(walk.iter().all(|s| s.after <= s.before));
                for l in &lists {
                    prop_assert!(red.injective_on(l, e));
                }
            }
            Err(_) => {
                let pairs: u64 = lists.iter().map(|l| (l.len() * (l.len() - 1) / 2) as u64).sum();
                prop_assert!(2 * pairs * red.d as u64 >= p);
            }
        }
    }

    #[test]
    fn message_bits_are_tag_plus_fields(widths in prop::collection::vec(1u8..=64, 0..12)) {
        let mut m = Message::new(3);
        for &w in &widths {
            m.push(Role::Value, (1u64 << (w - 1)) - 1 + (1u64 << (w - 1)), w);
        }
        prop_assert_eq!(m.total_bits(), TAG_BITS + widths.iter().map(|&w| w as u32).sum::<u32>());
    }

    #[test]
    fn node_streams_are_reproducible(seed: u64, node in 0usize..10_000, round in 0u64..100_000, salt: u64) {
        let mut a = NodeRng::new(seed, node, round, salt);
        let mut b = NodeRng::new(seed, node, round, salt);
        for _ in 0..8 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn both_pipelines_color_validly(g in arb_graph(), seed: u64) {
        let cfg = d2color::AlgoConfig::default();
        let a = d2color::log::d2_color(&g, &cfg, seed).unwrap();
        prop_assert!(oracle::validate(&g, &a.coloring).unwrap().ok);
        let b = d2color::sublog::d2_color_sublog(&g, &cfg, seed).unwrap();
        prop_assert!(oracle::validate(&g, &b.coloring).unwrap().ok);
    }
}

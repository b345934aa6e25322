mod common;

use d2color::engine::EngineConfig;
use d2color::field::ColorspaceReducer;
use d2color::oracle;
use d2color::state::Sim;
use d2color::sublog::{self, prep, shatter, ClassStats, Regime, HIGH, LOW};
use d2color::{AlgoConfig, Graph};

/// b = 0 is the hub; a = 1, c = 2 are live, x = 3, y = 4 colored.
fn hub() -> Graph {
    Graph::new(5, [(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap()
}

#[test]
fn post_shatter_with_one_digit_walk() {
    let g = hub();
    let red = ColorspaceReducer::for_palette(7, g.delta_sq() as u64 + 1).unwrap();
    assert_eq!((red.p, red.d), (7, 1));
    let mut sim = Sim::new(&g, EngineConfig::default(), 3, 2);
    sim.hello().unwrap();
    sim.local(|_, s, _, w| match s.id {
        0 => s.adopt(16, w),
        3 => s.adopt(5, w),
        4 => s.adopt(6, w),
        _ => {}
    });
    sim.drain(1).unwrap();
    sim.local(|_, s, _, _| match s.id {
        1 => s.palette = Some(vec![0, 8]),
        2 => s.palette = Some(vec![8, 15]),
        _ => {}
    });
    prep::live_d2_flood(&mut sim).unwrap();
    let lists = vec![vec![0, 8], vec![8, 15]];
    let good = oracle::brute_force_good_seeds(&lists, 7, 1).unwrap();
    let cfg = AlgoConfig::default();
    let mut cs = ClassStats { class: LOW, nodes: 2, ..Default::default() };
    sublog::shatter_and_post(&mut sim, &cfg, &red, 0, &mut cs).unwrap();
    assert_eq!(cs.after_shatter, 2);
    assert_eq!(cs.components, vec![2]);
    assert_eq!(cs.steiner, 1);
    assert_eq!(cs.non_injective, 0);
    assert_eq!(cs.clusters.len(), 1);
    let cl = &cs.clusters[0];
    assert_eq!(cl.d, 1);
    assert!(good.contains(&cl.seed), "seed {} not in {good:?}", cl.seed);
    assert!(!cl.walk.is_empty());
    let coloring: Vec<_> = sim.coloring().into_iter().map(Option::unwrap).collect();
    assert!(oracle::validate(&g, &coloring).unwrap().ok);
    assert!([0, 8].contains(&coloring[1]) && [8, 15].contains(&coloring[2]));
}

#[test]
fn lone_node_forms_a_single_cluster() {
    let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
    let red = ColorspaceReducer::for_palette(65521, g.delta_sq() as u64 + 1).unwrap();
    let mut sim = Sim::new(&g, EngineConfig::default(), 0, 2);
    sim.hello().unwrap();
    sim.local(|_, s, _, w| match s.id {
        0 => s.adopt(0, w),
        1 => s.adopt(1, w),
        _ => {}
    });
    sim.drain(1).unwrap();
    sim.local(|_, s, _, _| {
        if s.id == 2 {
            s.palette = Some(vec![2, 3]);
        }
    });
    prep::live_d2_flood(&mut sim).unwrap();
    let mut cs = ClassStats { class: LOW, nodes: 1, ..Default::default() };
    sublog::shatter_and_post(&mut sim, &AlgoConfig::default(), &red, 0, &mut cs).unwrap();
    assert_eq!(cs.steiner, 0);
    assert_eq!(cs.max_cluster, 1);
    assert_eq!(cs.clusters[0].leader, 2);
    assert!(matches!(sim.st[2].color, Some(2 | 3)));
}

fn torus4(side: usize) -> Graph {
    let n = side.pow(4);
    let mut e = Vec::new();
    for v in 0..n {
        let mut stride = 1;
        for _ in 0..4 {
            let digit = (v / stride) % side;
            let u = v - digit * stride + ((digit + 1) % side) * stride;
            e.push((v, u));
            stride *= side;
        }
    }
    Graph::new(n, e).unwrap()
}

#[test]
fn small_branch_on_a_four_dimensional_torus() {
    let g = torus4(8);
    assert_eq!((g.n(), g.max_degree()), (4096, 8));
    let cfg = AlgoConfig::default();
    assert_eq!(sublog::regime(&g, &cfg), Regime::Small);
    let out = sublog::d2_color_sublog(&g, &cfg, 5).unwrap();
    assert_eq!(out.stats.branch, "small");
    assert!(oracle::validate(&g, &out.coloring).unwrap().ok);
    assert!(out.coloring.iter().all(|&c| c <= 64));
}

#[test]
fn intermediate_branch_is_valid_and_classes_are_disjoint() {
    let g = Graph::new(400, (0..400usize).flat_map(|i| (1..=15).map(move |k| (i, (i + k * 7) % 400)))).unwrap();
    let cfg = AlgoConfig::default();
    let out = sublog::d2_color_sublog(&g, &cfg, 2).unwrap();
    assert!(oracle::validate(&g, &out.coloring).unwrap().ok);
    let sl = out.stats.sublog.unwrap();
    assert_eq!(sl.regime, Regime::Intermediate);
    let mut seen = std::collections::BTreeSet::new();
    for (v, _, _) in &sl.split {
        assert!(seen.insert(*v));
    }
    let total: usize = sl.classes.iter().map(|c| c.nodes).sum();
    assert!(total <= sl.split.len());
    let class: std::collections::BTreeMap<u32, u8> = sl.split.iter().map(|&(v, _, c)| (v, c)).collect();
    for r in &out.transcript.records {
        let phase_class = if r.phase.contains("LOW") {
            LOW
        } else if r.phase.contains("HIGH") {
            HIGH
        } else {
            continue;
        };
        for (v, _) in &r.adoptions {
            assert_eq!(class[v], phase_class, "node {v} adopted in {}", r.phase);
        }
    }
}

#[test]
fn forced_post_shattering_colors_gnp() {
    let mut e = Vec::new();
    let mut x: u64 = 12345;
    for u in 0..512usize {
        for v in u + 1..512 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (x >> 33) % 512 < 12 {
                e.push((u, v));
            }
        }
    }
    let g = Graph::new(512, e).unwrap();
    let cfg = AlgoConfig { shatter_iters: 0, reduce_log_delta_mult: 0, multitrial_mult: 0, ..Default::default() };
    for seed in 0..3 {
        let out = sublog::d2_color_sublog(&g, &cfg, seed).unwrap();
        assert!(oracle::validate(&g, &out.coloring).unwrap().ok);
        let sl = out.stats.sublog.unwrap();
        for c in &sl.classes {
            assert_eq!(c.non_injective, 0);
            for cl in &c.clusters {
                for w in cl.walk.windows(2) {
                    assert!(w[1].after <= w[0].after);
                }
            }
        }
    }
}

fn colored_except<'g>(g: &'g Graph, live: &[u32], seed: u64) -> Sim<'g> {
    let mut sim = Sim::new(g, EngineConfig::default(), seed, 4);
    sim.hello().unwrap();
    let greedy = oracle::greedy_d2(g, &(0..g.n()).collect::<Vec<_>>()).unwrap();
    sim.local(|ctx, s, _, w| {
        if !live.contains(&s.id) {
            s.adopt(greedy[ctx.node], w);
        }
    });
    sim.drain(1).unwrap();
    sim
}

#[test]
fn hashes_rarely_collide_when_the_range_is_large() {
    let g = common::gnp(200, 0.1, 7);
    let mut distinct = 0;
    for seed in 0..20 {
        let mut sim = Sim::new(&g, EngineConfig::default(), seed, 4);
        sim.hello().unwrap();
        let h = prep::hash_node_ids(&mut sim, 4).unwrap();
        let set: std::collections::BTreeSet<u64> = h.iter().copied().collect();
        distinct += usize::from(set.len() == g.n());
        for v in 0..g.n() {
            for (p, &u) in g.neighbors(v).iter().enumerate() {
                assert_eq!(sim.st[v].nbr[p].key, h[u as usize]);
            }
        }
    }
    assert!(distinct >= 19);
    let one = Graph::new(1, []).unwrap();
    let mut sim = Sim::new(&one, EngineConfig::default(), 0, 4);
    assert_eq!(prep::hash_node_ids(&mut sim, 4).unwrap().len(), 1);
}

#[test]
fn multitrial_colors_a_node_without_live_neighbors() {
    let g = common::gnp(100, 0.06, 2);
    for seed in 0..100 {
        let mut sim = colored_except(&g, &[5], seed);
        sim.local(|_, s, _, _| {
            if s.id == 5 {
                s.palette = None;
            }
        });
        prep::multi_trial_sparse(&mut sim, 1).unwrap();
        assert!(sim.st[5].color.is_some(), "seed {seed}");
    }
    let col: Vec<_> = colored_except(&g, &[5], 0).coloring();
    let mut sim = colored_except(&g, &[5], 0);
    prep::multi_trial_sparse(&mut sim, 1).unwrap();
    let c = sim.st[5].color.unwrap();
    assert!(oracle::exact_palette(&g, &col, 5).unwrap().contains(&c));
}

#[test]
fn split_classes() {
    let g = common::star(64);
    let mut high = 0;
    for seed in 0..20 {
        let mut sim = colored_except(&g, &(1..=64).collect::<Vec<_>>(), seed);
        prep::split_low_high(&mut sim, 2).unwrap();
        high += sim.st[1..].iter().filter(|s| s.class == HIGH).count();
    }
    assert!(high >= 20 * 64 * 99 / 100);
    let lone = common::path(3);
    let mut s2 = colored_except(&lone, &[2], 0);
    prep::split_low_high(&mut s2, 2).unwrap();
    assert_eq!(s2.st[2].class, LOW);
    let mut done = colored_except(&g, &[], 0);
    prep::split_low_high(&mut done, 2).unwrap();
    assert!(done.st.iter().all(|s| s.class == 0));
}

#[test]
fn steiner_on_p3_joins_the_middle() {
    let g = common::path(3);
    let mut sim = colored_except(&g, &[0, 2], 0);
    assert_eq!(shatter::add_steiner(&mut sim).unwrap(), 1);
    assert!(sim.st[1].sub.steiner);
    assert_eq!(shatter::k_components(&sim), vec![vec![0, 1, 2]]);
}

#[test]
fn steiner_picks_one_of_five_common_neighbors() {
    // 0 and 1 share middles 2..=6.
    let g = Graph::new(7, (2..7usize).flat_map(|m| [(0, m), (1, m)])).unwrap();
    let mut sim = colored_except(&g, &[0, 1], 0);
    assert_eq!(shatter::add_steiner(&mut sim).unwrap(), 1);
    let picked: Vec<usize> = (2..7).filter(|&m| sim.st[m].sub.steiner).collect();
    assert_eq!(picked, vec![2]);
}

#[test]
fn local_ids_are_unique_per_component() {
    let g = common::polarity(13);
    let params = d2color::acd::AcdParams::unchecked(num_rational::Ratio::new(1, 6), 16);
    let mut sim = Sim::new(&g, EngineConfig::default(), 1, 4);
    sim.hello().unwrap();
    let acd = d2color::acd::build_acd(&mut sim, &params, None).unwrap();
    prep::assign_local_ids(&mut sim).unwrap();
    let cap = 2 * g.delta_sq() as u32;
    for c in &acd.components {
        let ids: Vec<u32> = c.extended.iter().filter_map(|&v| sim.st[v].local_id).collect();
        let set: std::collections::BTreeSet<u32> = ids.iter().copied().collect();
        assert_eq!(set.len(), ids.len());
        assert_eq!(ids.len(), c.extended.len().min(cap as usize));
        assert!(ids.iter().all(|&i| i < cap));
    }
}

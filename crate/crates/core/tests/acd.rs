mod common;

use std::collections::BTreeSet;

use common::{cycle, gnp, path, polarity, star};
use d2color::acd::{aggregate_over_component, decompose, exact_buddies, AcdComponent, AcdMode, AcdParams, AcdResult, AggOp};
use d2color::engine::EngineConfig;
use d2color::state::{Sim, TreeLink};
use d2color::{oracle, Graph};
use num_rational::Ratio;

fn loose() -> AcdParams {
    AcdParams::unchecked(Ratio::new(1, 6), 16)
}

#[test]
fn no_buddies_in_sparse_small_graphs() {
    let eps = Ratio::new(1, 60);
    for g in [path(2), cycle(5), star(4)] {
        let b = exact_buddies(&g, eps);
        assert!(b.pairs.iter().all(Vec::is_empty));
        assert!(b.popular.iter().all(|p| !p));
    }
}

/// Cores built sequentially from exact verdicts: components of the
/// 2eps-buddy graph on 2eps-popular nodes that hold an eps/2-popular node.
fn exact_cores(g: &Graph, eps: Ratio<i64>) -> BTreeSet<Vec<usize>> {
    let wide = exact_buddies(g, eps * 2);
    let narrow = exact_buddies(g, eps / 2);
    let n = g.n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for pairs in &wide.pairs {
        for &(a, b) in pairs {
            if wide.popular[a] && wide.popular[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in (0..n).filter(|&v| wide.popular[v]) {
        groups.entry(find(&mut parent, v)).or_default().push(v);
    }
    groups.into_values().filter(|c| c.iter().any(|&v| narrow.popular[v])).collect()
}

#[test]
fn exact_mode_matches_sequential_construction() {
    let g = polarity(13);
    let p = loose();
    let want = exact_cores(&g, p.epsilon);
    assert_eq!(want.len(), 1);
    for seed in 0..3 {
        let (acd, _) = decompose(&g, &p, EngineConfig::default(), seed, Some(AcdMode::Exact)).unwrap();
        let got: BTreeSet<Vec<usize>> = acd.components.iter().map(|c| c.core.clone()).collect();
        assert_eq!(got, want);
        assert!(oracle::verify_acd(&g, &acd, p.epsilon).unwrap().ok());
    }
}

#[test]
fn exact_mode_on_a_small_sparse_graph_is_all_sparse() {
    let g = cycle(12);
    let p = AcdParams::default();
    assert!(p.exact_mode(g.delta_sq(), 4));
    let (acd, _) = decompose(&g, &p, EngineConfig::default(), 0, None).unwrap();
    assert_eq!(acd.v_star, (0..12).collect::<Vec<_>>());
    assert!(acd.components.is_empty());
    assert!(oracle::verify_acd(&g, &acd, p.epsilon).unwrap().ok());
}

#[test]
fn sampled_polarity_forms_one_component() {
    let g = polarity(13);
    let p = loose();
    let mut good = 0;
    for seed in 0..20 {
        let (acd, _) = decompose(&g, &p, EngineConfig::default(), seed, Some(AcdMode::Sampled)).unwrap();
        let one = acd.components.len() == 1 && acd.v_star.is_empty() && acd.components[0].extended.len() == g.n();
        if one && oracle::verify_acd(&g, &acd, p.epsilon).unwrap().ok() {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn sparse_random_graph_is_all_v_star() {
    let g = gnp(300, 0.03, 4);
    let p = AcdParams::default();
    let mut good = 0;
    for seed in 0..20 {
        let (acd, _) = decompose(&g, &p, EngineConfig::default(), seed, None).unwrap();
        if acd.components.is_empty() && acd.v_star.len() == g.n() {
            good += 1;
        }
    }
    assert!(good >= 19, "{good}/20");
}

#[test]
fn moving_a_dense_node_to_v_star_breaks_sparsity() {
    let g = cycle(5);
    let acd = AcdResult {
        v_star: vec![0],
        components: vec![AcdComponent {
            id: 1,
            leader: 1,
            core: vec![1, 2, 3, 4],
            extended: vec![1, 2, 3, 4],
            tree: vec![(1, None), (2, Some(1)), (3, Some(2)), (4, Some(3))],
        }],
    };
    let rep = oracle::verify_acd(&g, &acd, Ratio::new(1, 60)).unwrap();
    let p1 = &rep.checks[0];
    assert!(p1.property.starts_with("1:"));
    assert!(!p1.passed);
    assert!(p1.witness.as_deref().unwrap().contains("node 0"));
}

/// P5 as one component rooted at node 0.
fn path_component(g: &Graph) -> Sim<'_> {
    let mut sim = Sim::new(g, EngineConfig::default(), 0, 4);
    sim.hello().unwrap();
    for v in 0..5 {
        let s = &mut sim.st[v];
        s.comp = Some(0);
        let parent = (v > 0).then(|| g.port_of(v, v - 1).unwrap() as u32);
        let children = (v < 4).then(|| g.port_of(v, v + 1).unwrap() as u32).into_iter().collect();
        s.trees.push(TreeLink { comp: 0, parent, children, depth: v as u8, ..Default::default() });
    }
    sim
}

#[test]
fn aggregation_over_a_component() {
    let g = path(5);
    let mut sim = path_component(&g);
    let sum = aggregate_over_component(&mut sim, |s| Some(s.id as u64 + 1), AggOp::Sum, 8).unwrap();
    assert_eq!(sum, vec![Some(15); 5]);
    let count = aggregate_over_component(&mut sim, |_| Some(0), AggOp::Count, 8).unwrap();
    assert_eq!(count, vec![Some(0); 5]);
    let min = aggregate_over_component(&mut sim, |s| Some(s.id as u64), AggOp::Min, 8).unwrap();
    assert_eq!(min, vec![Some(0); 5]);
    assert_eq!(sim.net.transcript().rounds_in(""), 1 + 3 * 8);
}

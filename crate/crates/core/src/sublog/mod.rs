//! The sublogarithmic pipeline: hashed decomposition, sparse MultiTrial,
//! degree reduction, LOW/HIGH split, then per class parallel Reduce,
//! palette learning, shattering and deterministic postshattering.

pub mod post;
pub mod prep;
pub mod shatter;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::acd::{build_acd, AcdResult};
use crate::config::{AlgoConfig, ConfigError};
use crate::engine::message::log2_ceil;
use crate::field::ColorspaceReducer;
use crate::graph::Graph;
use crate::log::{learn_palette, oneshot, reduce_phase, reduce_phase_with, LearnOptions, ReduceOpts};
use crate::run::{D2Error, RunOutcome, RunStats};
use crate::state::Sim;
use crate::trial::informed_trial;
use crate::{oracle, Color};

pub use post::{ClusterReport, ClusterState};
pub use prep::{HIGH, LOW};

#[derive(Clone, Debug, Default)]
pub struct SubScratch {
    pub child_cnt: Vec<(u32, u32, u64)>,
    pub tries: Vec<Color>,
    pub batches: Vec<(u32, Vec<Color>)>,
    pub rejected: Vec<Color>,
    pub live_d2: BTreeSet<u32>,
    pub values: BTreeSet<u64>,
    pub lv_in: Vec<(u32, u64)>,
    pub high: bool,
    pub value: Option<u64>,
    pub in_u: bool,
    pub steiner: bool,
    /// `(port, id)` of eligible neighbors.
    pub live_ports: Vec<(u32, u32)>,
    /// Non-adjacent live d2-neighbor id to `(middle id, port)`.
    pub via: BTreeMap<u32, (u32, u32)>,
    pub nbr_k: Vec<u8>,
    pub k_ports: Vec<u32>,
    pub cl: ClusterState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Small,
    Intermediate,
    Large,
}

/// One LOW or HIGH pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: u8,
    pub nodes: usize,
    pub after_reduce: usize,
    /// Largest live d2-degree among the class after Reduce.
    pub max_degree_after_reduce: usize,
    pub after_shatter: usize,
    /// Component sizes of `G²[live]` after shattering, largest first.
    pub components: Vec<usize>,
    pub steiner: usize,
    pub max_cluster: usize,
    pub clusters: Vec<ClusterReport>,
    /// Members whose list images collide under the chosen seed.
    pub non_injective: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SublogStats {
    pub regime: Regime,
    /// Node hashes, when hashing ran.
    pub hashes: Vec<u64>,
    pub vstar_live_after_multitrial: Option<usize>,
    /// `(node, live d2-degree, class)` for every node live at the split.
    pub split: Vec<(u32, usize, u8)>,
    pub reducer: Option<ColorspaceReducer>,
    pub classes: Vec<ClassStats>,
}

pub fn regime(g: &Graph, cfg: &AlgoConfig) -> Regime {
    let n = g.n().max(2) as f64;
    let delta = g.max_degree();
    let l = log2_ceil(g.n()) as usize;
    if delta as f64 >= n.powf(cfg.large_delta_exp) {
        Regime::Large
    } else if delta <= cfg.small_delta_mult as usize * l {
        Regime::Small
    } else {
        Regime::Intermediate
    }
}

fn note_live(sim: &Sim<'_>, stats: &mut RunStats) {
    stats.live_trajectory.push((sim.net.phase().to_string(), sim.live_count()));
}

/// Caps every eligible palette at `D + 1` random entries, `D` the live
/// d2-degree from `sub.live_d2`.
fn cap_palettes(sim: &mut Sim<'_>) {
    sim.local(|_, s, rng, _| {
        if !s.eligible() {
            return;
        }
        let m = s.sub.live_d2.len() + 1;
        if let Some(pal) = s.palette.as_mut() {
            if pal.len() > m {
                pal.shuffle(rng);
                pal.truncate(m);
                pal.sort_unstable();
            }
        }
    });
}

fn freeze_except(sim: &mut Sim<'_>, class: Option<u8>) {
    sim.local(|_, s, _, _| {
        s.frozen = match class {
            Some(c) => s.live() && s.class != c,
            None => false,
        };
    });
}

/// Shattering and postshattering for the eligible nodes, whose palettes
/// are already capped.
pub fn shatter_and_post(
    sim: &mut Sim<'_>,
    cfg: &AlgoConfig,
    red: &ColorspaceReducer,
    iters: u64,
    cs: &mut ClassStats,
) -> Result<(), D2Error> {
    let name = if cs.class == HIGH { "HIGH" } else { "LOW" };
    sim.phase(format!("SHATTER({name})"));
    shatter::shatter(sim, iters)?;
    cs.after_shatter = sim.eligible_count();
    let mask: Vec<bool> = sim.st.iter().map(|s| s.eligible()).collect();
    cs.components = shatter::square_components(sim.g, &mask);
    if cs.after_shatter == 0 {
        return Ok(());
    }
    sim.phase(format!("POST({name})"));
    cs.steiner = shatter::add_steiner(sim)?;
    post::form_clusters(sim, red)?;
    cs.max_cluster = post::max_cluster(sim);
    let bound = cfg.cluster_bound(sim.log_n);
    if cs.max_cluster > bound {
        return Err(D2Error::ShatterFailure { size: cs.max_cluster, bound });
    }
    post::colorspace_reduce_clusters(sim, red)?;
    cs.non_injective = sim
        .st
        .iter()
        .filter(|s| s.sub.in_u && !red.injective_on(&s.sub.cl.list, s.sub.cl.seed.expect("seed broadcast")))
        .count();
    for b in post::buckets(sim) {
        post::color_class(sim, red, b)?;
        sim.flush(1)?;
    }
    cs.clusters = post::reports(sim, red);
    sim.local(|_, s, _, _| {
        s.sub.in_u = false;
        s.sub.steiner = false;
        s.sub.k_ports.clear();
    });
    Ok(())
}

/// Colors `g` with `Δ²+1` colors, choosing the procedure by `Δ`.
pub fn d2_color_sublog(g: &Graph, cfg: &AlgoConfig, seed: u64) -> Result<RunOutcome, D2Error> {
    cfg.validate()?;
    let reg = regime(g, cfg);
    if reg == Regime::Large {
        let mut out = crate::log::d2_color(g, cfg, seed)?;
        out.stats.sublog = Some(SublogStats { regime: reg, ..Default::default() });
        return Ok(out);
    }
    let red = ColorspaceReducer::for_palette(cfg.p, g.delta_sq() as u64 + 1)?;
    if red.d > cfg.d_max {
        return Err(ConfigError::DegreeTooLarge { d: red.d, d_max: cfg.d_max }.into());
    }
    let params = cfg.acd_params()?;
    let mut sim = Sim::new(g, cfg.engine, seed, cfg.eta);
    let mut stats = RunStats::default();
    let mut sub = SublogStats { regime: reg, reducer: Some(red), ..Default::default() };
    let mut acd: Option<AcdResult> = None;
    let ds = sim.delta_sq;
    let delta = g.max_degree();
    let log_delta = log2_ceil(delta.max(2)) as u64;

    if reg == Regime::Small {
        stats.branch = "small".into();
        sim.phase("INFORMED");
        sim.hello()?;
        sim.local(|_, s, _, _| {
            s.forward_notes = true;
            s.palette = Some((0..=ds).collect());
        });
        let iters = cfg.shatter_iters as u64 * log2_ceil(ds as usize + 1).max(1) as u64;
        for _ in 0..iters {
            if sim.eligible_count() == 0 {
                break;
            }
            informed_trial(&mut sim, |_, s, rng| {
                use rand::Rng;
                let pal = s.palette.as_ref()?;
                (!pal.is_empty()).then(|| pal[rng.gen_range(0..pal.len())])
            })?;
        }
        sim.drain(1)?;
        note_live(&sim, &mut stats);
    } else {
        stats.branch = "intermediate".into();
        sim.phase("ACD");
        sim.hello()?;
        sub.hashes = prep::hash_node_ids(&mut sim, cfg.eta)?;
        acd = Some(build_acd(&mut sim, &params, None)?);
        prep::assign_local_ids(&mut sim)?;
        note_live(&sim, &mut stats);
        sim.phase("ONESHOT");
        oneshot(&mut sim, 1, &mut stats)?;
        note_live(&sim, &mut stats);
        sim.phase("MULTITRIAL");
        prep::multi_trial_sparse(&mut sim, cfg.multitrial_mult)?;
        sub.vstar_live_after_multitrial = Some(sim.st.iter().filter(|s| s.live() && s.comp.is_none()).count());
        note_live(&sim, &mut stats);
        let iters = cfg.reduce_log_delta_mult as u64 * log_delta;
        for i in 0..iters {
            if sim.live_count() == 0 {
                break;
            }
            sim.phase(format!("DEGREE({i})"));
            reduce_phase(&mut sim, &mut stats.proposals)?;
        }
        note_live(&sim, &mut stats);
    }

    sim.phase("SPLIT");
    prep::split_low_high(&mut sim, cfg.c_low)?;
    let coloring = sim.coloring();
    sub.split = (0..g.n())
        .filter(|&v| coloring[v].is_none())
        .map(|v| (v as u32, oracle::live_d2_degree(g, &coloring, v), sim.st[v].class))
        .collect();

    let k = cfg.k_parallel.unwrap_or_else(|| ReduceOpts::max_parallel(sim.net.budget.bits, &sim.w, true)).max(1);
    let opts = ReduceOpts { k, local_ids: true };
    let learn = LearnOptions::new(delta, sim.log_n, cfg.learn_fanout, cfg.learn_walks, cfg.ideal_learn);
    for class in [LOW, HIGH] {
        freeze_except(&mut sim, Some(class));
        let mut cs = ClassStats { class, nodes: sim.eligible_count(), ..Default::default() };
        let name = if class == HIGH { "HIGH" } else { "LOW" };
        let shatter_iters;
        if reg == Regime::Small {
            sim.drain(1)?;
            prep::live_d2_flood(&mut sim)?;
            cs.after_reduce = cs.nodes;
            shatter_iters = cfg.shatter_iters as u64 * log2_ceil(ds as usize + 1).max(1) as u64;
        } else {
            for i in 0..cfg.reduce_log_delta_mult as u64 * log_delta {
                if sim.eligible_count() == 0 {
                    break;
                }
                sim.phase(format!("REDUCE({name},{i})"));
                reduce_phase_with(&mut sim, &opts, &mut stats.proposals)?;
            }
            cs.after_reduce = sim.eligible_count();
            sim.phase(format!("LEARN({name})"));
            learn_palette(&mut sim, &learn, |_| None)?;
            prep::live_d2_flood(&mut sim)?;
            let c_low = cfg.c_low as u64;
            shatter_iters = cfg.shatter_iters as u64 * log2_ceil((2 * c_low * sim.log_n as u64) as usize).max(1) as u64;
        }
        let coloring = sim.coloring();
        cs.max_degree_after_reduce = (0..g.n())
            .filter(|&v| sim.st[v].eligible())
            .map(|v| {
                let live = |u: usize| sim.st[u].eligible();
                oracle_live_degree(g, &coloring, v, live)
            })
            .max()
            .unwrap_or(0);
        cap_palettes(&mut sim);
        shatter_and_post(&mut sim, cfg, &red, shatter_iters, &mut cs)?;
        note_live(&sim, &mut stats);
        sub.classes.push(cs);
    }
    freeze_except(&mut sim, None);
    sim.drain(1)?;
    let left = sim.live_count();
    if left > 0 {
        return Err(D2Error::Uncolored(left));
    }
    stats.sublog = Some(sub);
    Ok(crate::log::conclude(sim, acd, stats))
}

/// Live d2-degree of `v` counting only nodes accepted by `keep`.
fn oracle_live_degree(g: &Graph, coloring: &[Option<Color>], v: usize, keep: impl Fn(usize) -> bool) -> usize {
    let mut seen = BTreeSet::new();
    for &x in g.neighbors(v) {
        let x = x as usize;
        for u in std::iter::once(x).chain(g.neighbors(x).iter().map(|&y| y as usize)) {
            if u != v && coloring[u].is_none() && keep(u) {
                seen.insert(u);
            }
        }
    }
    seen.len()
}

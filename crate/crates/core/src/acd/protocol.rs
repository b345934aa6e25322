//! Distributed construction: sampled similarity sets, buddy verdicts at
//! middle nodes, popularity, leader election over buddy edges, extension,
//! and depth-4 spanning trees.

use rand::Rng;
use smallvec::SmallVec;

use super::{exact_threshold_met, sampled_threshold_met, AcdComponent, AcdParams, AcdResult};
use crate::engine::mailbox::Record;
use crate::engine::message::Role;
use crate::engine::EngineError;
use crate::graph::{sorted_intersection_len, Graph, SquareView};
use crate::state::{Sim, TreeLink};

mod k {
    pub const KEY: u8 = 1;
    pub const SK: u8 = 2;
    pub const SV: u8 = 3;
    pub const BUD: u8 = 4;
    pub const POP: u8 = 5;
    pub const BEST: u8 = 6;
    pub const BESTR: u8 = 7;
    pub const CORE: u8 = 8;
    pub const EXT: u8 = 9;
    pub const MEMB: u8 = 10;
    pub const TOK: u8 = 11;
    pub const JOIN: u8 = 12;
}

/// Marks the middle node itself as one end of a verdict pair.
pub const SELF_PORT: u32 = u32::MAX;
const NONE: u32 = u32::MAX;

/// Level 0 is `ε/2`, level 1 is `2ε`.
pub const HALF: usize = 0;
pub const DOUBLE: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcdMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, Default)]
pub struct AcdScratch {
    pub in_s: bool,
    pub in_t: bool,
    pub nbr_s: Vec<bool>,
    pub nbr_t: Vec<bool>,
    /// Keys of d2-neighbors in the sample, sorted.
    pub s_v: Vec<u64>,
    pub t_v: Vec<u64>,
    /// Sample sets received from neighbors.
    pub nbr_sets: Vec<Vec<u64>>,
    /// Positive buddy pairs `(port, port or SELF_PORT)` per level.
    pub pairs: [Vec<(u32, u32)>; 2],
    pub bud_keys: [Vec<u64>; 2],
    pub popular: [bool; 2],
    pub nbr_pop: Vec<[bool; 2]>,
    pub best: u32,
    pub nbr_best: Vec<u32>,
    pub ext_offer: u32,
}

impl AcdScratch {
    fn reset(&mut self, degree: usize) {
        *self = AcdScratch {
            nbr_s: vec![false; degree],
            nbr_t: vec![false; degree],
            nbr_sets: vec![Vec::new(); degree],
            nbr_pop: vec![[false; 2]; degree],
            nbr_best: vec![NONE; degree],
            best: NONE,
            ext_offer: NONE,
            ..Default::default()
        };
    }
}

/// Level thresholds evaluated at every node.
#[derive(Clone, Copy, Debug)]
struct Judge {
    mode: AcdMode,
    delta_sq: u64,
    target: u64,
    eps: [num_rational::Ratio<i64>; 2],
}

impl Judge {
    fn met(&self, k: u64, level: usize) -> bool {
        match self.mode {
            AcdMode::Exact => exact_threshold_met(k, self.delta_sq, self.eps[level]),
            AcdMode::Sampled => sampled_threshold_met(k, self.target, self.eps[level]),
        }
    }

    /// Smallest set size that can still pass at either level.
    fn worth_sending(&self, size: usize) -> bool {
        self.met(size as u64, DOUBLE) || self.met(size as u64, HALF)
    }
}

/// Builds the decomposition with the network. Keys (`NodeState::key`)
/// stand in for ids inside the similarity samples.
pub fn build_acd(sim: &mut Sim<'_>, params: &AcdParams, force: Option<AcdMode>) -> Result<AcdResult, EngineError> {
    let ds = sim.delta_sq as u64;
    let mode = force.unwrap_or(if params.exact_mode(ds as usize, sim.log_n) { AcdMode::Exact } else { AcdMode::Sampled });
    let target = params.sample_target(ds as usize, sim.log_n).max(1);
    let prob = if mode == AcdMode::Exact || ds == 0 { 1.0 } else { target as f64 / ds as f64 };
    let eps = params.epsilon;
    let judge = Judge {
        mode,
        delta_sq: ds,
        target,
        eps: [eps / num_rational::Ratio::from_integer(2), eps * num_rational::Ratio::from_integer(2)],
    };

    // Samples and keys.
    sim.local(|ctx, s, rng, w| {
        s.acd.reset(ctx.degree);
        s.acd.in_s = prob >= 1.0 || rng.gen_bool(prob);
        s.acd.in_t = prob >= 1.0 || rng.gen_bool(prob);
        let r = Record::new(k::KEY)
            .with(Role::Key, s.key, w.key)
            .with(Role::Flag, u64::from(s.acd.in_s), 1)
            .with(Role::Flag, u64::from(s.acd.in_t), 1);
        s.mail.push_all(&r);
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::KEY {
            s.nbr[port].key = rec.v(0);
            s.acd.nbr_s[port] = rec.v(1) == 1;
            s.acd.nbr_t[port] = rec.v(2) == 1;
        }
    })?;

    // Two-hop forwarding of sampled keys.
    sim.local(|_, s, _, w| {
        for p in 0..s.nbr.len() {
            if s.acd.nbr_s[p] {
                s.acd.s_v.push(s.nbr[p].key);
            }
            if s.acd.nbr_t[p] {
                s.acd.t_v.push(s.nbr[p].key);
            }
            if !(s.acd.nbr_s[p] || s.acd.nbr_t[p]) {
                continue;
            }
            let r = Record::new(k::SK)
                .with(Role::Key, s.nbr[p].key, w.key)
                .with(Role::Flag, u64::from(s.acd.nbr_s[p]), 1)
                .with(Role::Flag, u64::from(s.acd.nbr_t[p]), 1);
            for q in 0..s.nbr.len() {
                if q != p {
                    s.mail.push(q, r.clone());
                }
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::SK {
            if rec.v(1) == 1 {
                s.acd.s_v.push(rec.v(0));
            }
            if rec.v(2) == 1 {
                s.acd.t_v.push(rec.v(0));
            }
        }
    })?;

    // Sample sets to neighbors, only when large enough to matter.
    sim.local(|_, s, _, w| {
        let own = s.key;
        for set in [&mut s.acd.s_v, &mut s.acd.t_v] {
            set.sort_unstable();
            set.dedup();
            set.retain(|&x| x != own);
        }
        if judge.worth_sending(s.acd.s_v.len()) {
            for &x in &s.acd.s_v {
                s.mail.push_all(&Record::new(k::SV).with(Role::Key, x, w.key));
            }
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::SV {
            s.acd.nbr_sets[port].push(rec.v(0));
        }
    })?;

    // Verdicts at middle nodes, then popularity replies.
    sim.local(|_, s, _, w| {
        let deg = s.nbr.len();
        let own_ok = judge.worth_sending(s.acd.s_v.len());
        for a in 0..deg {
            if s.acd.nbr_sets[a].is_empty() {
                continue;
            }
            for b in a + 1..deg {
                if s.acd.nbr_sets[b].is_empty() {
                    continue;
                }
                let kk = sorted_intersection_len(&s.acd.nbr_sets[a], &s.acd.nbr_sets[b]) as u64;
                for lvl in [HALF, DOUBLE] {
                    if judge.met(kk, lvl) {
                        s.acd.pairs[lvl].push((a as u32, b as u32));
                    }
                }
            }
            if own_ok {
                let kk = sorted_intersection_len(&s.acd.s_v, &s.acd.nbr_sets[a]) as u64;
                for lvl in [HALF, DOUBLE] {
                    if judge.met(kk, lvl) {
                        s.acd.pairs[lvl].push((a as u32, SELF_PORT));
                    }
                }
            }
        }
        for lvl in [HALF, DOUBLE] {
            for i in 0..s.acd.pairs[lvl].len() {
                let (a, b) = s.acd.pairs[lvl][i];
                // Buddy keys are reported only for members of T.
                let report = |to: usize, about: u32, s: &mut crate::state::NodeState| {
                    let (key, in_t) = if about == SELF_PORT {
                        (s.key, s.acd.in_t)
                    } else {
                        (s.nbr[about as usize].key, s.acd.nbr_t[about as usize])
                    };
                    if in_t {
                        let r = Record::new(k::BUD).with(Role::Flag, lvl as u64, 1).with(Role::Key, key, w.key);
                        s.mail.push(to, r);
                    }
                };
                report(a as usize, b, s);
                if b == SELF_PORT {
                    let key = s.nbr[a as usize].key;
                    if s.acd.nbr_t[a as usize] {
                        s.acd.bud_keys[lvl].push(key);
                    }
                } else {
                    report(b as usize, a, s);
                }
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::BUD {
            s.acd.bud_keys[rec.v(0) as usize].push(rec.v(1));
        }
    })?;

    sim.local(|_, s, _, w| {
        for lvl in [HALF, DOUBLE] {
            let keys = &mut s.acd.bud_keys[lvl];
            keys.sort_unstable();
            keys.dedup();
            s.acd.popular[lvl] = judge.met(keys.len() as u64, lvl);
        }
        let r = Record::new(k::POP)
            .with(Role::Flag, u64::from(s.acd.popular[HALF]), 1)
            .with(Role::Flag, u64::from(s.acd.popular[DOUBLE]), 1);
        s.mail.push_all(&r);
        if s.acd.popular[HALF] && s.acd.popular[DOUBLE] {
            s.acd.best = s.id;
        }
        let _ = w;
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::POP {
            s.acd.nbr_pop[port] = [rec.v(0) == 1, rec.v(1) == 1];
        }
    })?;

    // Min-id flooding over 2ε-buddy edges among 2ε-popular nodes:
    // four square-graph hops, two rounds each.
    for _ in 0..4 {
        sim.local(|_, s, _, w| {
            if s.acd.popular[DOUBLE] && s.acd.best != NONE {
                s.mail.push_all(&Record::new(k::BEST).with(Role::Id, s.acd.best as u64, w.id));
            }
            s.acd.nbr_best.iter_mut().for_each(|b| *b = NONE);
        });
        sim.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == k::BEST {
                s.acd.nbr_best[port] = rec.v(0) as u32;
            }
        })?;
        sim.local(|_, s, _, w| {
            let deg = s.nbr.len();
            let mut out = vec![NONE; deg];
            let me_in = s.acd.popular[DOUBLE];
            for &(a, b) in &s.acd.pairs[DOUBLE] {
                let a = a as usize;
                if !s.acd.nbr_pop[a][DOUBLE] {
                    continue;
                }
                if b == SELF_PORT {
                    if me_in {
                        out[a] = out[a].min(s.acd.best);
                        s.acd.best = s.acd.best.min(s.acd.nbr_best[a]);
                    }
                } else if s.acd.nbr_pop[b as usize][DOUBLE] {
                    let b = b as usize;
                    out[a] = out[a].min(s.acd.nbr_best[b]);
                    out[b] = out[b].min(s.acd.nbr_best[a]);
                }
            }
            for (p, &m) in out.iter().enumerate() {
                if m != NONE && m < s.acd.nbr_best[p] {
                    s.mail.push(p, Record::new(k::BESTR).with(Role::Id, m as u64, w.id));
                }
            }
        });
        sim.rounds(1, |_, s, _, _, rec, _| {
            if rec.kind == k::BESTR && s.acd.popular[DOUBLE] {
                s.acd.best = s.acd.best.min(rec.v(0) as u32);
            }
        })?;
    }

    // Core membership.
    sim.local(|_, s, _, w| {
        s.comp = None;
        s.core = false;
        s.trees.clear();
        if s.acd.popular[DOUBLE] && s.acd.best != NONE {
            s.comp = Some(s.acd.best);
            s.core = true;
            s.mail.push_all(&Record::new(k::CORE).with(Role::Id, s.acd.best as u64, w.id));
        }
        for nb in s.nbr.iter_mut() {
            nb.comp = None;
            nb.core = false;
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::CORE {
            s.nbr[port].comp = Some(rec.v(0) as u32);
            s.nbr[port].core = true;
        }
    })?;

    // Extension by ε/2-buddies of core nodes.
    sim.local(|_, s, _, w| {
        let pairs = s.acd.pairs[HALF].clone();
        for (a, b) in pairs {
            let a = a as usize;
            let (a_core, a_comp) = (s.nbr[a].core, s.nbr[a].comp);
            if b == SELF_PORT {
                if s.core && !a_core {
                    let c = s.comp.expect("core has comp");
                    s.mail.push(a, Record::new(k::EXT).with(Role::Id, c as u64, w.id));
                }
                if a_core && !s.core {
                    s.acd.ext_offer = s.acd.ext_offer.min(a_comp.expect("core has comp"));
                }
            } else {
                let b = b as usize;
                let (b_core, b_comp) = (s.nbr[b].core, s.nbr[b].comp);
                if a_core && !b_core {
                    s.mail.push(b, Record::new(k::EXT).with(Role::Id, a_comp.unwrap() as u64, w.id));
                }
                if b_core && !a_core {
                    s.mail.push(a, Record::new(k::EXT).with(Role::Id, b_comp.unwrap() as u64, w.id));
                }
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::EXT && !s.core {
            s.acd.ext_offer = s.acd.ext_offer.min(rec.v(0) as u32);
        }
    })?;
    sim.local(|_, s, _, w| {
        if !s.core && s.acd.ext_offer != NONE {
            s.comp = Some(s.acd.ext_offer);
        }
        if let Some(c) = s.comp {
            let r = Record::new(k::MEMB).with(Role::Id, c as u64, w.id).with(Role::Flag, u64::from(s.core), 1);
            s.mail.push_all(&r);
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::MEMB {
            s.nbr[port].comp = Some(rec.v(0) as u32);
            s.nbr[port].core = rec.v(1) == 1;
        }
    })?;

    build_trees(sim)?;
    let result = harvest(sim);
    sim.local(|_, s, _, _| {
        let deg = s.nbr.len();
        s.acd.reset(deg);
    });
    Ok(result)
}

/// BFS tokens from every leader to depth 4, then pruning to subtrees that
/// contain members.
fn build_trees(sim: &mut Sim<'_>) -> Result<(), EngineError> {
    sim.local(|_, s, _, w| {
        if s.core && s.comp == Some(s.id) {
            s.trees.push(TreeLink { comp: s.id, parent: None, depth: 0, ..Default::default() });
            let r = Record::new(k::TOK).with(Role::Id, s.id as u64, w.id);
            s.mail.push_all(&r);
        }
    });
    for depth in 1..=4u8 {
        sim.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == k::TOK {
                let comp = rec.v(0) as u32;
                if s.tree(comp).is_none() {
                    s.trees.push(TreeLink { comp, parent: Some(port as u32), depth, ..Default::default() });
                }
            }
        })?;
        if depth < 4 {
            sim.local(|_, s, _, w| {
                let fresh: SmallVec<[(u32, u32); 2]> =
                    s.trees.iter().filter(|t| t.depth == depth).map(|t| (t.comp, t.parent.unwrap())).collect();
                for (comp, parent) in fresh {
                    let r = Record::new(k::TOK).with(Role::Id, comp as u64, w.id);
                    for p in 0..s.nbr.len() {
                        if p as u32 != parent {
                            s.mail.push(p, r.clone());
                        }
                    }
                }
            });
        }
    }
    for depth in (1..=4u8).rev() {
        sim.local(|_, s, _, w| {
            let comp = s.comp;
            s.trees.retain(|t| t.depth != depth || Some(t.comp) == comp || !t.children.is_empty());
            for t in s.trees.iter().filter(|t| t.depth == depth) {
                let r = Record::new(k::JOIN).with(Role::Id, t.comp as u64, w.id);
                s.mail.push(t.parent.unwrap() as usize, r);
            }
        });
        sim.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == k::JOIN {
                if let Some(t) = s.tree_mut(rec.v(0) as u32) {
                    t.children.push(port as u32);
                }
            }
        })?;
    }
    Ok(())
}

fn harvest(sim: &Sim<'_>) -> AcdResult {
    let g = sim.g;
    let mut comps: Vec<u32> = sim.st.iter().filter_map(|s| s.comp).collect();
    comps.sort_unstable();
    comps.dedup();
    let mut out = AcdResult::default();
    for (v, s) in sim.st.iter().enumerate() {
        if !s.core {
            out.v_star.push(v);
        }
    }
    for &c in &comps {
        let mut comp = AcdComponent { id: c, leader: c as usize, core: vec![], extended: vec![], tree: vec![] };
        for (v, s) in sim.st.iter().enumerate() {
            if s.comp == Some(c) {
                comp.extended.push(v);
                if s.core {
                    comp.core.push(v);
                }
            }
            if let Some(t) = s.tree(c) {
                comp.tree.push((v, t.parent.map(|p| g.neighbors(v)[p as usize] as usize)));
            }
        }
        out.components.push(comp);
    }
    out
}

/// Sequential exact verdicts: positive ε-buddy pairs (as node ids) at each
/// middle node, and popularity flags.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BuddyVerdicts {
    pub pairs: Vec<Vec<(usize, usize)>>,
    pub popular: Vec<bool>,
}

pub fn exact_buddies(g: &Graph, epsilon: num_rational::Ratio<i64>) -> BuddyVerdicts {
    let sq = SquareView::new(g);
    let ds = g.delta_sq() as u64;
    let n = g.n();
    let buddy = |u: usize, v: usize| exact_threshold_met(sq.common_d2(u, v) as u64, ds, epsilon);
    let mut pairs = vec![Vec::new(); n];
    for (w, slot) in pairs.iter_mut().enumerate() {
        let nb = g.neighbors(w);
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if buddy(a as usize, b as usize) {
                    slot.push((a as usize, b as usize));
                }
            }
            if buddy(w, a as usize) {
                slot.push((a as usize, w));
            }
        }
    }
    let popular = (0..n)
        .map(|v| {
            let k = sq.d2_adjacency(v).iter().filter(|&&u| buddy(v, u as usize)).count();
            exact_threshold_met(k as u64, ds, epsilon)
        })
        .collect();
    BuddyVerdicts { pairs, popular }
}

/// Runs the decomposition alone: one hello round, then `build_acd`.
pub fn decompose(
    g: &Graph,
    params: &AcdParams,
    engine: crate::engine::EngineConfig,
    seed: u64,
    force: Option<AcdMode>,
) -> Result<(AcdResult, crate::engine::transcript::Transcript), EngineError> {
    let mut sim = Sim::new(g, engine, seed, 4);
    sim.phase("ACD");
    sim.hello()?;
    let acd = build_acd(&mut sim, params, force)?;
    Ok((acd, sim.net.into_transcript()))
}

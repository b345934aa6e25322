//! Postshattering: one cluster per K-component, a derandomized
//! color-space reduction per cluster, then clusters colored class by class
//! by their leaders from gathered topology and reduced lists.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::engine::mailbox::Record;
use crate::engine::message::{width_for, Role};
use crate::field::{choose_bit, prefix_count, range_count, seed_len, ColorspaceReducer, FieldError, WalkStep};
use crate::run::D2Error;
use crate::state::{NodeState, Sim};
use crate::Color;

mod k {
    pub const LEAD: u8 = 1;
    pub const CHILD: u8 = 1;
    pub const UPP: u8 = 1;
    pub const UPR: u8 = 2;
    pub const UPS: u8 = 3;
    pub const DOWN: u8 = 4;
    pub const PFX: u8 = 1;
    pub const CNT: u8 = 2;
    pub const SEED: u8 = 1;
    pub const FSEED: u8 = 1;
    pub const FV: u8 = 2;
    pub const MEM: u8 = 1;
    pub const RV: u8 = 2;
    pub const ADJ: u8 = 3;
    pub const ASG: u8 = 4;
}

/// Debug dump of one cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub leader: u32,
    pub members: Vec<u32>,
    pub steiner: Vec<u32>,
    pub size: usize,
    /// Color class: `floor(log2 size)`.
    pub bucket: u32,
    pub p: u64,
    pub d: u32,
    pub seed: u64,
    pub walk: Vec<WalkStep>,
    /// `(node, list, reduced list)`; reduced values are the `f_e` images of
    /// list colors not held by a colored d2-neighbor.
    pub lists: Vec<(u32, Vec<Color>, Vec<u64>)>,
}

/// Per-node cluster state.
#[derive(Clone, Debug, Default)]
pub struct ClusterState {
    pub leader: u32,
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    pending: usize,
    /// Subtree totals: K nodes, list pairs, root-set sizes.
    acc: [u64; 3],
    pub size: u64,
    pub list: Vec<Color>,
    pub roots: Vec<u64>,
    prefix: u64,
    len: u32,
    cnt: (u64, u64),
    pub walk: Vec<WalkStep>,
    pub seed: Option<u64>,
    strip: BTreeSet<u64>,
    pub reduced: Vec<u64>,
    gathered: BTreeMap<u32, (Vec<u64>, Vec<u32>)>,
    /// Totals at the leader.
    pub pairs: u64,
    pub root_total: u64,
}

fn in_k(s: &NodeState) -> bool {
    s.sub.in_u || s.sub.steiner
}

fn is_leader(s: &NodeState) -> bool {
    in_k(s) && s.sub.cl.leader == s.id
}

fn bucket(size: u64) -> u32 {
    63 - size.max(1).leading_zeros()
}

/// Leader election by min-id flooding over K-edges, the resulting tree,
/// and a convergecast of size, list pairs and root-set sizes, broadcast
/// back down. Lists are taken from `palette`.
pub fn form_clusters(sim: &mut Sim<'_>, red: &ColorspaceReducer) -> Result<(), D2Error> {
    let wn = width_for(sim.g.n() as u64 + 1);
    let wp = width_for(2 * red.p + 1);
    let cap = 2 * red.p;
    let mut field_err: Option<FieldError> = None;
    sim.local(|_, s, _, w| {
        s.sub.cl = ClusterState { leader: s.id, ..Default::default() };
        if !in_k(s) {
            return;
        }
        if s.sub.in_u {
            s.sub.cl.list = s.palette.clone().unwrap_or_default();
            match red.root_set(&s.sub.cl.list) {
                Ok(r) => s.sub.cl.roots = r,
                Err(e) => {
                    field_err.get_or_insert(e);
                }
            }
        }
        let r = Record::new(k::LEAD).with(Role::Id, s.id as u64, w.id);
        for &p in &s.sub.k_ports {
            s.mail.push(p as usize, r.clone());
        }
    });
    if let Some(e) = field_err {
        return Err(e.into());
    }
    sim.rounds(1, |_, s, _, port, rec, w| {
        if rec.kind == k::LEAD && in_k(s) {
            let v = rec.v(0) as u32;
            if v < s.sub.cl.leader {
                s.sub.cl.leader = v;
                s.sub.cl.parent = Some(port as u32);
                let r = Record::new(k::LEAD).with(Role::Id, v as u64, w.id);
                for &p in &s.sub.k_ports {
                    if p as usize != port {
                        s.mail.push(p as usize, r.clone());
                    }
                }
            }
        }
    })?;
    sim.local(|_, s, _, _| {
        if let Some(p) = s.sub.cl.parent {
            s.mail.push(p as usize, Record::new(k::CHILD));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::CHILD {
            s.sub.cl.children.push(port as u32);
        }
    })?;

    fn send_up(s: &mut NodeState, wn: u8, wp: u8, cap: u64) {
        let [size, pairs, roots] = s.sub.cl.acc;
        let p = s.sub.cl.parent.expect("non-leader has a parent") as usize;
        s.mail.push(p, Record::new(k::UPP).with(Role::Count, pairs.min(cap), wp));
        s.mail.push(p, Record::new(k::UPR).with(Role::Count, roots.min(cap), wp));
        s.mail.push(p, Record::new(k::UPS).with(Role::Count, size, wn));
    }
    fn send_down(s: &mut NodeState, wn: u8) {
        let r = Record::new(k::DOWN).with(Role::Count, s.sub.cl.size, wn);
        for &c in &s.sub.cl.children {
            s.mail.push(c as usize, r.clone());
        }
    }
    sim.local(|_, s, _, _| {
        if !in_k(s) {
            return;
        }
        let l = s.sub.cl.list.len() as u64;
        s.sub.cl.acc = [1, l * l.saturating_sub(1) / 2, s.sub.cl.roots.len() as u64];
        s.sub.cl.pending = s.sub.cl.children.len();
        if s.sub.cl.pending == 0 {
            if is_leader(s) {
                s.sub.cl.size = 1;
                s.sub.cl.pairs = s.sub.cl.acc[1];
                s.sub.cl.root_total = s.sub.cl.acc[2];
            } else {
                send_up(s, wn, wp, cap);
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| match rec.kind {
        k::UPP => s.sub.cl.acc[1] += rec.v(0),
        k::UPR => s.sub.cl.acc[2] += rec.v(0),
        k::UPS => {
            s.sub.cl.acc[0] += rec.v(0);
            s.sub.cl.pending -= 1;
            if s.sub.cl.pending == 0 {
                if is_leader(s) {
                    let [size, pairs, roots] = s.sub.cl.acc;
                    s.sub.cl.size = size;
                    s.sub.cl.pairs = pairs;
                    s.sub.cl.root_total = roots;
                    send_down(s, wn);
                } else {
                    send_up(s, wn, wp, cap);
                }
            }
        }
        k::DOWN => {
            s.sub.cl.size = rec.v(0);
            send_down(s, wn);
        }
        _ => {}
    })?;
    // Singleton leaders had nothing to wait for.
    sim.local(|_, s, _, _| {
        if is_leader(s) && s.sub.cl.children.is_empty() {
            s.sub.cl.size = 1;
        }
    });
    Ok(())
}

/// Largest cluster size, read from the leaders.
pub fn max_cluster(sim: &Sim<'_>) -> usize {
    sim.st.iter().filter(|s| is_leader(s)).map(|s| s.sub.cl.size as usize).max().unwrap_or(0)
}

/// Bit-fixing walk in every cluster at once. For each bit the leader sends
/// the prefix down the tree and members' counts of roots in both child
/// subcubes come back summed; the leader adds the out-of-range mass and
/// keeps the bit with the smaller count. With `d = 0` no root exists and
/// leaders walk alone. Ends with the seed broadcast and members' images.
pub fn colorspace_reduce_clusters(sim: &mut Sim<'_>, red: &ColorspaceReducer) -> Result<(), D2Error> {
    let p = red.p;
    let ell = seed_len(p);
    let wp = width_for(2 * p + 1);
    let wl = width_for(ell as u64 + 1);
    let mut infeasible: Option<FieldError> = None;
    sim.local(|_, s, _, _| {
        if is_leader(s) {
            let twice = 2 * s.sub.cl.pairs as u128 * red.d as u128;
            if twice >= p as u128 {
                infeasible.get_or_insert(FieldError::Infeasible { twice_pairs_d: twice, p });
            }
        }
    });
    if let Some(e) = infeasible {
        return Err(e.into());
    }
    let mut err: Option<FieldError> = None;
    if red.d == 0 {
        sim.local(|_, s, _, _| {
            if is_leader(s) {
                match crate::field::derandomize(p, &[]) {
                    Ok((e, walk)) => {
                        s.sub.cl.seed = Some(e);
                        s.sub.cl.walk = walk;
                    }
                    Err(e) => {
                        err.get_or_insert(e);
                    }
                }
            }
        });
    } else {
        fn member_counts(s: &mut NodeState, p: u64, ell: u32) -> (u64, u64) {
            let (prefix, len) = (s.sub.cl.prefix, s.sub.cl.len);
            let width = ell - len - 1;
            let lo0 = (prefix << 1) << width;
            let lo1 = ((prefix << 1) | 1) << width;
            let r = &s.sub.cl.roots;
            (range_count(r, lo0, (lo0 + (1 << width)).min(p)), range_count(r, lo1, (lo1 + (1 << width)).min(p)))
        }
        fn push_down(s: &mut NodeState, ell_w: u8, wl: u8) {
            let r = Record::new(k::PFX)
                .with(Role::Value, s.sub.cl.prefix, ell_w)
                .with(Role::Count, s.sub.cl.len as u64, wl);
            for &c in &s.sub.cl.children {
                s.mail.push(c as usize, r.clone());
            }
        }
        fn push_up(s: &mut NodeState, wp: u8) {
            let (c0, c1) = s.sub.cl.cnt;
            let p = s.sub.cl.parent.expect("non-leader has a parent") as usize;
            s.mail.push(p, Record::new(k::CNT).with(Role::Count, c0, wp).with(Role::Count, c1, wp));
        }
        let ell_w = ell as u8;
        for len in 0..ell {
            sim.local(|_, s, _, _| {
                if !is_leader(s) {
                    return;
                }
                s.sub.cl.len = len;
                s.sub.cl.cnt = member_counts(s, p, ell);
                s.sub.cl.pending = s.sub.cl.children.len();
                push_down(s, ell_w, wl);
            });
            sim.rounds(1, |_, s, _, _, rec, _| match rec.kind {
                k::PFX => {
                    s.sub.cl.prefix = rec.v(0);
                    s.sub.cl.len = rec.v(1) as u32;
                    s.sub.cl.cnt = member_counts(s, p, ell);
                    s.sub.cl.pending = s.sub.cl.children.len();
                    push_down(s, ell_w, wl);
                    if s.sub.cl.pending == 0 {
                        push_up(s, wp);
                    }
                }
                k::CNT => {
                    s.sub.cl.cnt.0 += rec.v(0);
                    s.sub.cl.cnt.1 += rec.v(1);
                    s.sub.cl.pending -= 1;
                    if s.sub.cl.pending == 0 && !is_leader(s) {
                        push_up(s, wp);
                    }
                }
                _ => {}
            })?;
            sim.local(|_, s, _, _| {
                if !is_leader(s) {
                    return;
                }
                let cl = &mut s.sub.cl;
                let before = match cl.walk.last() {
                    Some(w) => w.after,
                    None => {
                        let (y, den) = prefix_count(p, 0, 0, &[]).expect("empty prefix");
                        Ratio::new(y + cl.root_total, den)
                    }
                };
                let (y0, den) = prefix_count(p, cl.prefix << 1, len + 1, &[]).expect("prefix within seed");
                let (y1, _) = prefix_count(p, (cl.prefix << 1) | 1, len + 1, &[]).expect("prefix within seed");
                let (c0, c1) = (y0 + cl.cnt.0, y1 + cl.cnt.1);
                let b = choose_bit(c0, c1);
                cl.prefix = (cl.prefix << 1) | b as u64;
                let after = Ratio::new(if b == 0 { c0 } else { c1 }, den);
                cl.walk.push(WalkStep { bit: len, chosen: b, before, after });
            });
        }
        sim.local(|_, s, _, _| {
            if is_leader(s) {
                s.sub.cl.seed = Some(s.sub.cl.prefix);
            }
        });
    }
    if let Some(e) = err {
        return Err(e.into());
    }
    let ws = width_for(p);
    sim.local(|_, s, _, _| {
        if let (true, Some(e)) = (is_leader(s), s.sub.cl.seed) {
            let r = Record::new(k::SEED).with(Role::Value, e, ws);
            for &c in &s.sub.cl.children {
                s.mail.push(c as usize, r.clone());
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::SEED {
            s.sub.cl.seed = Some(rec.v(0));
            for &c in &s.sub.cl.children.clone() {
                s.mail.push(c as usize, Record::new(k::SEED).with(Role::Value, rec.v(0), ws));
            }
        }
    })?;
    Ok(())
}

/// Colors the clusters of one class: members ask their neighbors, who
/// answer with the colors held within two hops; members gather
/// reduced lists and adjacency at the leader; the leader colors greedily
/// and sends the values back down. Returns the number of adoptions.
pub fn color_class(sim: &mut Sim<'_>, red: &ColorspaceReducer, class: u32) -> Result<usize, D2Error> {
    let ws = width_for(red.p);
    let wc = width_for(sim.delta_sq as u64 + 2);
    let active = |s: &NodeState| in_k(s) && bucket(s.sub.cl.size) == class;
    sim.local(|_, s, _, _| {
        s.sub.cl.strip.clear();
        s.sub.cl.gathered.clear();
        if active(s) && s.sub.in_u {
            let e = s.sub.cl.seed.expect("seed broadcast");
            s.mail.push_all(&Record::new(k::FSEED).with(Role::Value, e, ws));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, w| match rec.kind {
        k::FSEED => {
            let mut held = BTreeSet::new();
            held.extend(s.color);
            for (q, nb) in s.nbr.iter().enumerate() {
                if q != port {
                    held.extend(nb.color);
                }
            }
            for c in held {
                s.mail.push(port, Record::new(k::FV).with(Role::Color, c as u64, w.color));
            }
        }
        k::FV => {
            s.sub.cl.strip.insert(rec.v(0));
        }
        _ => {}
    })?;

    // Reduced lists and adjacency travel up to the leader.
    sim.local(|_, s, _, w| {
        if !(active(s) && s.sub.in_u) {
            return;
        }
        let e = s.sub.cl.seed.expect("seed broadcast");
        let strip = &s.sub.cl.strip;
        let mut reduced: Vec<u64> =
            s.sub.cl.list.iter().filter(|&&c| !strip.contains(&(c as u64))).map(|&c| red.eval(c as u64, e)).collect();
        reduced.sort_unstable();
        s.sub.cl.reduced = reduced.clone();
        let adj: Vec<u32> = s.sub.live_d2.iter().copied().collect();
        if is_leader(s) {
            s.sub.cl.gathered.insert(s.id, (reduced, adj));
            return;
        }
        let p = s.sub.cl.parent.expect("non-leader has a parent") as usize;
        s.mail.push(p, Record::new(k::MEM).with(Role::Id, s.id as u64, w.id).with(Role::Count, reduced.len() as u64, wc));
        for v in reduced {
            s.mail.push(p, Record::new(k::RV).with(Role::Id, s.id as u64, w.id).with(Role::Value, v, ws));
        }
        for a in adj {
            s.mail.push(p, Record::new(k::ADJ).with(Role::Id, s.id as u64, w.id).with(Role::Id, a as u64, w.id));
        }
    });
    sim.rounds(1, |_, s, _, _, rec, w| {
        if !matches!(rec.kind, k::MEM | k::RV | k::ADJ) {
            return;
        }
        let (id, x) = (rec.v(0), rec.v(1));
        if is_leader(s) {
            let entry = s.sub.cl.gathered.entry(id as u32).or_default();
            match rec.kind {
                k::RV => entry.0.push(x),
                k::ADJ => entry.1.push(x as u32),
                _ => {}
            }
        } else if let Some(p) = s.sub.cl.parent {
            let (role, width) = match rec.kind {
                k::MEM => (Role::Count, wc),
                k::RV => (Role::Value, ws),
                _ => (Role::Id, w.id),
            };
            s.mail.push(p as usize, Record::new(rec.kind).with(Role::Id, id, w.id).with(role, x, width));
        }
    })?;

    // Greedy at the leader, values back down the tree.
    let mut failure: Option<usize> = None;
    sim.local(|_, s, _, w| {
        if !(active(s) && is_leader(s)) {
            return;
        }
        let members: BTreeMap<u32, (Vec<u64>, Vec<u32>)> = std::mem::take(&mut s.sub.cl.gathered);
        let mut assigned: BTreeMap<u32, u64> = BTreeMap::new();
        for (&id, (vals, adj)) in &members {
            let nbrs: Vec<u32> = adj.iter().copied().filter(|a| members.contains_key(a)).collect();
            if vals.len() <= nbrs.len() {
                failure.get_or_insert(id as usize);
            }
            let taken: BTreeSet<u64> = nbrs.iter().filter_map(|a| assigned.get(a).copied()).collect();
            match vals.iter().find(|v| !taken.contains(v)) {
                Some(&v) => {
                    assigned.insert(id, v);
                }
                None => {
                    failure.get_or_insert(id as usize);
                }
            }
        }
        for (id, v) in assigned {
            let r = Record::new(k::ASG).with(Role::Id, id as u64, w.id).with(Role::Value, v, ws);
            s.sub.cl.gathered.insert(id, (vec![v], Vec::new()));
            for &c in &s.sub.cl.children {
                s.mail.push(c as usize, r.clone());
            }
        }
    });
    if let Some(v) = failure {
        return Err(D2Error::EmptyList(v));
    }
    let mut adopted = 0;
    sim.local(|_, s, _, w| {
        if active(s) && is_leader(s) && s.sub.in_u {
            if let Some((v, _)) = s.sub.cl.gathered.get(&s.id).cloned() {
                adopt_value(s, red, v[0], w);
                adopted += 1;
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, w| {
        if rec.kind == k::ASG {
            let (id, v) = (rec.v(0) as u32, rec.v(1));
            if id == s.id && s.sub.in_u && s.live() {
                adopt_value(s, red, v, w);
                adopted += 1;
            }
            let r = Record::new(k::ASG).with(Role::Id, id as u64, w.id).with(Role::Value, v, ws);
            for &c in &s.sub.cl.children.clone() {
                s.mail.push(c as usize, r.clone());
            }
        }
    })?;
    sim.local(|_, s, _, _| {
        if active(s) {
            s.sub.cl.gathered.clear();
        }
    });
    Ok(adopted)
}

fn adopt_value(s: &mut NodeState, red: &ColorspaceReducer, v: u64, w: &crate::state::Widths) {
    let e = s.sub.cl.seed.expect("seed broadcast");
    let c = s.sub.cl.list.iter().copied().find(|&c| red.eval(c as u64, e) == v).expect("value from own list");
    s.post_colored = true;
    s.adopt(c, w);
}

/// Cluster dumps assembled from node states after a class finished.
pub fn reports(sim: &Sim<'_>, red: &ColorspaceReducer) -> Vec<ClusterReport> {
    let mut by_leader: BTreeMap<u32, ClusterReport> = BTreeMap::new();
    for s in sim.st.iter().filter(|s| in_k(s)) {
        let r = by_leader.entry(s.sub.cl.leader).or_insert_with(|| ClusterReport {
            leader: s.sub.cl.leader,
            members: Vec::new(),
            steiner: Vec::new(),
            size: s.sub.cl.size as usize,
            bucket: bucket(s.sub.cl.size),
            p: red.p,
            d: red.d,
            seed: s.sub.cl.seed.unwrap_or(0),
            walk: Vec::new(),
            lists: Vec::new(),
        });
        if s.sub.in_u {
            r.members.push(s.id);
            r.lists.push((s.id, s.sub.cl.list.clone(), s.sub.cl.reduced.clone()));
        } else {
            r.steiner.push(s.id);
        }
        if is_leader(s) {
            r.walk = s.sub.cl.walk.clone();
        }
    }
    by_leader.into_values().collect()
}

/// Buckets in use, ascending.
pub fn buckets(sim: &Sim<'_>) -> Vec<u32> {
    let set: BTreeSet<u32> = sim.st.iter().filter(|s| is_leader(s)).map(|s| bucket(s.sub.cl.size)).collect();
    set.into_iter().collect()
}

//! Informed trials from learned lists, live-component measurement and
//! Steiner augmentation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;

use crate::engine::mailbox::Record;
use crate::engine::message::Role;
use crate::engine::EngineError;
use crate::graph::Graph;
use crate::state::Sim;
use crate::trial::informed_trial;

mod k {
    pub const SL: u8 = 1;
    pub const SLIST: u8 = 2;
    pub const SEL: u8 = 1;
    pub const KN: u8 = 2;
}

/// `iters` informed trials, each eligible node trying a uniform color of
/// its list. Stops early once nothing is eligible.
pub fn shatter(sim: &mut Sim<'_>, iters: u64) -> Result<usize, EngineError> {
    let mut adopted = 0;
    for _ in 0..iters {
        if sim.eligible_count() == 0 {
            break;
        }
        adopted += informed_trial(sim, |_, s, rng| {
            let pal = s.palette.as_ref()?;
            if pal.is_empty() {
                None
            } else {
                Some(pal[rng.gen_range(0..pal.len())])
            }
        })?;
    }
    Ok(adopted)
}

/// Sizes of the connected components of `G²[mask]`, largest first.
pub fn square_components(g: &Graph, mask: &[bool]) -> Vec<usize> {
    let n = g.n();
    let mut seen = vec![false; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if !mask[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        let mut size = 0;
        while let Some(v) = q.pop_front() {
            size += 1;
            for &x in g.neighbors(v) {
                let x = x as usize;
                let second = g.neighbors(x).iter().map(|&y| y as usize);
                for u in std::iter::once(x).chain(second) {
                    if mask[u] && !seen[u] {
                        seen[u] = true;
                        q.push_back(u);
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Steiner augmentation. Every middle node reports its eligible live
/// neighbors to each of them; each live node then picks the smallest-id
/// middle node per non-adjacent live d2-neighbor, so both ends of a pair
/// pick the same one, and picked middle nodes join `S`.
/// Afterwards `sub.in_u`, `sub.steiner`, `sub.k_ports` describe the graph
/// on `U ∪ S` without `S`-`S` edges, and `sub.live_d2` the live
/// d2-neighbors. Returns `|S|`.
pub fn add_steiner(sim: &mut Sim<'_>) -> Result<usize, EngineError> {
    sim.local(|_, s, _, w| {
        s.sub.in_u = s.eligible();
        s.sub.steiner = false;
        s.sub.live_ports.clear();
        s.sub.live_d2.clear();
        s.sub.via.clear();
        if s.sub.in_u {
            s.mail.push_all(&Record::new(k::SL).with(Role::Id, s.id as u64, w.id));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::SL {
            s.sub.live_ports.push((port as u32, rec.v(0) as u32));
        }
    })?;
    sim.local(|_, s, _, w| {
        let live = s.sub.live_ports.clone();
        for &(p, id) in &live {
            if s.sub.in_u {
                s.sub.live_d2.insert(id);
            }
            for &(q, other) in &live {
                if q != p {
                    s.mail.push(p as usize, Record::new(k::SLIST).with(Role::Id, other as u64, w.id));
                }
            }
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::SLIST && s.sub.in_u {
            let id = rec.v(0) as u32;
            if id != s.id {
                s.sub.live_d2.insert(id);
                let mid = (s.nbr[port].id, port as u32);
                let e = s.sub.via.entry(id).or_insert(mid);
                *e = (*e).min(mid);
            }
        }
    })?;
    sim.local(|_, s, _, _| {
        let direct: BTreeSet<u32> = s.sub.live_ports.iter().map(|x| x.1).collect();
        let via: BTreeSet<u32> =
            s.sub.via.iter().filter(|(id, _)| !direct.contains(id)).map(|(_, &(_, p))| p).collect();
        for p in via {
            s.mail.push(p as usize, Record::new(k::SEL));
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::SEL && !s.sub.in_u {
            s.sub.steiner = true;
        }
    })?;
    sim.local(|_, s, _, _| {
        s.sub.nbr_k = vec![0; s.nbr.len()];
        let tag = u64::from(s.sub.in_u) | (u64::from(s.sub.steiner) << 1);
        if tag != 0 {
            s.mail.push_all(&Record::new(k::KN).with(Role::Flag, tag, 2));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::KN {
            s.sub.nbr_k[port] = rec.v(0) as u8;
        }
    })?;
    let mut count = 0;
    sim.local(|_, s, _, _| {
        let me_u = s.sub.in_u;
        let me_s = s.sub.steiner;
        count += usize::from(me_s);
        s.sub.k_ports = (0..s.nbr.len())
            .filter(|&p| {
                let t = s.sub.nbr_k[p];
                (me_u && t != 0) || (me_s && t & 1 == 1)
            })
            .map(|p| p as u32)
            .collect();
    });
    Ok(count)
}

/// The K-components as node sets, from the per-node K-ports. Oracle-side.
pub fn k_components(sim: &Sim<'_>) -> Vec<Vec<usize>> {
    let n = sim.g.n();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        let st = &sim.st[s];
        if seen[s] || !(st.sub.in_u || st.sub.steiner) {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &p in &sim.st[v].sub.k_ports {
                let u = sim.g.neighbors(v)[p as usize] as usize;
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    q.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Live d2-neighbor ids per node, for sanity checks in tests.
pub fn live_d2_table(sim: &Sim<'_>) -> BTreeMap<u32, BTreeSet<u32>> {
    sim.st.iter().filter(|s| s.sub.in_u).map(|s| (s.id, s.sub.live_d2.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_components_of_a_path() {
        // P5 0-1-2-3-4 with 0, 2 and 4 live: all joined in G².
        let g = Graph::new(5, [(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let mask = [true, false, true, false, true];
        assert_eq!(square_components(&g, &mask), vec![3]);
        let mask = [true, false, false, true, false];
        assert_eq!(square_components(&g, &mask), vec![1, 1]);
    }
}

//! Palette learning through per-block helpers.
//!
//! Each live node picks a helper H-neighbor per block of `Δ` colors. Helpers
//! register with random d2-neighbors, colored nodes send their colors along
//! random 2-paths, and registrants forward hits to the helper. Helpers
//! return the block colors they did not see; the live node then strips the
//! colors its immediate neighbors report as used nearby. Blocks without a
//! helper are returned whole, so the result never misses a free color.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::mailbox::Record;
use crate::engine::message::Role;
use crate::engine::rng::NodeRng;
use crate::engine::EngineError;
use crate::oracle;
use crate::state::{NodeState, Sim};
use crate::Color;

mod k {
    pub const LIVE: u8 = 1;
    pub const LIVE2: u8 = 2;
    pub const CORECNT: u8 = 1;
    pub const HREQ: u8 = 1;
    pub const HSET: u8 = 2;
    pub const REG: u8 = 1;
    pub const REG2: u8 = 2;
    pub const COL: u8 = 1;
    pub const COL2: u8 = 2;
    pub const HIT: u8 = 3;
    pub const HIT2: u8 = 4;
    pub const TV: u8 = 1;
    pub const TV2: u8 = 2;
    pub const STRIP: u8 = 1;
    pub const USED: u8 = 2;
}

#[derive(Clone, Debug, Default)]
struct Duty {
    v: u32,
    block: u32,
    back: u32,
    seen: BTreeSet<Color>,
}

#[derive(Clone, Debug, Default)]
pub struct LearnScratch {
    /// Ids of live d2-neighbors, sorted.
    pub live_d2: Vec<u32>,
    core_cnt: Vec<u32>,
    duties: Vec<Duty>,
    /// `(v, block) -> (helper id, port toward the helper)`.
    regs: BTreeMap<(u32, u32), (u32, u32)>,
    sent: BTreeSet<(u32, Color)>,
    has_helper: Vec<bool>,
    t_v: BTreeSet<Color>,
    used: BTreeSet<Color>,
    /// Size of `T_v` before the neighbor strip.
    pub tv_size: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnOptions {
    /// Registrants per helper.
    pub fanout: usize,
    /// Walks per (colored node, live d2-neighbor).
    pub walks: usize,
    pub ideal: bool,
}

impl LearnOptions {
    pub fn new(delta: usize, log_n: u32, fanout: Option<usize>, walk_mult: u32, ideal: bool) -> Self {
        let ds = (delta * delta).max(1);
        let p = fanout
            .unwrap_or_else(|| delta * ((delta as f64 * log_n as f64).sqrt().ceil() as usize))
            .clamp(1, ds);
        let walks = ((ds as f64 / p as f64) * log_n as f64 * walk_mult as f64).ceil() as usize;
        LearnOptions { fanout: p, walks: walks.max(1), ideal }
    }
}

/// Color block of `c`; the last block also holds `Δ²`.
pub fn block_of(c: Color, delta: usize) -> u32 {
    if delta == 0 {
        return 0;
    }
    ((c as usize / delta).min(delta - 1)) as u32
}

pub fn block_range(i: u32, delta: usize) -> std::ops::RangeInclusive<Color> {
    let lo = i as usize * delta;
    let hi = if i as usize + 1 == delta { delta * delta } else { lo + delta - 1 };
    lo as Color..=hi as Color
}

/// Per-node palette statistics from one learning pass.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnStats {
    pub learners: usize,
    pub max_tv: usize,
    /// Learned palettes that differ from the exact palette.
    pub inexact: usize,
}

/// Random port, then a random neighbor of it other than the sender.
fn random_port(s: &NodeState, rng: &mut NodeRng, except: Option<usize>) -> Option<usize> {
    let deg = s.nbr.len();
    let n = deg - usize::from(except.is_some());
    if n == 0 {
        return None;
    }
    let mut q = rng.gen_range(0..n);
    if let Some(e) = except {
        if q >= e {
            q += 1;
        }
    }
    Some(q)
}

fn port_of_id(s: &NodeState, id: u32) -> Option<usize> {
    s.nbr.iter().position(|nb| nb.id == id)
}

/// Learns palettes for live nodes. `limit(v)` caps a palette at that many
/// entries, keeping a random subset.
pub fn learn_palette(
    sim: &mut Sim<'_>,
    opts: &LearnOptions,
    limit: impl Fn(&NodeState) -> Option<usize>,
) -> Result<LearnStats, EngineError> {
    let delta = sim.g.max_degree();
    let ds = sim.delta_sq;
    if opts.ideal {
        let coloring = sim.coloring();
        let g = sim.g;
        let mut stats = LearnStats::default();
        sim.local(|ctx, s, rng, _| {
            if s.eligible() {
                let mut pal = oracle::exact_palette(g, &coloring, ctx.node).expect("live node");
                stats.learners += 1;
                if let Some(m) = limit(s) {
                    cap(&mut pal, m, rng);
                }
                s.palette = Some(pal);
            }
        });
        return Ok(stats);
    }
    sim.local(|ctx, s, _, _| {
        s.learn = LearnScratch { core_cnt: vec![0; ctx.degree], ..Default::default() };
    });
    if sim.eligible_count() == 0 {
        return Ok(LearnStats::default());
    }

    // Live d2-neighbors by two-hop flooding.
    sim.local(|_, s, _, w| {
        if s.eligible() {
            s.mail.push_all(&Record::new(k::LIVE).with(Role::Id, s.id as u64, w.id));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, w| {
        if rec.kind == k::LIVE || rec.kind == k::LIVE2 {
            let id = rec.v(0) as u32;
            if id != s.id {
                s.learn.live_d2.push(id);
            }
            if rec.kind == k::LIVE {
                let r = Record::new(k::LIVE2).with(Role::Id, id as u64, w.id);
                for q in 0..s.nbr.len() {
                    if q != port {
                        s.mail.push(q, r.clone());
                    }
                }
            }
        }
    })?;
    sim.local(|_, s, _, _| {
        s.learn.live_d2.sort_unstable();
        s.learn.live_d2.dedup();
    });

    // Helper choice over 2-paths into the core.
    sim.local(|_, s, _, w| {
        for p in 0..s.nbr.len() {
            let nb = &s.nbr[p];
            if nb.color.is_some() || nb.comp.is_none() {
                continue;
            }
            let comp = nb.comp;
            let c = s.nbr.iter().enumerate().filter(|&(q, x)| q != p && x.core && x.comp == comp).count();
            s.mail.push(p, Record::new(k::CORECNT).with(Role::Count, c as u64, w.count));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::CORECNT {
            s.learn.core_cnt[port] = rec.v(0) as u32;
        }
    })?;
    sim.local(|_, s, rng, w| {
        s.learn.has_helper = vec![false; delta];
        if !s.eligible() || s.comp.is_none() {
            return;
        }
        let total: u64 = s.learn.core_cnt.iter().map(|&c| c as u64).sum();
        if total == 0 {
            return;
        }
        for i in 0..delta {
            let mut t = rng.gen_range(0..total);
            let mut port = 0;
            for (p, &c) in s.learn.core_cnt.iter().enumerate() {
                if t < c as u64 {
                    port = p;
                    break;
                }
                t -= c as u64;
            }
            s.mail.push(port, Record::new(k::HREQ).with(Role::Count, i as u64, w.count));
            s.learn.has_helper[i] = true;
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, w| match rec.kind {
        k::HREQ => {
            let comp = s.nbr[port].comp;
            let cands: Vec<usize> =
                (0..s.nbr.len()).filter(|&q| q != port && s.nbr[q].core && s.nbr[q].comp == comp).collect();
            if let Some(&z) = cands.choose(rng) {
                let r = Record::new(k::HSET)
                    .with(Role::Id, s.nbr[port].id as u64, w.id)
                    .with(Role::Count, rec.v(0), w.count);
                s.mail.push(z, r);
            }
        }
        k::HSET => {
            s.learn.duties.push(Duty { v: rec.v(0) as u32, block: rec.v(1) as u32, back: port as u32, ..Default::default() });
        }
        _ => {}
    })?;

    // Registration of each helper with random d2-neighbors.
    let fanout = opts.fanout;
    sim.local(|_, s, rng, w| {
        for i in 0..s.learn.duties.len() {
            let (v, block) = (s.learn.duties[i].v, s.learn.duties[i].block);
            let r = Record::new(k::REG)
                .with(Role::Id, v as u64, w.id)
                .with(Role::Count, block as u64, w.count)
                .with(Role::Id, s.id as u64, w.id);
            for _ in 0..fanout {
                if let Some(x) = random_port(s, rng, None) {
                    s.mail.push(x, r.clone());
                }
            }
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, w| match rec.kind {
        k::REG => {
            if let Some(q) = random_port(s, rng, Some(port)) {
                let r = Record::new(k::REG2).with(Role::Id, rec.v(0), w.id).with(Role::Count, rec.v(1), w.count).with(
                    Role::Id,
                    rec.v(2),
                    w.id,
                );
                s.mail.push(q, r);
            }
        }
        k::REG2 => {
            let key = (rec.v(0) as u32, rec.v(1) as u32);
            s.learn.regs.entry(key).or_insert((rec.v(2) as u32, port as u32));
        }
        _ => {}
    })?;

    // Colors travel along random 2-paths to registrants, then to helpers.
    let walks = opts.walks;
    sim.local(|_, s, rng, w| {
        let Some(c) = s.color else { return };
        for i in 0..s.learn.live_d2.len() {
            let v = s.learn.live_d2[i];
            let r = Record::new(k::COL).with(Role::Id, v as u64, w.id).with(Role::Color, c as u64, w.color);
            for _ in 0..walks {
                if let Some(x) = random_port(s, rng, None) {
                    s.mail.push(x, r.clone());
                }
            }
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, w| match rec.kind {
        k::COL => {
            if let Some(q) = random_port(s, rng, Some(port)) {
                let r = Record::new(k::COL2).with(Role::Id, rec.v(0), w.id).with(Role::Color, rec.v(1), w.color);
                s.mail.push(q, r);
            }
        }
        k::COL2 => {
            let (v, c) = (rec.v(0) as u32, rec.v(1) as Color);
            let Some(&(z, back)) = s.learn.regs.get(&(v, block_of(c, delta))) else { return };
            if s.learn.sent.insert((v, c)) {
                let r = Record::new(k::HIT)
                    .with(Role::Id, z as u64, w.id)
                    .with(Role::Id, v as u64, w.id)
                    .with(Role::Color, c as u64, w.color);
                s.mail.push(back as usize, r);
            }
        }
        k::HIT => {
            let z = rec.v(0) as u32;
            if z == s.id {
                record_hit(s, rec.v(1) as u32, rec.v(2) as Color, delta);
            } else if let Some(p) = port_of_id(s, z) {
                let r = Record::new(k::HIT2).with(Role::Id, rec.v(1), w.id).with(Role::Color, rec.v(2), w.color);
                s.mail.push(p, r);
            }
        }
        k::HIT2 => record_hit(s, rec.v(0) as u32, rec.v(1) as Color, delta),
        _ => {}
    })?;

    // Helpers return the unseen block colors.
    sim.local(|_, s, _, w| {
        let duties = std::mem::take(&mut s.learn.duties);
        for d in &duties {
            for c in block_range(d.block, delta) {
                if !d.seen.contains(&c) {
                    let r = Record::new(k::TV).with(Role::Id, d.v as u64, w.id).with(Role::Color, c as u64, w.color);
                    s.mail.push(d.back as usize, r);
                }
            }
        }
        if s.eligible() {
            for i in 0..delta.max(1) {
                if !s.learn.has_helper.get(i).copied().unwrap_or(false) {
                    s.learn.t_v.extend(block_range(i as u32, delta));
                }
            }
            if delta == 0 {
                s.learn.t_v.insert(0);
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, w| match rec.kind {
        k::TV => {
            if let Some(p) = port_of_id(s, rec.v(0) as u32) {
                s.mail.push(p, Record::new(k::TV2).with(Role::Color, rec.v(1), w.color));
            }
        }
        k::TV2 => {
            if s.eligible() {
                s.learn.t_v.insert(rec.v(0) as Color);
            }
        }
        _ => {}
    })?;

    // Strip colors used within two hops, as reported by immediate neighbors.
    sim.local(|_, s, _, w| {
        s.learn.tv_size = s.learn.t_v.len();
        let t: Vec<Color> = s.learn.t_v.iter().copied().filter(|c| !s.holds_near(*c, None)).collect();
        s.learn.used.clear();
        for c in t {
            s.mail.push_all(&Record::new(k::STRIP).with(Role::Color, c as u64, w.color));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, w| match rec.kind {
        k::STRIP => {
            let c = rec.v(0) as Color;
            if s.holds_near(c, Some(port)) {
                s.mail.push(port, Record::new(k::USED).with(Role::Color, c as u64, w.color));
            }
        }
        k::USED => {
            s.learn.used.insert(rec.v(0) as Color);
        }
        _ => {}
    })?;

    let coloring = sim.coloring();
    let g = sim.g;
    let mut stats = LearnStats::default();
    sim.local(|ctx, s, rng, _| {
        if !s.eligible() {
            s.learn.t_v.clear();
            return;
        }
        let t = std::mem::take(&mut s.learn.t_v);
        let used = std::mem::take(&mut s.learn.used);
        let mut pal: Vec<Color> = t.into_iter().filter(|c| !used.contains(c) && !s.holds_near(*c, None)).collect();
        pal.retain(|&c| c <= ds);
        stats.learners += 1;
        stats.max_tv = stats.max_tv.max(s.learn.tv_size);
        if oracle::exact_palette(g, &coloring, ctx.node).map_or(true, |e| e != pal) {
            stats.inexact += 1;
        }
        if let Some(m) = limit(s) {
            cap(&mut pal, m, rng);
        }
        s.palette = Some(pal);
    });
    Ok(stats)
}

fn record_hit(s: &mut NodeState, v: u32, c: Color, delta: usize) {
    let b = block_of(c, delta);
    if let Some(d) = s.learn.duties.iter_mut().find(|d| d.v == v && d.block == b) {
        d.seen.insert(c);
    }
}

fn cap(pal: &mut Vec<Color>, m: usize, rng: &mut NodeRng) {
    if pal.len() > m {
        pal.shuffle(rng);
        pal.truncate(m);
        pal.sort_unstable();
    }
}

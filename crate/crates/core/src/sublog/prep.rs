//! Preshattering steps before the per-class work: id hashing, local ids
//! over the component trees, the sparse MultiTrial and the LOW/HIGH split.

use std::collections::BTreeSet;

use rand::Rng;

use crate::engine::mailbox::Record;
use crate::engine::message::{Role, KIND_BITS, TAG_BITS};
use crate::engine::EngineError;
use crate::state::Sim;
use crate::Color;

mod k {
    pub const HKEY: u8 = 1;
    pub const LUP: u8 = 1;
    pub const LDOWN: u8 = 2;
    pub const LID: u8 = 3;
    pub const MVAL: u8 = 1;
    pub const MNACK: u8 = 2;
    pub const LV: u8 = 1;
    pub const HI: u8 = 2;
    pub const FV: u8 = 3;
    pub const LIVE: u8 = 1;
    pub const LIVE2: u8 = 2;
}

pub const LOW: u8 = 1;
pub const HIGH: u8 = 2;

/// Each node draws `h_v` in `[η·Δ⁴)` and tells its neighbors; the
/// decomposition then samples hashes instead of ids. Returns all hashes.
pub fn hash_node_ids(sim: &mut Sim<'_>, eta: u64) -> Result<Vec<u64>, EngineError> {
    let ds = sim.delta_sq as u64;
    let range = (eta * ds * ds).max(2);
    sim.w.key = sim.w.hash;
    sim.local(|_, s, rng, w| {
        s.key = rng.gen_range(0..range);
        s.mail.push_all(&Record::new(k::HKEY).with(Role::Hash, s.key, w.hash));
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::HKEY {
            s.nbr[port].key = rec.v(0);
        }
    })?;
    Ok(sim.st.iter().map(|s| s.key).collect())
}

/// Numbers the members of every extended component `0..size` along its
/// tree, in 4 rounds up and 4 down, then tells neighbors in one round.
/// Members beyond `2Δ²` get no local id.
pub fn assign_local_ids(sim: &mut Sim<'_>) -> Result<(), EngineError> {
    let cap = 2 * sim.delta_sq as u64;
    let wc = sim.w.local.max(crate::engine::message::width_for(sim.g.n() as u64 + 1));
    sim.local(|_, s, _, _| {
        s.local_id = None;
        s.sub.child_cnt.clear();
        let comp = s.comp;
        for t in s.trees.iter_mut() {
            t.acc = u64::from(Some(t.comp) == comp);
            t.result = None;
        }
    });
    for depth in (1..=4u8).rev() {
        sim.local(|_, s, _, w| {
            for t in s.trees.iter().filter(|t| t.depth == depth) {
                let r = Record::new(k::LUP).with(Role::Id, t.comp as u64, w.id).with(Role::Count, t.acc, wc);
                s.mail.push(t.parent.expect("non-root has parent") as usize, r);
            }
        });
        sim.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == k::LUP {
                let comp = rec.v(0) as u32;
                s.sub.child_cnt.push((comp, port as u32, rec.v(1)));
                if let Some(t) = s.tree_mut(comp) {
                    t.acc += rec.v(1);
                }
            }
        })?;
    }
    for depth in 0..=4u8 {
        sim.local(|_, s, _, w| {
            let comp = s.comp;
            let mut out = Vec::new();
            for t in s.trees.iter_mut().filter(|t| t.depth == depth) {
                if depth == 0 {
                    t.result = Some(0);
                }
                let Some(mut off) = t.result else { continue };
                if Some(t.comp) == comp {
                    if off < cap {
                        s.local_id = Some(off as u32);
                    }
                    off += 1;
                }
                for &c in &t.children {
                    let cnt = s.sub.child_cnt.iter().find(|x| x.0 == t.comp && x.1 == c).map_or(0, |x| x.2);
                    out.push((c, t.comp, off));
                    off += cnt;
                }
            }
            for (c, comp, off) in out {
                let r = Record::new(k::LDOWN).with(Role::Id, comp as u64, w.id).with(Role::Count, off, wc);
                s.mail.push(c as usize, r);
            }
        });
        sim.rounds(1, |_, s, _, _, rec, _| {
            if rec.kind == k::LDOWN {
                if let Some(t) = s.tree_mut(rec.v(0) as u32) {
                    t.result = Some(rec.v(1));
                }
            }
        })?;
    }
    sim.local(|_, s, _, w| {
        if let Some(l) = s.local_id {
            s.mail.push_all(&Record::new(k::LID).with(Role::LocalId, l as u64, w.local));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::LID {
            s.nbr[port].local_id = Some(rec.v(0) as u32);
        }
    })?;
    Ok(())
}

/// Colors per MultiTrial message: one kind field plus packed colors.
pub fn batch_size(budget_bits: u32, color_width: u8) -> usize {
    (budget_bits.saturating_sub(TAG_BITS + KIND_BITS as u32) / color_width as u32).max(1) as usize
}

/// Live sparse nodes try batches of random colors; `q = 6·mult·log n`
/// tries in `ceil(q/m)` batches of `m = min(batch size, q)`. Each batch is
/// one request round, one reply round and the announcement.
pub fn multi_trial_sparse(sim: &mut Sim<'_>, mult: u32) -> Result<usize, EngineError> {
    if mult == 0 {
        return Ok(0);
    }
    let q = 6 * mult as usize * sim.log_n as usize;
    let m = batch_size(sim.net.budget.bits, sim.w.color).min(q).min(32);
    let batches = q.div_ceil(m);
    let ds = sim.delta_sq;
    let mut adopted = 0;
    for _ in 0..batches {
        if !sim.st.iter().any(|s| s.eligible() && s.comp.is_none()) {
            break;
        }
        sim.local(|_, s, rng, w| {
            s.sub.tries.clear();
            if !s.eligible() || s.comp.is_some() {
                return;
            }
            let want = m.min(ds as usize + 1);
            let mut picked = BTreeSet::new();
            while picked.len() < want {
                picked.insert(rng.gen_range(0..=ds));
            }
            s.sub.tries = picked.into_iter().collect();
            let mut r = Record::new(k::MVAL);
            for &c in &s.sub.tries {
                r = r.with(Role::Color, c as u64, w.color);
            }
            s.mail.push_all(&r);
        });
        sim.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == k::MVAL {
                let cs: Vec<Color> = (0..rec.len()).map(|i| rec.v(i) as Color).collect();
                s.sub.batches.push((port as u32, cs));
            }
        })?;
        sim.local(|_, s, _, _| {
            let batches = std::mem::take(&mut s.sub.batches);
            for (p, cs) in &batches {
                let mut mask = 0u64;
                for (j, &c) in cs.iter().enumerate() {
                    let clash = s.sub.tries.contains(&c) || batches.iter().any(|(q, ds)| q != p && ds.contains(&c));
                    if clash || s.holds_near(c, Some(*p as usize)) {
                        mask |= 1 << j;
                    }
                }
                if mask != 0 {
                    s.mail.push(*p as usize, Record::new(k::MNACK).with(Role::Flag, mask, cs.len() as u8));
                }
            }
        });
        sim.rounds(1, |_, s, _, _, rec, _| {
            if rec.kind == k::MNACK {
                let mask = rec.v(0);
                for (j, &c) in s.sub.tries.iter().enumerate() {
                    if mask & (1 << j) != 0 {
                        s.sub.rejected.push(c);
                    }
                }
            }
        })?;
        sim.local(|_, s, _, w| {
            let rejected = std::mem::take(&mut s.sub.rejected);
            let tries = std::mem::take(&mut s.sub.tries);
            if s.eligible() {
                if let Some(&c) = tries.iter().find(|c| !rejected.contains(c)) {
                    s.adopt(c, w);
                    adopted += 1;
                }
            }
        });
        sim.flush(1)?;
    }
    Ok(adopted)
}

/// Ids of eligible live nodes within two hops, into `sub.live_d2`.
pub fn live_d2_flood(sim: &mut Sim<'_>) -> Result<(), EngineError> {
    sim.local(|_, s, _, w| {
        s.sub.live_d2.clear();
        if s.eligible() {
            s.mail.push_all(&Record::new(k::LIVE).with(Role::Id, s.id as u64, w.id));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, w| {
        if rec.kind == k::LIVE || rec.kind == k::LIVE2 {
            let id = rec.v(0) as u32;
            if id != s.id && s.eligible() {
                s.sub.live_d2.insert(id);
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
    Ok(())
}

/// LOW/HIGH split with threshold `t = c·log n`. Middle nodes with more
/// than `t` live neighbors mark them HIGH; others forward up to `t + 1`
/// distinct random values to each live neighbor, which joins HIGH iff it
/// counts more than `t` distinct values. Sets `class` on eligible nodes.
pub fn split_low_high(sim: &mut Sim<'_>, c: u32) -> Result<(), EngineError> {
    let t = c as usize * sim.log_n as usize;
    let ds = sim.delta_sq as u64;
    let range = (ds * ds).max(2);
    let wv = crate::engine::message::width_for(range);
    sim.local(|_, s, rng, _| {
        s.sub.values.clear();
        s.sub.lv_in.clear();
        s.sub.high = false;
        if s.eligible() {
            let x = rng.gen_range(0..range);
            s.sub.value = Some(x);
            s.mail.push_all(&Record::new(k::LV).with(Role::Value, x, wv));
        } else {
            s.sub.value = None;
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::LV {
            s.sub.lv_in.push((port as u32, rec.v(0)));
            s.sub.values.insert(rec.v(0));
        }
    })?;
    sim.local(|_, s, _, _| {
        let lv = std::mem::take(&mut s.sub.lv_in);
        if lv.len() > t {
            s.sub.high = true;
            for &(p, _) in &lv {
                s.mail.push(p as usize, Record::new(k::HI));
            }
            return;
        }
        for &(p, _) in &lv {
            let mut sent = BTreeSet::new();
            for &(q, x) in &lv {
                if q != p && sent.len() <= t && sent.insert(x) {
                    s.mail.push(p as usize, Record::new(k::FV).with(Role::Value, x, wv));
                }
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| match rec.kind {
        k::HI => s.sub.high = true,
        k::FV => {
            s.sub.values.insert(rec.v(0));
        }
        _ => {}
    })?;
    sim.local(|_, s, _, _| {
        if !s.eligible() {
            s.class = 0;
            return;
        }
        if let Some(x) = s.sub.value {
            s.sub.values.remove(&x);
        }
        s.class = if s.sub.high || s.sub.values.len() > t { HIGH } else { LOW };
    });
    Ok(())
}

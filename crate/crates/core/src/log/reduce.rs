//! One Reduce-Phase iteration.
//!
//! Inactive core nodes help active live nodes of their component: each
//! helper `u` reaches an active `v` over a unique 2-path, proposes a guess
//! that no Ĥ-neighbor of `u` holds, and queries a random inactive
//! Ĥ-neighbor `w`, which returns its color through `u` when `v` is not a
//! d2-neighbor of `w`. The aggregation of `φ` shares its eight rounds with
//! the path sampling and the uniqueness check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acd::{AggOp, AggRun};
use crate::engine::mailbox::Record;
use crate::engine::message::{width_for, Rec, Role, KIND_BITS, TAG_BITS};
use crate::engine::rng::NodeRng;
use crate::engine::EngineError;
use crate::state::{NodeState, Sim, Widths};
use crate::trial::{try_colors, Picks};
use crate::Color;

/// Kinds used while the aggregation runs.
mod a {
    pub const ACT: u8 = 1;
    pub const CHK: u8 = 2;
    pub const CNT: u8 = 3;
    pub const PICK: u8 = 4;
    pub const VID: u8 = 5;
    pub const Q: u8 = 6;
    pub const YES: u8 = 7;
}

/// Kinds used after it.
mod b {
    pub const GO: u8 = 1;
    pub const QRY: u8 = 2;
    pub const PROP: u8 = 3;
    pub const QRY2: u8 = 4;
    pub const ASK: u8 = 5;
    pub const ASKR: u8 = 6;
    pub const RET: u8 = 7;
    pub const RET2: u8 = 8;
    pub const FWD: u8 = 9;
    pub const FWDV: u8 = 10;
}

/// Rounds per iteration; shorter schedules are padded.
pub const ROUNDS: u64 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposalKind {
    /// A helper's own guess (Step 4).
    Guess,
    /// The color of a queried node (Step 6).
    Forwarded,
}

/// A proposal as it left its origin, for soundness checks on transcripts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalEvent {
    pub round: u64,
    pub kind: ProposalKind,
    /// Helper `u` for guesses, queried node `w` for forwarded colors.
    pub origin: u32,
    pub target: u32,
    pub color: Color,
    pub priority: u16,
}

/// How a Reduce-Phase runs: `k` instances sharing one active set, and
/// whether records carry component-local ids instead of global ids.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceOpts {
    pub k: usize,
    pub local_ids: bool,
}

impl Default for ReduceOpts {
    fn default() -> Self {
        ReduceOpts { k: 1, local_ids: false }
    }
}

impl ReduceOpts {
    fn id_width(&self, w: &Widths) -> u8 {
        if self.local_ids {
            w.local
        } else {
            w.id
        }
    }

    fn id_role(&self) -> Role {
        if self.local_ids {
            Role::LocalId
        } else {
            Role::Id
        }
    }

    /// Width of the instance field; zero when a single instance runs.
    fn inst_width(&self) -> u8 {
        if self.k > 1 {
            width_for(self.k as u64)
        } else {
            0
        }
    }

    /// Bits of the largest record one instance sends over an edge in a round.
    pub fn instance_bits(&self, w: &Widths) -> u32 {
        KIND_BITS as u32 + w.prio as u32 + self.id_width(w) as u32 + w.color as u32 + self.inst_width() as u32
    }

    /// Largest `k` whose instances fit one message side by side.
    pub fn max_parallel(budget_bits: u32, w: &Widths, local_ids: bool) -> usize {
        let mut k = 1;
        loop {
            let o = ReduceOpts { k: k + 1, local_ids };
            if (k + 1) as u32 * o.instance_bits(w) + TAG_BITS > budget_bits {
                return k;
            }
            k += 1;
        }
    }

    fn tag(&self, r: Record, i: usize) -> Record {
        if self.k > 1 {
            r.with(Role::Instance, i as u64, self.inst_width())
        } else {
            r
        }
    }

    fn inst_of(&self, rec: &Rec<'_>) -> usize {
        if self.k > 1 {
            rec.v(rec.len() - 1) as usize
        } else {
            0
        }
    }

    fn own_ident(&self, s: &NodeState) -> Option<u32> {
        if self.local_ids {
            s.local_id
        } else {
            Some(s.id)
        }
    }

    fn ident(&self, s: &NodeState, port: usize) -> Option<u32> {
        if self.local_ids {
            s.nbr[port].local_id
        } else {
            Some(s.nbr[port].id)
        }
    }

    /// Whether a neighbor in `comp` carries identifier `id`.
    fn knows(&self, s: &NodeState, comp: Option<u32>, id: u32) -> bool {
        if self.local_ids {
            s.nbr.iter().any(|nb| nb.comp.is_some() && nb.comp == comp && nb.local_id == Some(id))
        } else {
            s.nbr.iter().any(|nb| nb.id == id)
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Pick {
    inst: usize,
    u_port: u32,
    v_port: u32,
    prio: u16,
    guess: Option<Color>,
    go: bool,
}

#[derive(Clone, Debug, Default)]
struct Relay {
    inst: usize,
    u_port: u32,
    w_port: u32,
    prio: u16,
    target: u32,
}

/// Helper-side and queried-side state of one instance.
#[derive(Clone, Debug, Default)]
struct Inst {
    guess: Option<Color>,
    held: bool,
    pick_port: Option<u32>,
    target: Option<u32>,
    unique: bool,
    best_q: Option<(u16, u32, u32)>,
    asked: bool,
    d2_hit: bool,
}

#[derive(Clone, Debug, Default)]
pub struct ReduceScratch {
    pub active: bool,
    nbr_active: Vec<bool>,
    cnt_act: Vec<u32>,
    cnt_inact: Vec<u32>,
    phi_u: u64,
    inst: Vec<Inst>,
    /// `(port, value, instance)` awaiting a middle-node answer.
    inbox: Vec<(u32, u64, usize)>,
    picks: Vec<Pick>,
    relays: Vec<Relay>,
    outgoing: Vec<(u32, Color, usize)>,
    /// `(priority, origin, color, instance)`.
    guesses: Vec<(u16, u32, Color, usize)>,
    forwarded: Vec<(Color, usize)>,
}

impl ReduceScratch {
    fn reset(&mut self, degree: usize, k: usize) {
        *self = ReduceScratch {
            nbr_active: vec![false; degree],
            cnt_act: vec![0; degree],
            cnt_inact: vec![0; degree],
            inst: vec![Inst::default(); k],
            ..Default::default()
        };
    }
}

/// Draws a port with probability proportional to `weights`.
fn weighted_port(weights: &[u32], rng: &mut NodeRng) -> Option<usize> {
    let total: u64 = weights.iter().map(|&x| x as u64).sum();
    if total == 0 {
        return None;
    }
    let mut t = rng.gen_range(0..total);
    for (p, &x) in weights.iter().enumerate() {
        if t < x as u64 {
            return Some(p);
        }
        t -= x as u64;
    }
    unreachable!("weights sum to total")
}

/// Uniform choice among ports other than `from` satisfying `ok`.
fn uniform_port(s: &NodeState, from: usize, rng: &mut NodeRng, ok: impl Fn(usize) -> bool) -> Option<usize> {
    let cands: Vec<usize> = (0..s.nbr.len()).filter(|&q| q != from && ok(q)).collect();
    if cands.is_empty() {
        None
    } else {
        Some(cands[rng.gen_range(0..cands.len())])
    }
}

fn handle_a(s: &mut NodeState, rng: &mut NodeRng, port: usize, rec: Rec<'_>, agg: &AggRun, o: &ReduceOpts) {
    if agg.absorb(s, &rec) {
        return;
    }
    let i = o.inst_of(&rec);
    match rec.kind {
        a::ACT => s.reduce.nbr_active[port] = true,
        a::CHK | a::Q => s.reduce.inbox.push((port as u32, rec.v(0), i)),
        a::CNT => {
            let r = &mut s.reduce;
            r.cnt_act[port] = rec.v(0) as u32;
            r.cnt_inact[port] = rec.v(1) as u32;
            r.inst[i].held |= rec.v(2) == 1;
        }
        a::PICK => {
            let comp = s.nbr[port].comp;
            let act = s.reduce.nbr_active.clone();
            let v = uniform_port(s, port, rng, |q| act[q] && comp.is_some() && s.nbr[q].comp == comp);
            if let Some(v) = v {
                let guess = (rec.v(1) == 1).then_some(rec.v(2) as Color);
                s.reduce.picks.push(Pick {
                    inst: i,
                    u_port: port as u32,
                    v_port: v as u32,
                    prio: rec.v(0) as u16,
                    guess,
                    go: false,
                });
            }
        }
        a::VID => s.reduce.inst[i].target = Some(rec.v(0) as u32),
        a::YES => s.reduce.inst[i].unique = false,
        _ => {}
    }
}

fn handle_b(s: &mut NodeState, rng: &mut NodeRng, port: usize, rec: Rec<'_>, o: &ReduceOpts) {
    let i = o.inst_of(&rec);
    match rec.kind {
        b::GO => {
            for p in s.reduce.picks.iter_mut().filter(|p| p.u_port == port as u32 && p.inst == i) {
                p.go = true;
            }
        }
        b::QRY => {
            let comp = s.nbr[port].comp;
            let act = s.reduce.nbr_active.clone();
            let w = uniform_port(s, port, rng, |q| !act[q] && comp.is_some() && s.nbr[q].comp == comp);
            if let Some(w) = w {
                s.reduce.relays.push(Relay {
                    inst: i,
                    u_port: port as u32,
                    w_port: w as u32,
                    prio: rec.v(1) as u16,
                    target: rec.v(0) as u32,
                });
            }
        }
        b::PROP => s.reduce.guesses.push((rec.v(0) as u16, rec.v(1) as u32, rec.v(2) as Color, i)),
        b::QRY2 => {
            let q = (rec.v(1) as u16, rec.v(0) as u32, port as u32);
            let best = &mut s.reduce.inst[i].best_q;
            if best.map_or(true, |b| q.0 > b.0) {
                *best = Some(q);
            }
        }
        b::ASK => s.reduce.inbox.push((port as u32, rec.v(0), i)),
        b::ASKR => s.reduce.inst[i].d2_hit = true,
        b::RET => {
            let (c, prio) = (rec.v(0) as Color, rec.v(1) as u16);
            if let Some(r) = s.reduce.relays.iter().find(|r| r.w_port == port as u32 && r.prio == prio && r.inst == i) {
                let u = r.u_port;
                s.reduce.outgoing.push((u, c, i));
            }
        }
        b::RET2 => {
            if let Some(x) = s.reduce.inst[i].pick_port {
                s.reduce.outgoing.push((x, rec.v(0) as Color, i));
            }
        }
        b::FWD => {
            let c = rec.v(0) as Color;
            let vs: Vec<u32> =
                s.reduce.picks.iter().filter(|p| p.u_port == port as u32 && p.inst == i).map(|p| p.v_port).collect();
            s.reduce.outgoing.extend(vs.into_iter().map(|v| (v, c, i)));
        }
        b::FWDV => s.reduce.forwarded.push((rec.v(0) as Color, i)),
        _ => {}
    }
}

/// Activation and one guess per instance for inactive core nodes.
fn start(s: &mut NodeState, rng: &mut NodeRng, ds: u32, w: &Widths, o: &ReduceOpts) {
    let deg = s.nbr.len();
    s.reduce.reset(deg, o.k);
    s.reduce.active = s.eligible() && s.comp.is_some() && rng.gen_bool(0.125);
    if s.reduce.active {
        s.mail.push_all(&Record::new(a::ACT));
    } else if s.core && ds > 0 {
        for i in 0..o.k {
            let g = match s.color {
                Some(own) => {
                    let x = rng.gen_range(0..ds);
                    if x >= own {
                        x + 1
                    } else {
                        x
                    }
                }
                None => rng.gen_range(0..=ds),
            };
            s.reduce.inst[i].guess = Some(g);
            s.mail.push_all(&o.tag(Record::new(a::CHK).with(Role::Color, g as u64, w.color), i));
        }
    }
}

/// Middle-node replies to helper candidates: active and inactive endpoint
/// counts in the candidate's component, and whether an Ĥ-neighbor of the
/// candidate reachable here holds its guess.
fn answer_candidates(s: &mut NodeState, w: &Widths, o: &ReduceOpts) {
    let inbox = std::mem::take(&mut s.reduce.inbox);
    for (p, c, i) in inbox {
        let p = p as usize;
        let comp = s.nbr[p].comp;
        if comp.is_none() {
            continue;
        }
        let c = c as Color;
        let (mut act, mut inact, mut held) = (0u64, 0u64, s.comp == comp && s.color == Some(c));
        for (q, nb) in s.nbr.iter().enumerate() {
            if q == p || nb.comp != comp {
                continue;
            }
            if s.reduce.nbr_active[q] {
                act += 1;
            } else {
                inact += 1;
            }
            held |= nb.color == Some(c);
        }
        let r = Record::new(a::CNT)
            .with(Role::Count, act, w.count)
            .with(Role::Count, inact, w.count)
            .with(Role::Flag, u64::from(held), 1);
        s.mail.push(p, o.tag(r, i));
    }
}

/// Runs one iteration and appends the proposals it made to `log`.
pub fn reduce_phase(sim: &mut Sim<'_>, log: &mut Vec<ProposalEvent>) -> Result<(), EngineError> {
    reduce_phase_with(sim, &ReduceOpts::default(), log)
}

/// [`reduce_phase`] with `k` instances and optional local ids. Proposal
/// events carry local ids in that case.
pub fn reduce_phase_with(sim: &mut Sim<'_>, o: &ReduceOpts, log: &mut Vec<ProposalEvent>) -> Result<(), EngineError> {
    let start_round = sim.net.round();
    let in_comp = sim.st.iter().any(|s| s.eligible() && s.comp.is_some());
    let outside = sim.st.iter().any(|s| s.eligible() && s.comp.is_none());
    let ds = sim.delta_sq;
    if in_comp {
        helpers(sim, o, log)?;
    }
    if in_comp || outside {
        try_colors(sim, |_, s, rng| {
            let mut picks = Picks::new();
            if s.comp.is_none() {
                picks.push(rng.gen_range(0..=ds));
                return picks;
            }
            let r = &s.reduce;
            if !r.active {
                return picks;
            }
            for i in 0..o.k {
                let best = r.guesses.iter().filter(|g| g.3 == i).max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(&x.1)));
                if let Some(&(_, _, c, _)) = best {
                    if !picks.contains(&c) {
                        picks.push(c);
                    }
                }
                let fw: Vec<Color> = r.forwarded.iter().filter(|f| f.1 == i).map(|f| f.0).collect();
                if !fw.is_empty() {
                    let c = fw[rng.gen_range(0..fw.len())];
                    if !picks.contains(&c) {
                        picks.push(c);
                    }
                }
            }
            picks
        })?;
    }
    let used = sim.net.round() - start_round;
    if used < ROUNDS {
        sim.net.idle(&mut sim.st, ROUNDS - used)?;
    }
    Ok(())
}

fn helpers(sim: &mut Sim<'_>, o: &ReduceOpts, log: &mut Vec<ProposalEvent>) -> Result<(), EngineError> {
    let ds = sim.delta_sq;
    let agg = AggRun { op: AggOp::Sum, width: sim.w.local };
    let idw = o.id_width(&sim.w);

    // Rounds 1-8: aggregation of φ, overlapped with endpoint counting,
    // path choice and the uniqueness check.
    for round in 0..AggRun::ROUNDS {
        sim.local(|_, s, rng, w| {
            match round {
                0 => {
                    start(s, rng, ds, w, o);
                    let own = Some(u64::from(s.reduce.active));
                    agg.init(s, own);
                }
                1 => answer_candidates(s, w, o),
                2 => {
                    s.reduce.phi_u = s.reduce.cnt_act.iter().map(|&c| c as u64).sum();
                    for i in 0..o.k {
                        let Some(g) = s.reduce.inst[i].guess else { continue };
                        let Some(x) = weighted_port(&s.reduce.cnt_act, rng) else { continue };
                        let prio: u16 = rng.gen();
                        let held = s.reduce.inst[i].held;
                        let r = Record::new(a::PICK)
                            .with(Role::Priority, prio as u64, w.prio)
                            .with(Role::Flag, u64::from(!held), 1)
                            .with(Role::Color, g as u64, w.color);
                        s.mail.push(x, o.tag(r, i));
                        let it = &mut s.reduce.inst[i];
                        it.pick_port = Some(x as u32);
                        it.unique = true;
                    }
                }
                3 => {
                    for j in 0..s.reduce.picks.len() {
                        let p = &s.reduce.picks[j];
                        let (u, i) = (p.u_port as usize, p.inst);
                        if let Some(id) = o.ident(s, p.v_port as usize) {
                            let r = Record::new(a::VID).with(o.id_role(), id as u64, idw);
                            s.mail.push(u, o.tag(r, i));
                        }
                    }
                }
                4 => {
                    for i in 0..o.k {
                        let it = &s.reduce.inst[i];
                        if let (Some(x), Some(v)) = (it.pick_port, it.target) {
                            let r = o.tag(Record::new(a::Q).with(o.id_role(), v as u64, idw), i);
                            for q in 0..s.nbr.len() {
                                if q != x as usize {
                                    s.mail.push(q, r.clone());
                                }
                            }
                        }
                    }
                }
                5 => {
                    let inbox = std::mem::take(&mut s.reduce.inbox);
                    for (p, id, i) in inbox {
                        let comp = s.nbr[p as usize].comp;
                        if o.knows(s, comp, id as u32) {
                            s.mail.push(p as usize, o.tag(Record::new(a::YES), i));
                        }
                    }
                }
                _ => {}
            }
            agg.queue(round, s, w);
        });
        sim.rounds(1, |_, s, rng, port, rec, _| handle_a(s, rng, port, rec, &agg, o))?;
    }

    // Coin flip against φ, then Step 4 delivery and the Step 5 query.
    sim.local(|_, s, rng, w| {
        let phi = agg.result(s).unwrap_or(0);
        let phi_u = s.reduce.phi_u;
        for i in 0..o.k {
            let it = &s.reduce.inst[i];
            let (Some(x), Some(v)) = (it.pick_port, it.target) else { continue };
            if !it.unique || phi == 0 {
                continue;
            }
            let held = it.held;
            if phi_u < 4 * phi && !rng.gen_bool(phi_u as f64 / (4 * phi) as f64) {
                continue;
            }
            if !held {
                s.mail.push(x as usize, o.tag(Record::new(b::GO), i));
            }
            if let Some(y) = weighted_port(&s.reduce.cnt_inact, rng) {
                let prio: u16 = rng.gen();
                let r = Record::new(b::QRY).with(o.id_role(), v as u64, idw).with(Role::Priority, prio as u64, w.prio);
                s.mail.push(y, o.tag(r, i));
            }
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;

    sim.local(|ctx, s, _, w| {
        for p in &s.reduce.picks {
            if let (true, Some(c)) = (p.go, p.guess) {
                let Some(origin) = o.ident(s, p.u_port as usize) else { continue };
                let r = Record::new(b::PROP)
                    .with(Role::Priority, p.prio as u64, w.prio)
                    .with(o.id_role(), origin as u64, idw)
                    .with(Role::Color, c as u64, w.color);
                s.mail.push(p.v_port as usize, o.tag(r, p.inst));
                log.push(ProposalEvent {
                    round: ctx.round,
                    kind: ProposalKind::Guess,
                    origin,
                    target: o.ident(s, p.v_port as usize).unwrap_or(u32::MAX),
                    color: c,
                    priority: p.prio,
                });
            }
        }
        for r in &s.reduce.relays {
            let rec = Record::new(b::QRY2).with(o.id_role(), r.target as u64, idw).with(Role::Priority, r.prio as u64, w.prio);
            s.mail.push(r.w_port as usize, o.tag(rec, r.inst));
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;

    // Step 6: the queried node checks whether `v` is a d2-neighbor.
    sim.local(|_, s, _, _| {
        let own = o.own_ident(s);
        let comp = s.comp;
        for i in 0..o.k {
            let Some((_, v, _)) = s.reduce.inst[i].best_q else { continue };
            if s.color.is_none() || Some(v) == own || o.knows(s, comp, v) {
                s.reduce.inst[i].best_q = None;
                continue;
            }
            s.reduce.inst[i].asked = true;
            let r = o.tag(Record::new(b::ASK).with(o.id_role(), v as u64, idw), i);
            s.mail.push_all(&r);
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;
    sim.local(|_, s, _, _| {
        let inbox = std::mem::take(&mut s.reduce.inbox);
        for (p, id, i) in inbox {
            let comp = s.nbr[p as usize].comp;
            if o.knows(s, comp, id as u32) {
                s.mail.push(p as usize, o.tag(Record::new(b::ASKR), i));
            }
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;
    sim.local(|ctx, s, _, w| {
        let origin = o.own_ident(s).unwrap_or(u32::MAX);
        for i in 0..o.k {
            let it = &s.reduce.inst[i];
            if let (true, false, Some((prio, v, y)), Some(c)) = (it.asked, it.d2_hit, it.best_q, s.color) {
                let r = Record::new(b::RET).with(Role::Color, c as u64, w.color).with(Role::Priority, prio as u64, w.prio);
                s.mail.push(y as usize, o.tag(r, i));
                log.push(ProposalEvent { round: ctx.round, kind: ProposalKind::Forwarded, origin, target: v, color: c, priority: prio });
            }
        }
    });
    sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;

    // Return path w -> y -> u -> x -> v.
    for kind in [b::RET2, b::FWD, b::FWDV] {
        sim.local(|_, s, _, w| {
            for (p, c, i) in std::mem::take(&mut s.reduce.outgoing) {
                s.mail.push(p as usize, o.tag(Record::new(kind).with(Role::Color, c as u64, w.color), i));
            }
        });
        sim.rounds(1, |_, s, rng, port, rec, _| handle_b(s, rng, port, rec, o))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_instances_fit_the_budget() {
        // n = 4096, Δ = 64: B = 96, ids in the local space of 2Δ² = 8192.
        let w = Widths::new(4096, 64, 4);
        assert_eq!((w.local, w.color, w.prio), (13, 13, 16));
        let k = ReduceOpts::max_parallel(96, &w, true);
        let o = ReduceOpts { k, local_ids: true };
        assert_eq!(k, 1);
        assert!(k as u32 * o.instance_bits(&w) + TAG_BITS <= 96);
        let w = Widths::new(4096, 8, 4);
        let k = ReduceOpts::max_parallel(96, &w, true);
        assert_eq!(k, 2);
    }
}

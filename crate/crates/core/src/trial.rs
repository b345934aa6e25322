//! Color trials: validate-and-contest (`tryColor`) and the merged informed trial.

use smallvec::SmallVec;

use crate::engine::mailbox::Record;
use crate::engine::message::Role;
use crate::engine::rng::NodeRng;
use crate::engine::{EngineError, NodeCtx};
use crate::state::{NodeState, Sim};
use crate::Color;

mod k {
    pub const VAL: u8 = 1;
    pub const NACK: u8 = 2;
    pub const CON: u8 = 3;
    pub const CNACK: u8 = 4;
    pub const TRY: u8 = 5;
}

pub type Picks = SmallVec<[Color; 4]>;

fn color_rec(kind: u8, c: Color, width: u8) -> Record {
    Record::new(kind).with(Role::Color, c as u64, width)
}

/// Validation then contest for the colors each live node picks, followed by
/// adoption of the first surviving color and its announcement. Five rounds
/// when every request fits in one message. Returns the number of adoptions.
pub fn try_colors(
    sim: &mut Sim<'_>,
    mut pick: impl FnMut(&NodeCtx, &mut NodeState, &mut NodeRng) -> Picks,
) -> Result<usize, EngineError> {
    sim.local(|ctx, s, rng, w| {
        s.trial.trying.clear();
        s.trial.survivors.clear();
        if !s.eligible() {
            return;
        }
        let mut picks = pick(ctx, s, rng);
        picks.dedup();
        for &c in &picks {
            s.mail.push_all(&color_rec(k::VAL, c, w.color));
        }
        s.trial.trying = picks.clone();
        s.trial.survivors = picks;
    });
    validate_round(sim)?;
    contest_rounds(sim)?;
    Ok(adopt_survivors(sim)?)
}

/// Rounds 1-2: neighbors reject colors they or their other neighbors hold.
fn validate_round(sim: &mut Sim<'_>) -> Result<(), EngineError> {
    sim.rounds(2, |_, s, _, port, rec, w| match rec.kind {
        k::VAL => {
            let c = rec.v(0) as Color;
            if s.holds_near(c, Some(port)) {
                s.mail.push(port, color_rec(k::NACK, c, w.color));
            }
        }
        k::NACK => {
            let c = rec.v(0) as Color;
            s.trial.survivors.retain(|x| *x != c);
            s.strike(c);
        }
        _ => {}
    })?;
    Ok(())
}

/// Rounds 3-4: neighbors reject colors contested by someone else too.
fn contest_rounds(sim: &mut Sim<'_>) -> Result<(), EngineError> {
    sim.local(|_, s, _, w| {
        for &c in &s.trial.survivors {
            s.mail.push_all(&color_rec(k::CON, c, w.color));
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::CON {
            s.trial.cons_in.push((port as u32, rec.v(0) as Color));
        }
    })?;
    sim.local(|_, s, _, w| {
        let cons = std::mem::take(&mut s.trial.cons_in);
        for &(port, c) in &cons {
            let clash = s.trial.survivors.contains(&c) || cons.iter().any(|&(q, d)| q != port && d == c);
            if clash {
                s.mail.push(port as usize, color_rec(k::CNACK, c, w.color));
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::CNACK {
            let c = rec.v(0) as Color;
            s.trial.survivors.retain(|x| *x != c);
        }
    })?;
    Ok(())
}

fn adopt_survivors(sim: &mut Sim<'_>) -> Result<usize, EngineError> {
    let mut adopted = 0;
    sim.local(|_, s, _, w| {
        if s.eligible() {
            if let Some(&c) = s.trial.survivors.first() {
                s.adopt(c, w);
                adopted += 1;
            }
        }
        s.trial.trying.clear();
        s.trial.survivors.clear();
    });
    sim.flush(1)?;
    Ok(adopted)
}

/// Informed trial: one request round in which neighbors reject colors that
/// are held nearby or requested by someone else, one reply round, and one
/// announcement round. Safe whenever neighbor tables are current.
pub fn informed_trial(
    sim: &mut Sim<'_>,
    mut pick: impl FnMut(&NodeCtx, &mut NodeState, &mut NodeRng) -> Option<Color>,
) -> Result<usize, EngineError> {
    sim.local(|ctx, s, rng, w| {
        s.trial.survivors.clear();
        if !s.eligible() {
            return;
        }
        if let Some(c) = pick(ctx, s, rng) {
            s.mail.push_all(&color_rec(k::TRY, c, w.color));
            s.trial.survivors.push(c);
        }
    });
    sim.rounds(1, |_, s, _, port, rec, _| {
        if rec.kind == k::TRY {
            s.trial.cons_in.push((port as u32, rec.v(0) as Color));
        }
    })?;
    sim.local(|_, s, _, w| {
        let cons = std::mem::take(&mut s.trial.cons_in);
        for &(port, c) in &cons {
            let held = s.holds_near(c, Some(port as usize));
            let clash = s.trial.survivors.contains(&c)
                || cons.iter().any(|&(q, d)| q != port && d == c);
            if held || clash {
                let r = color_rec(k::NACK, c, w.color).with(Role::Flag, u64::from(held), 1);
                s.mail.push(port as usize, r);
            }
        }
    });
    sim.rounds(1, |_, s, _, _, rec, _| {
        if rec.kind == k::NACK {
            let c = rec.v(0) as Color;
            s.trial.survivors.retain(|x| *x != c);
            if rec.v(1) == 1 {
                s.strike(c);
            }
        }
    })?;
    adopt_survivors(sim)
}

//! Convergecast and broadcast over the depth-4 component trees.

use crate::engine::mailbox::Record;
use crate::engine::message::{Rec, Role};
use crate::engine::EngineError;
use crate::state::{NodeState, Sim, Widths};

const UP: u8 = 11;
const DOWN: u8 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggOp {
    Sum,
    Min,
    Count,
}

impl AggOp {
    fn identity(self) -> u64 {
        match self {
            AggOp::Min => u64::MAX,
            _ => 0,
        }
    }

    fn join(self, a: u64, b: u64) -> u64 {
        match self {
            AggOp::Min => a.min(b),
            _ => a + b,
        }
    }
}

/// One aggregation driven round by round, so other traffic can share its
/// eight rounds. Call [`AggRun::init`] and [`AggRun::queue`]`(0)` in the
/// same local step, then `queue(i)` before each following round.
#[derive(Clone, Copy, Debug)]
pub struct AggRun {
    pub op: AggOp,
    pub width: u8,
}

impl AggRun {
    pub const ROUNDS: usize = 8;

    pub fn init(&self, s: &mut NodeState, value: Option<u64>) {
        let own = match (s.comp, value) {
            (Some(_), Some(x)) => match self.op {
                AggOp::Count => u64::from(x != 0),
                _ => x,
            },
            _ => self.op.identity(),
        };
        let comp = s.comp;
        for t in s.trees.iter_mut() {
            t.acc = if Some(t.comp) == comp { own } else { self.op.identity() };
            t.result = None;
        }
    }

    /// Queues this node's records for aggregation round `i`.
    pub fn queue(&self, i: usize, s: &mut NodeState, w: &Widths) {
        if i < 4 {
            let depth = 4 - i as u8;
            for t in s.trees.iter().filter(|t| t.depth == depth) {
                let r = Record::new(UP).with(Role::Id, t.comp as u64, w.id).with(
                    Role::Value,
                    t.acc.min(mask(self.width)),
                    self.width,
                );
                s.mail.push(t.parent.expect("non-root has parent") as usize, r);
            }
        } else if i < Self::ROUNDS {
            let depth = i as u8 - 4;
            for t in s.trees.iter_mut().filter(|t| t.depth == depth) {
                if depth == 0 {
                    t.result = Some(t.acc);
                }
                if let Some(x) = t.result {
                    let r = Record::new(DOWN).with(Role::Id, t.comp as u64, w.id).with(
                        Role::Value,
                        x.min(mask(self.width)),
                        self.width,
                    );
                    for &c in &t.children {
                        s.mail.push(c as usize, r.clone());
                    }
                }
            }
        }
    }

    /// Consumes an aggregation record; false for other kinds.
    pub fn absorb(&self, s: &mut NodeState, rec: &Rec<'_>) -> bool {
        match rec.kind {
            UP => {
                if let Some(t) = s.tree_mut(rec.v(0) as u32) {
                    t.acc = self.op.join(t.acc, rec.v(1));
                }
                true
            }
            DOWN => {
                if let Some(t) = s.tree_mut(rec.v(0) as u32) {
                    t.result = Some(rec.v(1));
                }
                true
            }
            _ => false,
        }
    }

    /// Component total as seen by a member, once all rounds ran.
    pub fn result(&self, s: &NodeState) -> Option<u64> {
        s.comp.and_then(|c| s.tree(c)).and_then(|t| t.result)
    }
}

/// Folds `value` over each extended component in 4 rounds up and 4 rounds
/// down. Every tree node ends with the component total in its link; the
/// return value holds it for members, indexed by node.
pub fn aggregate_over_component(
    sim: &mut Sim<'_>,
    value: impl Fn(&NodeState) -> Option<u64>,
    op: AggOp,
    width: u8,
) -> Result<Vec<Option<u64>>, EngineError> {
    let run = AggRun { op, width };
    for i in 0..AggRun::ROUNDS {
        sim.local(|_, s, _, w| {
            if i == 0 {
                let x = value(s);
                run.init(s, x);
            }
            run.queue(i, s, w);
        });
        sim.rounds(1, |_, s, _, _, rec, _| {
            run.absorb(s, &rec);
        })?;
    }
    Ok(sim.st.iter().map(|s| run.result(s)).collect())
}

fn mask(width: u8) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

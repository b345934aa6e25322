//! Per-node coloring state and the simulation wrapper shared by all phases.

use smallvec::SmallVec;

use crate::engine::mailbox::{Mailbox, Record};
use crate::engine::message::{width_for, Rec, Role};
use crate::engine::rng::NodeRng;
use crate::engine::{EngineConfig, EngineError, Network, NodeCtx, NodeLike, Stop};
use crate::graph::Graph;
use crate::Color;

/// Record kinds handled before any phase handler sees them.
pub mod kind {
    /// Sender adopted a color.
    pub const ANN: u8 = 15;
    /// A color adopted two hops away.
    pub const NOTE: u8 = 14;
    /// Sender has a notification backlog.
    pub const BUSY: u8 = 13;
}

/// Declared bit widths of every field role.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub id: u8,
    pub color: u8,
    pub hash: u8,
    pub local: u8,
    pub prio: u8,
    pub count: u8,
    /// Width of similarity keys: ids, or hashes once hashing ran.
    pub key: u8,
}

impl Widths {
    pub fn new(n: usize, delta: usize, eta: u64) -> Self {
        let ds = (delta * delta) as u64;
        let id = width_for(n as u64);
        Widths {
            id,
            color: width_for(ds + 1),
            hash: width_for((eta * ds * ds).max(2)),
            local: width_for((2 * ds).max(2)),
            prio: 16,
            count: width_for(ds + 1),
            key: id,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NbrInfo {
    pub id: u32,
    pub key: u64,
    pub color: Option<Color>,
    /// Extended component of the neighbor (leader id).
    pub comp: Option<u32>,
    pub core: bool,
    pub local_id: Option<u32>,
    pub class: u8,
    pub busy: bool,
    pub post_colored: bool,
}

/// One spanning-tree membership; a node may relay for several trees.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeLink {
    pub comp: u32,
    pub parent: Option<u32>,
    pub children: SmallVec<[u32; 4]>,
    pub depth: u8,
    pub acc: u64,
    pub result: Option<u64>,
}

/// Scratch for joint color trials.
#[derive(Clone, Debug, Default)]
pub struct TrialScratch {
    pub trying: SmallVec<[Color; 4]>,
    pub survivors: SmallVec<[Color; 4]>,
    pub cons_in: Vec<(u32, Color)>,
    /// Sit out the next finishing trial.
    pub quiet: bool,
}

#[derive(Clone, Debug, Default)]
pub struct NodeState {
    pub id: u32,
    pub key: u64,
    pub color: Option<Color>,
    pub mail: Mailbox,
    pub nbr: Vec<NbrInfo>,
    adoption: Option<Color>,
    /// Relay adoptions of neighbors two hops as background notes.
    pub forward_notes: bool,
    /// Learned palette, sorted; `None` means not learned.
    pub palette: Option<Vec<Color>>,
    /// Colors of d2-neighbors reported by notes, as `(id, color)`.
    pub d2_colors: Vec<(u32, Color)>,
    pub comp: Option<u32>,
    pub core: bool,
    pub trees: SmallVec<[TreeLink; 2]>,
    pub local_id: Option<u32>,
    /// Degree class: 0 unassigned, 1 low, 2 high.
    pub class: u8,
    pub post_colored: bool,
    /// Held out of trials and learning while another class is processed.
    pub frozen: bool,
    pub trial: TrialScratch,
    pub acd: crate::acd::AcdScratch,
    pub reduce: crate::log::reduce::ReduceScratch,
    pub learn: crate::log::learn::LearnScratch,
    pub sub: crate::sublog::SubScratch,
}

impl NodeLike for NodeState {
    fn mailbox(&mut self) -> &mut Mailbox {
        &mut self.mail
    }

    fn mailbox_ref(&self) -> &Mailbox {
        &self.mail
    }

    fn take_adoption(&mut self) -> Option<Color> {
        self.adoption.take()
    }
}

impl NodeState {
    pub fn new(id: u32, degree: usize) -> Self {
        NodeState {
            id,
            key: id as u64,
            mail: Mailbox::new(degree),
            nbr: vec![NbrInfo::default(); degree],
            ..Default::default()
        }
    }

    pub fn live(&self) -> bool {
        self.color.is_none()
    }

    /// Live and taking part in the current phase.
    pub fn eligible(&self) -> bool {
        self.color.is_none() && !self.frozen
    }

    /// Adopts `c` and announces it to all neighbors.
    pub fn adopt(&mut self, c: Color, w: &Widths) {
        debug_assert!(self.color.is_none(), "node {} recolored", self.id);
        self.color = Some(c);
        self.adoption = Some(c);
        self.palette = None;
        let post = u64::from(self.post_colored);
        self.mail.push_all(&Record::new(kind::ANN).with(Role::Color, c as u64, w.color).with(Role::Flag, post, 1));
    }

    /// Whether `c` is held by this node or a neighbor other than `except`.
    pub fn holds_near(&self, c: Color, except: Option<usize>) -> bool {
        self.color == Some(c) || self.nbr.iter().enumerate().any(|(p, nb)| Some(p) != except && nb.color == Some(c))
    }

    pub fn strike(&mut self, c: Color) {
        if let Some(pal) = self.palette.as_mut() {
            if let Ok(i) = pal.binary_search(&c) {
                pal.remove(i);
            }
        }
    }

    pub fn tree(&self, comp: u32) -> Option<&TreeLink> {
        self.trees.iter().find(|t| t.comp == comp)
    }

    pub fn tree_mut(&mut self, comp: u32) -> Option<&mut TreeLink> {
        self.trees.iter_mut().find(|t| t.comp == comp)
    }

    /// Ports of neighbors in the same extended component.
    pub fn comp_ports(&self) -> impl Iterator<Item = usize> + '_ {
        let c = self.comp;
        self.nbr.iter().enumerate().filter(move |(_, nb)| c.is_some() && nb.comp == c).map(|(p, _)| p)
    }

    fn record_d2_color(&mut self, id: u32, c: Color) {
        if let Err(i) = self.d2_colors.binary_search_by_key(&id, |&(x, _)| x) {
            self.d2_colors.insert(i, (id, c));
        }
    }

    fn absorb_common(&mut self, port: usize, rec: &Rec<'_>, w: &Widths) -> bool {
        match rec.kind {
            kind::ANN => {
                let c = rec.v(0) as Color;
                self.nbr[port].color = Some(c);
                self.nbr[port].post_colored = rec.v(1) == 1;
                self.strike(c);
                let id = self.nbr[port].id;
                self.record_d2_color(id, c);
                if self.forward_notes {
                    let note = Record::new(kind::NOTE).with(Role::Id, id as u64, w.id).with(Role::Color, c as u64, w.color);
                    for q in 0..self.nbr.len() {
                        if q != port {
                            self.mail.push_background(q, note.clone());
                        }
                    }
                }
                true
            }
            kind::NOTE => {
                let id = rec.v(0) as u32;
                let c = rec.v(1) as Color;
                if id != self.id {
                    self.strike(c);
                    self.record_d2_color(id, c);
                }
                true
            }
            kind::BUSY => {
                self.nbr[port].busy = true;
                true
            }
            _ => false,
        }
    }
}

/// Network plus node states, widths and palette size.
pub struct Sim<'g> {
    pub g: &'g Graph,
    pub net: Network<'g>,
    pub st: Vec<NodeState>,
    pub w: Widths,
    pub delta_sq: u32,
    pub log_n: u32,
}

impl<'g> Sim<'g> {
    pub fn new(g: &'g Graph, cfg: EngineConfig, seed: u64, eta: u64) -> Self {
        let st = (0..g.n()).map(|v| NodeState::new(v as u32, g.degree(v))).collect();
        Sim {
            g,
            net: Network::new(g, cfg, seed),
            st,
            w: Widths::new(g.n(), g.max_degree(), eta),
            delta_sq: g.delta_sq() as u32,
            log_n: crate::engine::message::log2_ceil(g.n()),
        }
    }

    pub fn phase(&mut self, p: impl Into<String>) {
        self.net.set_phase(p);
    }

    /// Mailbox rounds with common records absorbed first.
    pub fn step(
        &mut self,
        stop: Stop,
        mut f: impl FnMut(&NodeCtx, &mut NodeState, &mut NodeRng, usize, Rec<'_>, &Widths),
    ) -> Result<u64, EngineError> {
        let w = self.w;
        self.net.step(&mut self.st, stop, |ctx, s, rng, port, rec| {
            if !s.absorb_common(port, &rec, &w) {
                f(ctx, s, rng, port, rec, &w)
            }
        })
    }

    /// Exactly one round of delivery followed by `min - 1` more, extended
    /// while urgent records remain.
    pub fn rounds(
        &mut self,
        min: u64,
        f: impl FnMut(&NodeCtx, &mut NodeState, &mut NodeRng, usize, Rec<'_>, &Widths),
    ) -> Result<u64, EngineError> {
        self.step(Stop::Quiet { min }, f)
    }

    /// Delivers pending common records only.
    pub fn flush(&mut self, min: u64) -> Result<u64, EngineError> {
        self.rounds(min, |_, _, _, _, _, _| {})
    }

    /// Delivers everything, background included.
    pub fn drain(&mut self, min: u64) -> Result<u64, EngineError> {
        self.step(Stop::Drain { min }, |_, _, _, _, _, _| {})
    }

    pub fn local(&mut self, mut f: impl FnMut(&NodeCtx, &mut NodeState, &mut NodeRng, &Widths)) {
        let w = self.w;
        self.net.local(&mut self.st, |ctx, s, rng| f(ctx, s, rng, &w));
    }

    pub fn live_count(&self) -> usize {
        self.st.iter().filter(|s| s.live()).count()
    }

    pub fn eligible_count(&self) -> usize {
        self.st.iter().filter(|s| s.eligible()).count()
    }

    pub fn coloring(&self) -> Vec<Option<Color>> {
        self.st.iter().map(|s| s.color).collect()
    }

    /// One round in which every node tells its neighbors its id and key.
    pub fn hello(&mut self) -> Result<(), EngineError> {
        const HELLO: u8 = 0;
        self.local(|_, s, _, w| {
            let r = Record::new(HELLO).with(Role::Id, s.id as u64, w.id);
            s.mail.push_all(&r);
        });
        self.rounds(1, |_, s, _, port, rec, _| {
            if rec.kind == HELLO {
                s.nbr[port].id = rec.v(0) as u32;
                s.nbr[port].key = rec.v(0);
            }
        })?;
        Ok(())
    }
}

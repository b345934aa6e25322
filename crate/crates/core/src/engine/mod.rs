//! Synchronous CONGEST round simulator.
//!
//! Nodes run in id order and messages are delivered at round boundaries in
//! sender order, so a run is a pure function of (graph, config, seed).

pub mod mailbox;
pub mod message;
pub mod rng;
pub mod transcript;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::Color;
use mailbox::Mailbox;
use message::{log2_ceil, Budget, Message, Rec};
use transcript::{RoundRecord, Transcript, Violation};

pub use rng::{random_stream, NodeRng};

/// What a node may know about itself and the network.
#[derive(Clone, Copy, Debug)]
pub struct NodeCtx {
    pub node: usize,
    pub degree: usize,
    pub n: usize,
    pub delta: usize,
    pub round: u64,
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize)]
pub enum EngineError {
    #[error("budget violation on edge {from}->{to} in round {round}: {bits} bits > {budget}")]
    BudgetViolation { from: u32, to: u32, round: u64, bits: u32, budget: u32 },
    #[error("round cap {cap} exceeded")]
    RoundCapExceeded { cap: u64 },
    #[error("second message on port {port} of node {node} in one round")]
    DoubleSend { node: u32, port: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub c_b: u32,
    /// `None` selects `64 * ceil(log2 n) * 32`.
    pub round_cap: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { c_b: 8, round_cap: None }
    }
}

impl EngineConfig {
    pub fn cap_for(&self, n: usize) -> u64 {
        self.round_cap.unwrap_or(64 * log2_ceil(n) as u64 * (24 + 8))
    }
}

/// Per-node state hooks the engine needs.
pub trait NodeLike {
    fn mailbox(&mut self) -> &mut Mailbox;
    fn mailbox_ref(&self) -> &Mailbox;
    /// Color adopted since the last call, if any.
    fn take_adoption(&mut self) -> Option<Color>;
}

/// When a mailbox-driven step ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    /// At least `min` rounds, then until no urgent record is queued anywhere.
    Quiet { min: u64 },
    /// At least `min` rounds, then until every queue is empty.
    Drain { min: u64 },
}

/// One message slot per port for the raw round API.
pub struct Outbox {
    slots: Vec<Option<Message>>,
    node: usize,
    error: Option<EngineError>,
}

impl Outbox {
    pub fn send(&mut self, port: usize, msg: Message) {
        if self.slots[port].is_some() {
            self.error.get_or_insert(EngineError::DoubleSend { node: self.node as u32, port: port as u32 });
        }
        self.slots[port] = Some(msg);
    }

    pub fn broadcast(&mut self, msg: &Message) {
        for p in 0..self.slots.len() {
            self.send(p, msg.clone());
        }
    }

    pub fn degree(&self) -> usize {
        self.slots.len()
    }
}

pub struct Network<'g> {
    g: &'g Graph,
    pub budget: Budget,
    seed: u64,
    round: u64,
    cap: u64,
    salt: u64,
    phase: String,
    transcript: Transcript,
    inbox: Vec<Vec<(u32, Message)>>,
    pending: Vec<(u32, u32)>,
}

impl<'g> Network<'g> {
    pub fn new(g: &'g Graph, cfg: EngineConfig, seed: u64) -> Self {
        Network {
            g,
            budget: Budget::for_n(g.n(), cfg.c_b),
            seed,
            round: 0,
            cap: cfg.cap_for(g.n()),
            salt: 0,
            phase: String::new(),
            transcript: Transcript::default(),
            inbox: vec![Vec::new(); g.n()],
            pending: Vec::new(),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn set_phase(&mut self, phase: impl Into<String>) {
        self.phase = phase.into();
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(mut self) -> Transcript {
        self.flush_pending();
        self.transcript
    }

    fn ctx(&self, v: usize) -> NodeCtx {
        NodeCtx { node: v, degree: self.g.degree(v), n: self.g.n(), delta: self.g.max_degree(), round: self.round }
    }

    fn collect_adoptions<S: NodeLike>(&mut self, states: &mut [S]) {
        for (v, s) in states.iter_mut().enumerate() {
            if let Some(c) = s.take_adoption() {
                self.pending.push((v as u32, c));
            }
        }
    }

    fn flush_pending(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let adds = std::mem::take(&mut self.pending);
        match self.transcript.records.last_mut() {
            Some(r) => r.adoptions.extend(adds),
            None => self.transcript.records.push(RoundRecord {
                round: 0,
                max_edge_bits: 0,
                total_bits: 0,
                adoptions: adds,
                phase: self.phase.clone(),
            }),
        }
    }

    fn begin_round(&mut self) -> Result<(), EngineError> {
        self.flush_pending();
        if self.round >= self.cap {
            return Err(EngineError::RoundCapExceeded { cap: self.cap });
        }
        self.round += 1;
        Ok(())
    }

    fn deliver(&mut self, from: usize, port: usize, msg: Message, stats: &mut (u32, u64)) -> Result<(), EngineError> {
        let bits = msg.total_bits();
        let to = self.g.neighbors(from)[port] as usize;
        if let Err(o) = self.budget.check(&msg) {
            let v = Violation { from: from as u32, to: to as u32, round: self.round, bits: o.bits, budget: o.budget };
            self.transcript.violations.push(v);
            return Err(EngineError::BudgetViolation {
                from: from as u32,
                to: to as u32,
                round: self.round,
                bits: o.bits,
                budget: o.budget,
            });
        }
        stats.0 = stats.0.max(bits);
        stats.1 += bits as u64;
        let back = self.g.reverse_port(from, port) as u32;
        self.inbox[to].push((back, msg));
        Ok(())
    }

    fn end_round<S: NodeLike>(&mut self, states: &mut [S], stats: (u32, u64)) {
        let mut adoptions = std::mem::take(&mut self.pending);
        for (v, s) in states.iter_mut().enumerate() {
            if let Some(c) = s.take_adoption() {
                adoptions.push((v as u32, c));
            }
        }
        self.transcript.records.push(RoundRecord {
            round: self.round,
            max_edge_bits: stats.0,
            total_bits: stats.1,
            adoptions,
            phase: self.phase.clone(),
        });
    }

    /// One raw round: every node fills an outbox, then every node reads the
    /// messages that arrived on its ports as `(port, message)` pairs.
    pub fn exchange<S: NodeLike>(
        &mut self,
        states: &mut [S],
        mut send: impl FnMut(&NodeCtx, &mut S, &mut NodeRng, &mut Outbox),
        mut recv: impl FnMut(&NodeCtx, &mut S, &[(u32, Message)]),
    ) -> Result<(), EngineError> {
        self.begin_round()?;
        let mut stats = (0u32, 0u64);
        for v in 0..states.len() {
            let ctx = self.ctx(v);
            let mut rng = NodeRng::new(self.seed, v, self.round, 1);
            let mut out = Outbox { slots: vec![None; ctx.degree], node: v, error: None };
            send(&ctx, &mut states[v], &mut rng, &mut out);
            if let Some(e) = out.error {
                return Err(e);
            }
            for (port, m) in out.slots.into_iter().enumerate() {
                if let Some(m) = m {
                    self.deliver(v, port, m, &mut stats)?;
                }
            }
        }
        for v in 0..states.len() {
            let ctx = self.ctx(v);
            let inbox = std::mem::take(&mut self.inbox[v]);
            recv(&ctx, &mut states[v], &inbox);
            let mut inbox = inbox;
            inbox.clear();
            self.inbox[v] = inbox;
        }
        self.end_round(states, stats);
        Ok(())
    }

    /// Runs mailbox rounds until `stop` holds, calling `handler` once per
    /// received record. Returns the number of rounds used.
    pub fn step<S: NodeLike>(
        &mut self,
        states: &mut [S],
        stop: Stop,
        mut handler: impl FnMut(&NodeCtx, &mut S, &mut NodeRng, usize, Rec<'_>),
    ) -> Result<u64, EngineError> {
        let mut used = 0u64;
        loop {
            let (min, drain) = match stop {
                Stop::Quiet { min } => (min, false),
                Stop::Drain { min } => (min, true),
            };
            if used >= min {
                let busy = states
                    .iter()
                    .any(|s| if drain { !s.mailbox_ref().is_empty() } else { s.mailbox_ref().has_urgent() });
                if !busy {
                    return Ok(used);
                }
            }
            self.begin_round()?;
            let mut stats = (0u32, 0u64);
            let bits = self.budget.bits;
            for v in 0..states.len() {
                if states[v].mailbox_ref().is_empty() {
                    continue;
                }
                for port in 0..self.g.degree(v) {
                    if let Some(m) = states[v].mailbox().pack(port, bits) {
                        self.deliver(v, port, m, &mut stats)?;
                    }
                }
            }
            for v in 0..states.len() {
                if self.inbox[v].is_empty() {
                    continue;
                }
                let ctx = self.ctx(v);
                let mut rng = NodeRng::new(self.seed, v, self.round, 2);
                let inbox = std::mem::take(&mut self.inbox[v]);
                for (port, msg) in &inbox {
                    for rec in msg.records() {
                        handler(&ctx, &mut states[v], &mut rng, *port as usize, rec);
                    }
                }
                let mut inbox = inbox;
                inbox.clear();
                self.inbox[v] = inbox;
            }
            self.end_round(states, stats);
            used += 1;
        }
    }

    /// Node-local computation between rounds; no communication.
    pub fn local<S: NodeLike>(&mut self, states: &mut [S], mut f: impl FnMut(&NodeCtx, &mut S, &mut NodeRng)) {
        self.salt += 1;
        for v in 0..states.len() {
            let ctx = self.ctx(v);
            let mut rng = NodeRng::new(self.seed, v, self.round, 1000 + self.salt);
            f(&ctx, &mut states[v], &mut rng);
        }
        self.collect_adoptions(states);
    }

    /// Consumes a round with no traffic, keeping fixed-length schedules exact.
    pub fn idle<S: NodeLike>(&mut self, states: &mut [S], rounds: u64) -> Result<(), EngineError> {
        for _ in 0..rounds {
            self.begin_round()?;
            self.end_round(states, (0, 0));
        }
        Ok(())
    }
}

/// A self-contained node program for [`simulate`].
pub trait NodeProgram {
    type State: NodeLike;
    fn init(&self, ctx: &NodeCtx) -> Self::State;
    fn send(&self, ctx: &NodeCtx, state: &mut Self::State, rng: &mut NodeRng, out: &mut Outbox);
    fn receive(&self, ctx: &NodeCtx, state: &mut Self::State, inbox: &[(u32, Message)]);
    fn done(&self, state: &Self::State) -> bool;
}

/// Runs `program` until every node reports done, returning final states.
pub fn simulate<P: NodeProgram>(
    g: &Graph,
    program: &P,
    cfg: EngineConfig,
    seed: u64,
) -> Result<(Vec<P::State>, Transcript), EngineError> {
    let mut net = Network::new(g, cfg, seed);
    let mut states: Vec<P::State> = (0..g.n()).map(|v| program.init(&net.ctx(v))).collect();
    while !states.iter().all(|s| program.done(s)) {
        net.exchange(
            &mut states,
            |ctx, s, rng, out| program.send(ctx, s, rng, out),
            |ctx, s, inbox| program.receive(ctx, s, inbox),
        )?;
    }
    Ok((states, net.into_transcript()))
}

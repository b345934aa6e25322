use d2color::engine::mailbox::Mailbox;
use d2color::engine::message::{Message, Role};
use d2color::engine::{simulate, EngineConfig, EngineError, NodeCtx, NodeLike, NodeProgram, NodeRng, Outbox};
use d2color::{log, oracle, AlgoConfig, Color, Graph};
use rand::Rng;

#[derive(Default)]
struct Plain {
    mail: Mailbox,
    heard: Vec<(u32, u64)>,
    rounds: u32,
    draws: Vec<u64>,
}

impl NodeLike for Plain {
    fn mailbox(&mut self) -> &mut Mailbox {
        &mut self.mail
    }
    fn mailbox_ref(&self) -> &Mailbox {
        &self.mail
    }
    fn take_adoption(&mut self) -> Option<Color> {
        None
    }
}

/// Every node sends its id on every port for `rounds` rounds, padded with
/// `extra` 64-bit fields.
struct Gossip {
    rounds: u32,
    extra: usize,
}

impl NodeProgram for Gossip {
    type State = Plain;
    fn init(&self, ctx: &NodeCtx) -> Plain {
        Plain { mail: Mailbox::new(ctx.degree), ..Default::default() }
    }
    fn send(&self, ctx: &NodeCtx, _: &mut Plain, rng: &mut NodeRng, out: &mut Outbox) {
        let mut m = Message::new(1).with(Role::Id, ctx.node as u64, 8).with(Role::Value, rng.gen::<u16>() as u64, 16);
        for _ in 0..self.extra {
            m.push(Role::Value, u64::MAX, 64);
        }
        out.broadcast(&m);
    }
    fn receive(&self, _: &NodeCtx, s: &mut Plain, inbox: &[(u32, Message)]) {
        s.rounds += 1;
        for (port, m) in inbox {
            let v: Vec<u64> = m.values().collect();
            s.heard.push((*port, v[0]));
            s.draws.push(v[1]);
        }
    }
    fn done(&self, s: &Plain) -> bool {
        s.rounds >= self.rounds
    }
}

fn ring(n: usize) -> Graph {
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

#[test]
fn ten_thousand_bit_message_violates_in_round_one() {
    let g = ring(1024);
    let err = simulate(&g, &Gossip { rounds: 3, extra: 157 }, EngineConfig::default(), 0).err().unwrap();
    match err {
        EngineError::BudgetViolation { round, bits, budget, .. } => {
            assert_eq!(round, 1);
            assert_eq!(budget, 80);
            assert!(bits > 10_000);
        }
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn messages_only_cross_incident_edges() {
    let g = Graph::new(6, [(0, 1), (0, 2), (0, 3), (3, 4), (4, 5)]).unwrap();
    let (states, t) = simulate(&g, &Gossip { rounds: 2, extra: 0 }, EngineConfig::default(), 9).unwrap();
    assert_eq!(t.rounds(), 2);
    for (v, s) in states.iter().enumerate() {
        assert_eq!(s.heard.len(), 2 * g.degree(v));
        for &(port, from) in &s.heard {
            assert_eq!(g.neighbors(v)[port as usize] as u64, from);
        }
    }
}

#[test]
fn same_seed_same_run() {
    let g = ring(64);
    let run = |seed| {
        let (st, t) = simulate(&g, &Gossip { rounds: 4, extra: 0 }, EngineConfig::default(), seed).unwrap();
        (st.into_iter().map(|s| s.draws).collect::<Vec<_>>(), t)
    };
    for seed in 0..20 {
        assert_eq!(run(seed), run(seed));
    }
    assert_ne!(run(0).0, run(1).0);
}

#[test]
fn round_cap_is_enforced() {
    let g = ring(8);
    let cfg = EngineConfig { round_cap: Some(3), ..Default::default() };
    let err = simulate(&g, &Gossip { rounds: 10, extra: 0 }, cfg, 0).err().unwrap();
    assert_eq!(err, EngineError::RoundCapExceeded { cap: 3 });
}

#[test]
fn p3_is_colored_with_three_colors() {
    let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
    let cap = EngineConfig::default().cap_for(3);
    for seed in 0..20 {
        let out = log::d2_color(&g, &AlgoConfig::default(), seed).unwrap();
        assert!(oracle::validate(&g, &out.coloring).unwrap().ok);
        assert_eq!(out.colors_used(), 3);
        assert!(out.transcript.rounds() <= cap);
    }
}

#[test]
fn pipeline_transcripts_are_reproducible() {
    let g = Graph::new(12, (0..12usize).flat_map(|i| [(i, (i + 1) % 12), (i, (i + 5) % 12)])).unwrap();
    for seed in 0..20 {
        let a = log::d2_color(&g, &AlgoConfig::default(), seed).unwrap();
        let b = log::d2_color(&g, &AlgoConfig::default(), seed).unwrap();
        assert_eq!(a.transcript.to_jsonl(), b.transcript.to_jsonl());
        assert_eq!(a.coloring, b.coloring);
    }
}

//! Per-port record queues packed into budgeted messages.
//!
//! A record is a 4-bit kind followed by typed fields. Each round the engine
//! drains urgent records first and fills leftover space with background
//! records, so long transfers pipeline over several rounds.

use std::collections::VecDeque;

use smallvec::SmallVec;

use super::message::{Field, Message, Role, KIND_BITS, TAG_BITS};

/// Tag carried by every packed message.
pub const PACKED_TAG: u8 = 0xA5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub kind: u8,
    pub fields: SmallVec<[Field; 4]>,
}

impl Record {
    pub fn new(kind: u8) -> Self {
        assert!(kind < 16, "record kind {kind} exceeds 4 bits");
        Record { kind, fields: SmallVec::new() }
    }

    pub fn with(mut self, role: Role, value: u64, width: u8) -> Self {
        self.fields.push(Field::new(role, value, width));
        self
    }

    pub fn bits(&self) -> u32 {
        KIND_BITS as u32 + self.fields.iter().map(|f| f.width as u32).sum::<u32>()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Mailbox {
    urgent: Vec<VecDeque<Record>>,
    background: Vec<VecDeque<Record>>,
    n_urgent: usize,
    n_background: usize,
}

impl Mailbox {
    pub fn new(degree: usize) -> Self {
        Mailbox {
            urgent: vec![VecDeque::new(); degree],
            background: vec![VecDeque::new(); degree],
            n_urgent: 0,
            n_background: 0,
        }
    }

    pub fn degree(&self) -> usize {
        self.urgent.len()
    }

    pub fn push(&mut self, port: usize, rec: Record) {
        self.urgent[port].push_back(rec);
        self.n_urgent += 1;
    }

    pub fn push_all(&mut self, rec: &Record) {
        for p in 0..self.urgent.len() {
            self.push(p, rec.clone());
        }
    }

    pub fn push_background(&mut self, port: usize, rec: Record) {
        self.background[port].push_back(rec);
        self.n_background += 1;
    }

    pub fn push_background_all(&mut self, rec: &Record) {
        for p in 0..self.background.len() {
            self.push_background(p, rec.clone());
        }
    }

    pub fn has_urgent(&self) -> bool {
        self.n_urgent > 0
    }

    pub fn has_background(&self) -> bool {
        self.n_background > 0
    }

    pub fn is_empty(&self) -> bool {
        self.n_urgent == 0 && self.n_background == 0
    }

    pub fn backlog(&self) -> usize {
        self.n_background
    }

    pub fn clear(&mut self) {
        self.urgent.iter_mut().for_each(VecDeque::clear);
        self.background.iter_mut().for_each(VecDeque::clear);
        self.n_urgent = 0;
        self.n_background = 0;
    }

    /// Packs the next message for `port` within `budget_bits`.
    ///
    /// A record that alone exceeds the budget is still emitted so the
    /// engine reports the violation instead of stalling.
    pub fn pack(&mut self, port: usize, budget_bits: u32) -> Option<Message> {
        let mut msg: Option<Message> = None;
        let mut used = TAG_BITS;
        for bg in [false, true] {
            loop {
                let q = if bg { &mut self.background[port] } else { &mut self.urgent[port] };
                let Some(front) = q.front() else { break };
                let b = front.bits();
                if used + b > budget_bits && msg.is_some() {
                    return msg;
                }
                let rec = q.pop_front().expect("front exists");
                if bg {
                    self.n_background -= 1;
                } else {
                    self.n_urgent -= 1;
                }
                used += b;
                let m = msg.get_or_insert_with(|| Message::new(PACKED_TAG));
                m.fields.push(Field { role: Role::Kind, value: rec.kind as u64, width: KIND_BITS });
                m.fields.extend(rec.fields);
                if used > budget_bits {
                    return msg;
                }
            }
        }
        msg
    }
}

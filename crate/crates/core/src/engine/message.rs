//! Messages with declared per-field bit widths, and the bandwidth budget.

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Width of the message tag.
pub const TAG_BITS: u32 = 8;
/// Width of the record-kind prefix inside packed messages.
pub const KIND_BITS: u8 = 4;

/// Smallest `k` with `2^k >= x`, floored at 1 so every field has a width.
pub fn width_for(x: u64) -> u8 {
    if x <= 2 {
        1
    } else {
        (64 - (x - 1).leading_zeros()) as u8
    }
}

/// `ceil(log2 n)` with `log n = 1` for `n <= 2`.
pub fn log2_ceil(n: usize) -> u32 {
    width_for(n as u64) as u32
}

pub fn fits(value: u64, width: u8) -> bool {
    width >= 64 || value >> width == 0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Kind,
    Id,
    Color,
    Hash,
    LocalId,
    Priority,
    Count,
    Flag,
    Instance,
    Key,
    Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Field {
    pub role: Role,
    pub value: u64,
    pub width: u8,
}

impl Field {
    pub fn new(role: Role, value: u64, width: u8) -> Self {
        assert!(fits(value, width), "{role:?} value {value} does not fit in {width} bits");
        Field { role, value, width }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Message {
    pub tag: u8,
    pub fields: SmallVec<[Field; 6]>,
}

impl Message {
    pub fn new(tag: u8) -> Self {
        Message { tag, fields: SmallVec::new() }
    }

    pub fn with(mut self, role: Role, value: u64, width: u8) -> Self {
        self.push(role, value, width);
        self
    }

    pub fn push(&mut self, role: Role, value: u64, width: u8) {
        self.fields.push(Field::new(role, value, width));
    }

    pub fn total_bits(&self) -> u32 {
        TAG_BITS + self.fields.iter().map(|f| f.width as u32).sum::<u32>()
    }

    pub fn values(&self) -> impl Iterator<Item = u64> + '_ {
        self.fields.iter().map(|f| f.value)
    }

    /// Splits a packed message into records at `Role::Kind` markers.
    pub fn records(&self) -> RecordIter<'_> {
        RecordIter { fields: &self.fields, pos: 0 }
    }
}

/// Borrowed view of one record inside a packed message.
#[derive(Clone, Copy, Debug)]
pub struct Rec<'a> {
    pub kind: u8,
    pub fields: &'a [Field],
}

impl<'a> Rec<'a> {
    pub fn v(&self, i: usize) -> u64 {
        self.fields[i].value
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

pub struct RecordIter<'a> {
    fields: &'a [Field],
    pos: usize,
}

impl<'a> Iterator for RecordIter<'a> {
    type Item = Rec<'a>;

    fn next(&mut self) -> Option<Rec<'a>> {
        let fs = self.fields;
        if self.pos >= fs.len() {
            return None;
        }
        debug_assert_eq!(fs[self.pos].role, Role::Kind);
        let kind = fs[self.pos].value as u8;
        let start = self.pos + 1;
        let mut end = start;
        while end < fs.len() && fs[end].role != Role::Kind {
            end += 1;
        }
        self.pos = end;
        Some(Rec { kind, fields: &fs[start..end] })
    }
}

/// Bits available per edge per round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub c_b: u32,
    pub bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Overflow {
    pub bits: u32,
    pub budget: u32,
}

impl Budget {
    /// `B = c_B * ceil(log2 n)`, raised to at least `ceil(log2 n) + 8` and 32.
    pub fn for_n(n: usize, c_b: u32) -> Self {
        let l = log2_ceil(n);
        Budget { c_b, bits: (c_b * l).max(l + TAG_BITS).max(32) }
    }

    pub fn check(&self, msg: &Message) -> Result<(), Overflow> {
        let bits = msg.total_bits();
        if bits <= self.bits {
            Ok(())
        } else {
            Err(Overflow { bits, budget: self.bits })
        }
    }
}

/// How many `color_width`-bit colors fit in one message next to the tag.
pub fn colors_per_message(budget_bits: u32, color_width: u8) -> usize {
    (budget_bits.saturating_sub(TAG_BITS) / color_width as u32) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(log2_ceil(1024), 10);
        assert_eq!(log2_ceil(1025), 11);
        assert_eq!(width_for(17), 5);
        assert_eq!(width_for(16), 4);
        assert_eq!(width_for(1), 1);
        assert_eq!(width_for(4097), 13);
    }

    #[test]
    fn budget_examples() {
        let b = Budget::for_n(1024, 8);
        assert_eq!(b.bits, 80);
        let mut three = Message::new(1);
        for c in [3, 9, 16] {
            three.push(Role::Color, c, width_for(17));
        }
        assert_eq!(three.total_bits(), 23);
        assert!(b.check(&three).is_ok());
        let mut ten = Message::new(2);
        for i in 0..10 {
            ten.push(Role::Id, i, 10);
        }
        assert_eq!(ten.total_bits(), 108);
        assert_eq!(b.check(&ten), Err(Overflow { bits: 108, budget: 80 }));
        assert!(b.check(&Message::new(0)).is_ok());
    }

    #[test]
    fn packing_counts() {
        assert_eq!(colors_per_message(96, 12), 7);
        assert_eq!(colors_per_message(96, width_for(64 * 64 + 1)), 6);
    }

    #[test]
    #[should_panic]
    fn oversized_field_rejected() {
        let _ = Message::new(0).with(Role::Color, 32, 5);
    }

    #[test]
    fn record_split() {
        let m = Message::new(0)
            .with(Role::Kind, 3, KIND_BITS)
            .with(Role::Id, 7, 4)
            .with(Role::Kind, 5, KIND_BITS)
            .with(Role::Kind, 1, KIND_BITS)
            .with(Role::Color, 2, 3)
            .with(Role::Color, 1, 3);
        let recs: Vec<(u8, Vec<u64>)> = m.records().map(|r| (r.kind, r.fields.iter().map(|f| f.value).collect())).collect();
        assert_eq!(recs, vec![(3, vec![7]), (5, vec![]), (1, vec![2, 1])]);
    }
}

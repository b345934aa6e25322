//! Per-round run records.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u64,
    #[serde(rename = "maxEdgeBits")]
    pub max_edge_bits: u32,
    #[serde(rename = "totalBits")]
    pub total_bits: u64,
    /// `(node, color)` pairs adopted during the round.
    pub adoptions: Vec<(u32, u32)>,
    pub phase: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub from: u32,
    pub to: u32,
    pub round: u64,
    pub bits: u32,
    pub budget: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub records: Vec<RoundRecord>,
    pub violations: Vec<Violation>,
}

impl Transcript {
    pub fn rounds(&self) -> u64 {
        self.records.last().map_or(0, |r| r.round)
    }

    pub fn max_edge_bits(&self) -> u32 {
        self.records.iter().map(|r| r.max_edge_bits).max().unwrap_or(0)
    }

    /// Rounds spent under phase labels starting with `prefix`.
    pub fn rounds_in(&self, prefix: &str) -> u64 {
        self.records.iter().filter(|r| r.round > 0 && r.phase.starts_with(prefix)).count() as u64
    }

    pub fn adoptions(&self) -> impl Iterator<Item = (u64, u32, u32)> + '_ {
        self.records.iter().flat_map(|r| r.adoptions.iter().map(move |&(v, c)| (r.round, v, c)))
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<RoundRecord>, _>>()?;
        Ok(Transcript { records, violations: Vec::new() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let t = Transcript {
            records: vec![
                RoundRecord { round: 1, max_edge_bits: 20, total_bits: 40, adoptions: vec![], phase: "ACD".into() },
                RoundRecord { round: 2, max_edge_bits: 12, total_bits: 12, adoptions: vec![(3, 1)], phase: "FINISH".into() },
            ],
            violations: vec![],
        };
        let text = t.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"maxEdgeBits\":20"));
        assert_eq!(Transcript::from_jsonl(&text).unwrap(), t);
        assert_eq!(t.rounds_in("FIN"), 1);
        assert_eq!(t.adoptions().collect::<Vec<_>>(), vec![(2, 3, 1)]);
    }
}

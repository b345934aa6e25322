//! Results and errors shared by both pipelines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acd::AcdResult;
use crate::config::ConfigError;
use crate::engine::transcript::Transcript;
use crate::engine::EngineError;
use crate::field::FieldError;
use crate::log::learn::LearnStats;
use crate::log::reduce::ProposalEvent;
use crate::sublog::SublogStats;
use crate::Color;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum D2Error {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("cluster of {size} nodes exceeds the bound {bound}")]
    ShatterFailure { size: usize, bound: usize },
    #[error("node {0} has an empty list")]
    EmptyList(usize),
    #[error("{0} nodes left uncolored")]
    Uncolored(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Which branch of the orchestrator ran.
    pub branch: String,
    /// Coloring right after the first uninformed trial, when one ran.
    pub first_trial: Option<Vec<Option<Color>>>,
    /// Live nodes at the end of each phase.
    pub live_trajectory: Vec<(String, usize)>,
    /// Live nodes outside every component after the uninformed trials.
    pub vstar_live_after_oneshot: Option<usize>,
    /// The same after the Reduce-Phase iterations.
    pub vstar_live_after_reduce: Option<usize>,
    pub proposals: Vec<ProposalEvent>,
    pub learn: Option<LearnStats>,
    pub finish_iterations: usize,
    pub sublog: Option<SublogStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub coloring: Vec<Color>,
    pub transcript: Transcript,
    pub acd: Option<AcdResult>,
    pub stats: RunStats,
}

impl RunOutcome {
    pub fn colors_used(&self) -> usize {
        let mut c = self.coloring.clone();
        c.sort_unstable();
        c.dedup();
        c.len()
    }

    /// Coloring file: one `node color` line per node.
    pub fn coloring_text(&self) -> String {
        coloring_to_text(&self.coloring)
    }
}

pub fn coloring_to_text(coloring: &[Color]) -> String {
    let mut s = String::with_capacity(coloring.len() * 8);
    for (v, c) in coloring.iter().enumerate() {
        s.push_str(&format!("{v} {c}\n"));
    }
    s
}

/// Parses `node color` lines; every node must appear exactly once.
pub fn coloring_from_text(text: &str) -> Result<Vec<Color>, String> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |t: Option<&str>| -> Result<u64, String> {
            t.ok_or_else(|| format!("line {}: missing field", i + 1))?
                .parse::<u64>()
                .map_err(|e| format!("line {}: {e}", i + 1))
        };
        let v = parse(it.next())? as usize;
        let c = parse(it.next())? as Color;
        pairs.push((v, c));
    }
    let n = pairs.len();
    let mut out = vec![None; n];
    for (v, c) in pairs {
        if v >= n || out[v].is_some() {
            return Err(format!("node {v} out of range or repeated"));
        }
        out[v] = Some(c);
    }
    Ok(out.into_iter().map(|c| c.expect("all filled")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coloring_text_round_trip() {
        let c = vec![3, 0, 2];
        assert_eq!(coloring_from_text(&coloring_to_text(&c)).unwrap(), c);
        assert!(coloring_from_text("0 1\n0 2\n").is_err());
    }
}

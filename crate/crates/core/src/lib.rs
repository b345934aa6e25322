//! Distance-2 coloring in a simulated CONGEST network.

pub mod acd;
pub mod config;
pub mod engine;
pub mod field;
pub mod graph;
pub mod log;
pub mod oracle;
pub mod run;
pub mod state;
pub mod sublog;
pub mod trial;

/// A color in `{0, .., Δ²}`.
pub type Color = u32;

pub use graph::{Graph, GraphError, Sparsity, SquareView};
pub use config::AlgoConfig;
pub use run::{D2Error, RunOutcome, RunStats};

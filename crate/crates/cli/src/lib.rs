//! Experiment harness around the d2color library.

pub mod experiment;
pub mod gen;
pub mod report;
pub mod runner;
pub mod seeds;

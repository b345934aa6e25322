//! Experiment configuration.

use std::path::PathBuf;
use std::str::FromStr;

use d2color::config::ConfigError;
use d2color::AlgoConfig;
use serde::{Deserialize, Serialize};

use crate::gen::GenSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Log,
    Sublog,
    OracleGreedy,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Log => "log",
            Algorithm::Sublog => "sublog",
            Algorithm::OracleGreedy => "oracle-greedy",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "log" => Ok(Algorithm::Log),
            "sublog" => Ok(Algorithm::Sublog),
            "oracle-greedy" => Ok(Algorithm::OracleGreedy),
            _ => Err(format!("unknown algorithm {s:?}; expected log, sublog or oracle-greedy")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub graph: GenSpec,
    /// Seed of the graph generator; run seeds are separate.
    #[serde(default)]
    pub graph_seed: u64,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub algo: AlgoConfig,
    /// Also run the decomposition verifier on each run's ACD.
    #[serde(default)]
    pub verify_acd: bool,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: GenSpec, algorithm: Algorithm, seeds: Vec<u64>) -> Self {
        ExperimentConfig { graph, graph_seed: 0, algorithm, seeds, algo: AlgoConfig::default(), verify_acd: false, out_dir: None }
    }

    /// Same as [`AlgoConfig::validate`]; oracle-greedy ignores the
    /// algorithm parameters but they must still be well-formed.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.algo.validate()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn config_round_trips() {
        let mut c = ExperimentConfig::new(GenSpec::Ring { n: 5 }, Algorithm::Sublog, vec![1, 2, 3]);
        c.algo.epsilon = Ratio::new(1, 70);
        c.out_dir = Some("out".into());
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn large_epsilon_is_a_config_error() {
        let mut c = ExperimentConfig::new(GenSpec::Ring { n: 5 }, Algorithm::Log, vec![0]);
        c.algo.epsilon = Ratio::new(1, 6);
        assert!(c.validate().is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Log, Algorithm::Sublog, Algorithm::OracleGreedy] {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("greedy".parse::<Algorithm>().is_err());
    }
}

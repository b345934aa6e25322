//! Algorithm configuration shared by both pipelines.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acd::{AcdError, AcdParams};
use crate::engine::EngineConfig;
use crate::field::is_prime;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Acd(#[from] AcdError),
    #[error("c_B must be at least 1")]
    ZeroBandwidth,
    #[error("eta must be at least 4, got {0}")]
    EtaTooSmall(u64),
    #[error("p = {0} is not prime")]
    NotPrime(u64),
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("reduction degree {d} exceeds dMax = {d_max}")]
    DegreeTooLarge { d: u32, d_max: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct AlgoConfig {
    pub engine: EngineConfig,
    pub epsilon: Ratio<i64>,
    pub c10: Option<f64>,
    pub c2: u32,
    /// Accepts `ε > 1/60`; needed for dense instances at desk scale.
    pub allow_large_epsilon: bool,
    /// Uninformed trials: `oneshotMult · log2 n` iterations.
    pub oneshot_mult: u32,
    /// Reduce-Phase iterations: `reduceMult · log2 n`.
    pub reduce_mult: u32,
    /// Meet-in-the-middle set size; `None` selects `Δ·ceil(sqrt(Δ log n))`.
    pub learn_fanout: Option<usize>,
    /// Random walks per color are `learnWalks · (Δ²/P) · log2 n`.
    pub learn_walks: u32,
    /// Palettes come from the oracle instead of the protocol.
    pub ideal_learn: bool,
    pub eta: u64,
    pub c_low: u32,
    pub k_parallel: Option<usize>,
    /// Informed trials in shattering: `shatterIters · ceil(log2 Δ̂)`.
    pub shatter_iters: u32,
    /// Degree-reduction Reduce-Phase rounds: `reduceLogDeltaMult · ceil(log2 Δ)`.
    pub reduce_log_delta_mult: u32,
    pub p: u64,
    pub d_max: u32,
    /// `None` selects `(log2 n)^3`.
    pub cluster_size_bound: Option<usize>,
    /// Multiplier on `q = (6/p) log n` tries in the sparse MultiTrial.
    pub multitrial_mult: u32,
    /// Sublog small regime: `Δ <= smallDeltaMult · log2 n`.
    pub small_delta_mult: u32,
    /// Sublog large regime: `Δ >= n^largeDeltaExp`.
    pub large_delta_exp: f64,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            engine: EngineConfig::default(),
            epsilon: Ratio::new(1, 60),
            c10: None,
            c2: 16,
            allow_large_epsilon: false,
            oneshot_mult: 4,
            reduce_mult: 2,
            learn_fanout: None,
            learn_walks: 2,
            ideal_learn: false,
            eta: 4,
            c_low: 2,
            k_parallel: None,
            shatter_iters: 4,
            reduce_log_delta_mult: 2,
            p: 65521,
            d_max: 4,
            cluster_size_bound: None,
            multitrial_mult: 1,
            small_delta_mult: 1,
            large_delta_exp: 0.75,
        }
    }
}

impl AlgoConfig {
    pub fn acd_params(&self) -> Result<AcdParams, ConfigError> {
        if self.allow_large_epsilon {
            if self.epsilon <= Ratio::from_integer(0) {
                return Err(AcdError::EpsilonNotPositive.into());
            }
            let mut p = AcdParams::unchecked(self.epsilon, self.c2);
            if let Some(c) = self.c10 {
                p.c10 = c;
            }
            Ok(p)
        } else {
            Ok(AcdParams::new(self.epsilon, self.c10, self.c2)?)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.acd_params()?;
        if self.engine.c_b == 0 {
            return Err(ConfigError::ZeroBandwidth);
        }
        if self.eta < 4 {
            return Err(ConfigError::EtaTooSmall(self.eta));
        }
        if !is_prime(self.p) {
            return Err(ConfigError::NotPrime(self.p));
        }
        for (name, v) in [("c2", self.c2), ("learnWalks", self.learn_walks), ("cLow", self.c_low)] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        Ok(())
    }

    pub fn cluster_bound(&self, log_n: u32) -> usize {
        self.cluster_size_bound.unwrap_or((log_n as usize).pow(3).max(8))
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

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = AlgoConfig::default();
        c.validate().unwrap();
        assert_eq!(AlgoConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn rejects_large_epsilon_unless_allowed() {
        let mut c = AlgoConfig { epsilon: Ratio::new(1, 6), ..Default::default() };
        assert!(matches!(c.validate(), Err(ConfigError::Acd(AcdError::EpsilonTooLarge(_)))));
        c.allow_large_epsilon = true;
        c.validate().unwrap();
    }

    #[test]
    fn rejects_composite_p() {
        let c = AlgoConfig { p: 12, ..Default::default() };
        assert_eq!(c.validate(), Err(ConfigError::NotPrime(12)));
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = AlgoConfig::from_json(r#"{"eta": 8, "kParallel": 3}"#).unwrap();
        assert_eq!(c.eta, 8);
        assert_eq!(c.k_parallel, Some(3));
        assert_eq!(c.c2, 16);
    }
}

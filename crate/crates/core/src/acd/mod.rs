//! Almost-clique decomposition of the square graph.

mod aggregate;
mod protocol;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{aggregate_over_component, AggOp, AggRun};
pub use protocol::{build_acd, decompose, exact_buddies, AcdMode, AcdScratch, BuddyVerdicts, DOUBLE, HALF, SELF_PORT};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum AcdError {
    #[error("epsilon {0} exceeds 1/60")]
    EpsilonTooLarge(Ratio<i64>),
    #[error("epsilon must be positive")]
    EpsilonNotPositive,
    #[error("c10 = {got} below the required {need}")]
    C10TooSmall { got: f64, need: f64 },
}

/// Decomposition parameters. Fields are public so experiments can step
/// outside the validated range; [`AcdParams::new`] enforces it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcdParams {
    pub epsilon: Ratio<i64>,
    pub c10: f64,
    pub c2: u32,
}

/// Lower bound on the sampling constant for a given `ε`.
pub fn min_c10(eps: f64) -> f64 {
    let k = (2.0 - 2f64.sqrt()).powi(2) * eps * eps;
    let lower = 10.0 / (k * (1.0 - eps));
    let upper = 20.0 / ((1.0 - 2f64.sqrt() * eps) * k);
    lower.max(upper)
}

impl AcdParams {
    pub fn new(epsilon: Ratio<i64>, c10: Option<f64>, c2: u32) -> Result<Self, AcdError> {
        if epsilon <= Ratio::from_integer(0) {
            return Err(AcdError::EpsilonNotPositive);
        }
        if epsilon > Ratio::new(1, 60) {
            return Err(AcdError::EpsilonTooLarge(epsilon));
        }
        let need = min_c10(eps_f64(epsilon));
        let c10 = c10.unwrap_or(need);
        if c10 < need {
            return Err(AcdError::C10TooSmall { got: c10, need });
        }
        Ok(AcdParams { epsilon, c10, c2 })
    }

    /// Skips range validation; for experiments with larger `ε`.
    pub fn unchecked(epsilon: Ratio<i64>, c2: u32) -> Self {
        AcdParams { epsilon, c10: min_c10(eps_f64(epsilon)), c2 }
    }

    pub fn eps_f64(&self) -> f64 {
        eps_f64(self.epsilon)
    }

    /// Whether `Δ²` is small enough for the exact predicates.
    pub fn exact_mode(&self, delta_sq: usize, log_n: u32) -> bool {
        delta_sq as u64 <= self.c2 as u64 * log_n as u64
    }

    /// Expected sample size `N = p·Δ²`, capped at `Δ²`.
    pub fn sample_target(&self, delta_sq: usize, log_n: u32) -> u64 {
        ((self.c10 * log_n as f64).ceil() as u64).min(delta_sq as u64)
    }
}

impl Default for AcdParams {
    fn default() -> Self {
        AcdParams::new(Ratio::new(1, 60), None, 16).expect("defaults are valid")
    }
}

fn eps_f64(e: Ratio<i64>) -> f64 {
    *e.numer() as f64 / *e.denom() as f64
}

/// `k >= (1 - sqrt2·ε)·N`, decided in integers.
pub fn sampled_threshold_met(k: u64, n_target: u64, eps: Ratio<i64>) -> bool {
    if k >= n_target {
        return true;
    }
    let gap = (n_target - k) as i128;
    let (a, b) = (*eps.numer() as i128, *eps.denom() as i128);
    gap * gap * b * b <= 2 * a * a * (n_target as i128) * (n_target as i128)
}

/// `k >= (1 - ε)·Δ²` in integers.
pub fn exact_threshold_met(k: u64, delta_sq: u64, eps: Ratio<i64>) -> bool {
    let (a, b) = (*eps.numer() as i128, *eps.denom() as i128);
    (k as i128) * b >= (b - a) * delta_sq as i128
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcdComponent {
    /// Id of the leader, the smallest-id popular node of the core.
    pub id: u32,
    pub leader: usize,
    /// `C_i`, sorted.
    pub core: Vec<usize>,
    /// `Ĉ_i`, sorted; contains `core`.
    pub extended: Vec<usize>,
    /// Spanning tree in `G` as `(node, parent)`; the leader's parent is `None`.
    pub tree: Vec<(usize, Option<usize>)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcdResult {
    pub v_star: Vec<usize>,
    pub components: Vec<AcdComponent>,
}

impl AcdResult {
    /// Component index of each node's extended component.
    pub fn membership(&self, n: usize) -> Vec<Option<usize>> {
        let mut m = vec![None; n];
        for (i, c) in self.components.iter().enumerate() {
            for &v in &c.extended {
                m[v] = Some(i);
            }
        }
        m
    }

    pub fn core_membership(&self, n: usize) -> Vec<Option<usize>> {
        let mut m = vec![None; n];
        for (i, c) in self.components.iter().enumerate() {
            for &v in &c.core {
                m[v] = Some(i);
            }
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("acd result serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_validation() {
        assert!(AcdParams::new(Ratio::new(1, 30), None, 16).is_err());
        assert!(AcdParams::new(Ratio::new(0, 1), None, 16).is_err());
        let p = AcdParams::default();
        assert!(p.c10 >= min_c10(1.0 / 60.0));
        assert!(AcdParams::new(Ratio::new(1, 60), Some(1.0), 16).is_err());
    }

    #[test]
    fn thresholds() {
        // (1 - sqrt2/60)·400 = 390.57.., so 391 passes and 390 does not.
        let e = Ratio::new(1, 60);
        assert!(sampled_threshold_met(391, 400, e));
        assert!(!sampled_threshold_met(390, 400, e));
        assert!(exact_threshold_met(394, 400, e));
        assert!(!exact_threshold_met(393, 400, e));
        assert!(!exact_threshold_met(0, 1, e));
        assert!(!exact_threshold_met(3, 4, e));
    }
}

//! Conflict-resolution policies: map a conflicting pair to one separation
//! side per step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{best_side, residuals, DecisionSequence, SIDE_COUNT};
use crate::dynamics::LinearModel;
use crate::lstm::Network;
use crate::milp::{extract_labels, solve_milp, MilpBudget, MilpError};
use crate::trajectory::ConflictScenario;

/// Side used by the greedy policy where no side holds yet (+z).
pub const DEFAULT_PRESET: u8 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("the centralized program found no solution for seed {0}")]
    OracleInfeasible(u64),
    #[error("preset side {0} is outside 1..=6")]
    InvalidPreset(u8),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Debug, Clone)]
pub enum Policy {
    Random { seed: u64 },
    Greedy { preset: u8 },
    MilpOracle { budget: MilpBudget },
    Learned(Box<Network>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Random,
    Greedy,
    Learned,
    Milp,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] = [PolicyName::Random, PolicyName::Greedy, PolicyName::Learned, PolicyName::Milp];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Random => "random",
            PolicyName::Greedy => "greedy",
            PolicyName::Learned => "learned",
            PolicyName::Milp => "milp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl Policy {
    pub fn name(&self) -> PolicyName {
        match self {
            Policy::Random { .. } => PolicyName::Random,
            Policy::Greedy { .. } => PolicyName::Greedy,
            Policy::MilpOracle { .. } => PolicyName::Milp,
            Policy::Learned(_) => PolicyName::Learned,
        }
    }

    pub fn resolve(&self, scenario: &ConflictScenario, model: &LinearModel) -> Result<DecisionSequence, PolicyError> {
        let len = scenario.traj_a.len();
        match self {
            Policy::Random { seed } => Ok(random_decisions(random_stream_seed(*seed, scenario.seed), len)),
            Policy::Greedy { preset } => {
                if !(1..=SIDE_COUNT as u8).contains(preset) {
                    return Err(PolicyError::InvalidPreset(*preset));
                }
                Ok(greedy(&scenario.differences(), scenario.delta, *preset))
            }
            Policy::MilpOracle { budget } => {
                let r = solve_milp(scenario, model, budget)?;
                extract_labels(&r).map_err(|_| PolicyError::OracleInfeasible(scenario.seed))
            }
            Policy::Learned(net) => Ok(net.infer(&scenario.differences(), scenario.delta)),
        }
    }
}

/// Per-scenario stream so each scenario's draw is independent of which
/// other scenarios were evaluated.
fn random_stream_seed(policy_seed: u64, scenario_seed: u64) -> u64 {
    policy_seed ^ scenario_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn random_decisions(seed: u64, len: usize) -> DecisionSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DecisionSequence((0..len).map(|_| rng.gen_range(1..=SIDE_COUNT as u8)).collect())
}

/// Residual of every side at one step: nonnegative means the side holds.
pub fn greedy_residuals(z: &nalgebra::Vector3<f64>, delta: f64) -> [f64; 6] {
    residuals(z, delta)
}

/// Most-separated side where some side holds, the preset otherwise.
pub fn greedy(diffs: &[nalgebra::Vector3<f64>], delta: f64, preset: u8) -> DecisionSequence {
    DecisionSequence(
        diffs
            .iter()
            .map(|z| {
                if greedy_residuals(z, delta).iter().any(|&r| r >= 0.0) {
                    best_side(z, delta)
                } else {
                    preset
                }
            })
            .collect(),
    )
}

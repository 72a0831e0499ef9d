//! Branching policies: a uniform interface and the concrete rules.

mod network;
mod random;
mod strong;

use thiserror::Error;

use crate::milp::{BipartiteObservation, MilpInstance};
use crate::simplex::{LpModel, LpSolution};

pub use network::NetworkPolicy;
pub use random::RandomPolicy;
pub use strong::{strong_branching_scores, StrongBranching, SB_INFINITY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("empty candidate mask")]
    EmptyMask,
    #[error("policy chose variable {0}, which is not a fractional candidate")]
    OutsideMask(usize),
    #[error("model error: {0}")]
    Model(String),
}

/// Everything a policy may look at when asked to branch.
pub struct BranchContext<'a> {
    pub instance: &'a MilpInstance,
    pub model: &'a LpModel,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    pub lp: &'a LpSolution,
    pub observation: &'a BipartiteObservation,
    pub node_id: usize,
    pub step: usize,
}

impl BranchContext<'_> {
    pub fn candidates(&self) -> &[usize] {
        &self.observation.candidates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingDecision {
    pub action: usize,
    /// Probabilities aligned with the candidate list.
    pub distribution: Vec<f64>,
    /// Policy-specific per-candidate scores.
    pub scores: Option<Vec<f64>>,
}

impl BranchingDecision {
    pub fn one_hot(candidates: &[usize], action: usize, scores: Option<Vec<f64>>) -> Self {
        let distribution = candidates.iter().map(|&j| f64::from(u8::from(j == action))).collect();
        BranchingDecision {
            action,
            distribution,
            scores,
        }
    }
}

pub trait BranchingPolicy {
    fn name(&self) -> &str;
    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError>;
}

/// Masked softmax over `logits[candidates]`.
pub fn masked_softmax(logits: &[f64], candidates: &[usize]) -> Vec<f64> {
    let max = candidates.iter().map(|&j| logits[j]).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = candidates.iter().map(|&j| (logits[j] - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

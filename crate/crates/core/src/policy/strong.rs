use log::warn;

use super::{argmax, BranchContext, BranchingDecision, BranchingPolicy, PolicyError};
use crate::simplex::{solve_cold, solve_warm, BoundChange, LpStatus};

/// Stand-in for an infinite objective gain (infeasible child).
pub const SB_INFINITY: f64 = 1e12;

/// Score every candidate by `min(gain_left, gain_right)`, probing both
/// children with full LP solves warm-started from the node basis. A probe
/// that fails is scored `-SB_INFINITY`.
pub fn strong_branching_scores(ctx: &BranchContext<'_>) -> Vec<f64> {
    let parent = ctx.model.with_bounds(ctx.lower.to_vec(), ctx.upper.to_vec());
    let base = ctx.lp.objective;
    let gain = |change: BoundChange| -> Option<f64> {
        let child = parent.with_change(change);
        let sol = match &ctx.lp.basis {
            Some(b) => solve_warm(&child, b),
            None => solve_cold(&child),
        };
        match sol.status {
            LpStatus::Optimal => Some((sol.objective - base).max(0.0).min(SB_INFINITY)),
            LpStatus::Infeasible => Some(SB_INFINITY),
            LpStatus::Unbounded | LpStatus::IterLimit => None,
        }
    };
    ctx.candidates()
        .iter()
        .map(|&j| {
            let v = ctx.lp.x[j];
            let left = gain(BoundChange::Upper(j, v.floor()));
            let right = gain(BoundChange::Lower(j, v.ceil()));
            match (left, right) {
                (Some(l), Some(r)) => l.min(r),
                _ => {
                    warn!("strong branching probe failed on variable {j}");
                    -SB_INFINITY
                }
            }
        })
        .collect()
}

/// Expert rule: argmax of the strong branching score, lowest index on ties.
#[derive(Debug, Clone, Default)]
pub struct StrongBranching;

impl StrongBranching {
    /// Pick among `candidates` given per-candidate `(gain_left, gain_right)`.
    pub fn choose_from_gains(candidates: &[usize], gains: &[(f64, f64)]) -> Result<BranchingDecision, PolicyError> {
        if candidates.is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let scores: Vec<f64> = gains
            .iter()
            .map(|&(l, r)| l.min(SB_INFINITY).min(r.min(SB_INFINITY)))
            .collect();
        let action = candidates[argmax(&scores)];
        Ok(BranchingDecision::one_hot(candidates, action, Some(scores)))
    }
}

impl BranchingPolicy for StrongBranching {
    fn name(&self) -> &str {
        "sb"
    }

    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError> {
        let cands = ctx.candidates();
        if cands.is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let scores = strong_branching_scores(ctx);
        let action = cands[argmax(&scores)];
        Ok(BranchingDecision::one_hot(cands, action, Some(scores)))
    }
}

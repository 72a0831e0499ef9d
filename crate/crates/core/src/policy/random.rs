use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BranchContext, BranchingDecision, BranchingPolicy, PolicyError};

/// Uniform choice over the fractional candidates. The draw is a function of
/// the seed and the node being branched, so reruns reproduce the same tree.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    seed: u64,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy { seed }
    }

    pub fn choose(&self, candidates: &[usize], state_hash: u64) -> Result<BranchingDecision, PolicyError> {
        if candidates.is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ state_hash.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let k = rng.random_range(0..candidates.len());
        let p = 1.0 / candidates.len() as f64;
        Ok(BranchingDecision {
            action: candidates[k],
            distribution: vec![p; candidates.len()],
            scores: None,
        })
    }
}

impl BranchingPolicy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError> {
        let hash = (ctx.node_id as u64) << 32 ^ ctx.step as u64;
        self.choose(ctx.candidates(), hash)
    }
}

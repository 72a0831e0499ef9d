//! Policy head only: masked softmax over the predicted logits.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, masked_softmax, BranchContext, BranchingDecision, BranchingPolicy, PolicyError};
use crate::milp::BipartiteObservation;
use crate::model::Network;
use crate::tensor::{Graph, ParamStore};

pub struct NetworkPolicy {
    net: Arc<Network>,
    params: Arc<ParamStore>,
    /// 0 picks the argmax; otherwise sample from `softmax(logits / T)`.
    pub temperature: f64,
    seed: u64,
}

impl NetworkPolicy {
    pub fn new(net: Arc<Network>, params: Arc<ParamStore>, temperature: f64, seed: u64) -> Self {
        NetworkPolicy {
            net,
            params,
            temperature,
            seed,
        }
    }

    /// Raw policy logits, one per variable.
    pub fn logits(&self, obs: &BipartiteObservation) -> Result<Vec<f64>, PolicyError> {
        let mut g = Graph::new(&self.params);
        let run = |g: &mut Graph<'_>| {
            let lat = self.net.represent(g, obs)?;
            self.net.predict(g, &obs.graph, &lat)
        };
        let p = run(&mut g).map_err(|e| PolicyError::Model(e.to_string()))?;
        Ok(g.value(p.policy).data().to_vec())
    }

    /// Decision from precomputed logits; `hash` keys the sampling stream.
    pub fn choose(&self, logits: &[f64], candidates: &[usize], hash: u64) -> Result<BranchingDecision, PolicyError> {
        if candidates.is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        if self.temperature <= 0.0 {
            let masked: Vec<f64> = candidates.iter().map(|&j| logits[j]).collect();
            return Ok(BranchingDecision {
                action: candidates[argmax(&masked)],
                distribution: masked_softmax(logits, candidates),
                scores: Some(masked),
            });
        }
        let scaled: Vec<f64> = logits.iter().map(|l| l / self.temperature).collect();
        let dist = masked_softmax(&scaled, candidates);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hash.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = candidates.len() - 1;
        for (k, p) in dist.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = k;
                break;
            }
        }
        Ok(BranchingDecision {
            action: candidates[pick],
            distribution: dist,
            scores: Some(candidates.iter().map(|&j| logits[j]).collect()),
        })
    }
}

impl BranchingPolicy for NetworkPolicy {
    fn name(&self) -> &str {
        "net"
    }

    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError> {
        if ctx.candidates().is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let logits = self.logits(ctx.observation)?;
        self.choose(&logits, ctx.candidates(), (ctx.node_id as u64) << 32 ^ ctx.step as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn policy(t: f64) -> NetworkPolicy {
        let (net, params) = Network::build(ModelConfig::default(), 0).unwrap();
        NetworkPolicy::new(Arc::new(net), Arc::new(params), t, 3)
    }

    #[test]
    fn equal_logits_are_uniform_over_mask() {
        let p = policy(0.0);
        let d = p.choose(&[0.7; 6], &[1, 3, 4], 0).unwrap();
        for x in d.distribution {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(d.action, 1);
    }

    #[test]
    fn shift_invariant() {
        let p = policy(0.0);
        let l = [0.1, -2.0, 3.0, 0.5];
        let shifted: Vec<f64> = l.iter().map(|x| x + 17.0).collect();
        let a = p.choose(&l, &[0, 1, 3], 0).unwrap();
        let b = p.choose(&shifted, &[0, 1, 3], 0).unwrap();
        for (x, y) in a.distribution.iter().zip(&b.distribution) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a.action, b.action);
    }

    #[test]
    fn masked_variable_never_sampled() {
        let p = policy(1.0);
        // variable 2 has by far the largest logit but is off the mask
        let l = [0.0, 0.3, 50.0, -0.2];
        for h in 0..10_000u64 {
            let d = p.choose(&l, &[0, 1, 3], h).unwrap();
            assert_ne!(d.action, 2);
        }
    }

    #[test]
    fn empty_mask_rejected() {
        assert_eq!(policy(0.0).choose(&[1.0], &[], 0), Err(PolicyError::EmptyMask));
    }
}

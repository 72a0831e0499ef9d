//! Unrolled four-term objective: policy, value, branchability and tree
//! consistency.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{LatentNode, Network, PredictionVars};
use crate::tensor::{GradientMap, Graph, ParamStore, Tensor, TensorError, Var};

use super::trajectory::SubtreeTrajectory;
use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub policy: f64,
    pub value: f64,
    pub branch: f64,
    pub consistency: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            policy: 1.0,
            value: 1.0,
            branch: 1.0,
            consistency: 1.0,
        }
    }
}

/// Per-term means (unweighted) and the weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub branch: f64,
    pub consistency: f64,
}

impl LossBreakdown {
    pub fn add_scaled(&mut self, other: &LossBreakdown, s: f64) {
        self.total += s * other.total;
        self.policy += s * other.policy;
        self.value += s * other.value;
        self.branch += s * other.branch;
        self.consistency += s * other.consistency;
    }
}

/// Recorded loss nodes of one trajectory.
pub struct LossVars {
    pub total: Var,
    pub policy: Option<Var>,
    pub value: Option<Var>,
    pub branch: Option<Var>,
    pub consistency: Option<Var>,
}

/// Children that get a consistency term, in unroll order.
fn consistency_children(traj: &SubtreeTrajectory) -> impl Iterator<Item = &crate::milp::BipartiteObservation> {
    traj.steps
        .iter()
        .filter_map(|s| s.children.as_ref())
        .flat_map(|cs| cs.iter())
        .filter(|c| c.branchable)
        .filter_map(|c| c.observation.as_ref())
}

/// Target-branch vectors `proj(h(o_child))`, computed once and fed to the
/// loss as constants (the stop-gradient).
pub fn consistency_targets(
    net: &Network,
    params: &ParamStore,
    traj: &SubtreeTrajectory,
) -> Result<Vec<Tensor>, TensorError> {
    consistency_children(traj)
        .map(|obs| {
            let mut g = Graph::new(params);
            let lat = net.represent(&mut g, obs)?;
            let v = net.consistency_vector(&mut g, &lat, false)?;
            Ok(g.value(v).clone())
        })
        .collect()
}

/// `-sum(target * log_softmax(logits))` for a `1 x k` logit row.
fn cross_entropy(g: &mut Graph<'_>, logits: Var, target: Vec<f64>) -> Result<Var, TensorError> {
    let lp = g.log_softmax(logits)?;
    let t = g.input(Tensor::row(target))?;
    let prod = g.mul(lp, t)?;
    let s = g.sum(prod)?;
    g.scale(s, -1.0)
}

fn mean_of(g: &mut Graph<'_>, terms: &[Var]) -> Result<Option<Var>, TensorError> {
    let Some((&first, rest)) = terms.split_first() else {
        return Ok(None);
    };
    let mut acc = first;
    for &t in rest {
        acc = g.add(acc, t)?;
    }
    Ok(Some(g.scale(acc, 1.0 / terms.len() as f64)?))
}

/// Unroll the model along the recorded actions and build the loss.
///
/// The imagined tree is advanced with the true branchability labels, so the
/// imagined current node at step `k` is the real node branched at `t + k`.
pub fn build_loss(
    g: &mut Graph<'_>,
    net: &Network,
    traj: &SubtreeTrajectory,
    targets: &[Tensor],
    weights: &LossWeights,
) -> Result<LossVars, TrainError> {
    let codec = net.codec();
    let mut latents: HashMap<usize, (LatentNode, PredictionVars)> = HashMap::new();
    let first = traj.steps.first().ok_or(TrainError::EmptyTrajectory)?;
    let root = net.represent(g, &traj.root_observation)?;
    let root_pred = net.predict(g, &traj.root_observation.graph, &root)?;
    latents.insert(first.node, (root, root_pred));
    let structure = Arc::clone(&traj.root_observation.graph);

    let (mut lp, mut lv, mut lb, mut lt) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut next_target = targets.iter();
    for step in &traj.steps {
        let (lat, pred) = *latents.get(&step.node).ok_or(TrainError::ReplayMismatch(step.step))?;
        if weights.policy != 0.0 {
            let cands = g.gather_rows(pred.policy, Arc::new(step.candidates.clone()))?;
            let row = g.transpose(cands)?;
            lp.push(cross_entropy(g, row, step.policy.clone())?);
        }
        if weights.value != 0.0 && step.value_target < 0.0 {
            let enc = codec.encode(step.value_target)?;
            lv.push(cross_entropy(g, pred.value, enc.probs)?);
        }
        let (Some(action), Some(children)) = (step.action, step.children.as_ref()) else {
            continue;
        };
        let (l, r) = net.dynamics(g, &structure, &lat, action)?;
        for (child, c_lat) in children.iter().zip([l, r]) {
            let c_pred = net.predict(g, &structure, &c_lat)?;
            if weights.branch != 0.0 {
                let label = if child.branchable { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
                lb.push(cross_entropy(g, c_pred.branch, label)?);
            }
            if child.branchable {
                latents.insert(child.node, (c_lat, c_pred));
                if child.observation.is_some() {
                    let target = next_target.next().ok_or(TrainError::ReplayMismatch(step.step))?;
                    if weights.consistency != 0.0 {
                        let online = net.consistency_vector(g, &c_lat, true)?;
                        let t = g.input(target.clone())?;
                        let cos = g.cosine(online, t)?;
                        lt.push(g.scale(cos, -1.0)?);
                    }
                }
            }
        }
    }

    let policy = mean_of(g, &lp)?;
    let value = mean_of(g, &lv)?;
    let branch = mean_of(g, &lb)?;
    let consistency = mean_of(g, &lt)?;
    let mut total: Option<Var> = None;
    for (term, w) in [
        (policy, weights.policy),
        (value, weights.value),
        (branch, weights.branch),
        (consistency, weights.consistency),
    ] {
        if let Some(t) = term {
            let scaled = g.scale(t, w)?;
            total = Some(match total {
                None => scaled,
                Some(acc) => g.add(acc, scaled)?,
            });
        }
    }
    let total = match total {
        Some(t) => t,
        None => g.input(Tensor::scalar(0.0))?,
    };
    Ok(LossVars {
        total,
        policy,
        value,
        branch,
        consistency,
    })
}

/// Loss values and parameter gradients for one trajectory.
pub fn unroll_and_loss(
    net: &Network,
    params: &ParamStore,
    traj: &SubtreeTrajectory,
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradientMap), TrainError> {
    let targets = if weights.consistency != 0.0 {
        consistency_targets(net, params, traj)?
    } else {
        consistency_children(traj).map(|_| Tensor::scalar(0.0)).collect()
    };
    let mut g = Graph::new(params);
    let vars = build_loss(&mut g, net, traj, &targets, weights)?;
    let read = |v: Option<Var>| v.map_or(0.0, |v| g.value(v).item());
    let breakdown = LossBreakdown {
        total: g.value(vars.total).item(),
        policy: read(vars.policy),
        value: read(vars.value),
        branch: read(vars.branch),
        consistency: read(vars.consistency),
    };
    let grads = g.backward(vars.total)?;
    Ok((breakdown, grads))
}

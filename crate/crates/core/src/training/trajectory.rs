//! K-step subtree trajectories cut from recorded episodes.
//!
//! DFS processes a node's subtree in one contiguous run of steps, so the K
//! steps after `t` that stay inside the subtree of the node branched at `t`
//! are exactly the subtree trajectory. Steps past the end of that run are
//! padding.

use crate::bnb::EpisodeRecord;
use crate::milp::BipartiteObservation;

use super::TrainError;

/// A child created during the unroll, with its branchability label and, if
/// it was branched later, the observation seen at its visit.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildTarget {
    pub node: usize,
    pub branchable: bool,
    pub observation: Option<BipartiteObservation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrollStep {
    pub step: usize,
    pub node: usize,
    pub candidates: Vec<usize>,
    /// Recorded policy target aligned with `candidates`.
    pub policy: Vec<f64>,
    /// Value target for the node branched at this step (negative).
    pub value_target: f64,
    /// Recorded action and the children it produced; absent on the last step.
    pub action: Option<usize>,
    pub children: Option<[ChildTarget; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtreeTrajectory {
    pub start: usize,
    pub root_observation: BipartiteObservation,
    /// The `k = 0..=K` steps that stay inside the subtree.
    pub steps: Vec<UnrollStep>,
    /// Action slots out of `K` left as terminal padding after the subtree
    /// is exhausted.
    pub padded: usize,
}

/// How value targets are produced.
pub enum ValueSource<'a> {
    /// Negative recorded subtree size.
    Exact,
    /// `n` real steps of node accounting, then predicted values of the open
    /// branchable frontier. The estimator maps a step index to the predicted
    /// subtree value of the node branched at that step.
    Bootstrap { n: usize, estimate: &'a dyn Fn(usize) -> f64 },
}

fn observation_at(episode: &EpisodeRecord, step: usize) -> Result<&BipartiteObservation, TrainError> {
    episode.steps[step]
        .observation
        .as_ref()
        .ok_or(TrainError::MissingObservation(step))
}

/// `-(subtree size)` of the node branched at `step`.
pub fn exact_value(episode: &EpisodeRecord, step: usize) -> Result<f64, TrainError> {
    let node = episode.steps[step].node;
    let size = episode.nodes[node].subtree_size.ok_or(TrainError::Unlabeled(node))?;
    Ok(-(size as f64))
}

/// n-step target for the node branched at `step`: each of the next `n`
/// branching steps inside its subtree costs the branched node plus any
/// child that was never branched; the branchable frontier left after those
/// steps contributes its estimated values.
pub fn bootstrap_value(
    episode: &EpisodeRecord,
    step: usize,
    n: usize,
    estimate: &dyn Fn(usize) -> f64,
) -> f64 {
    let root = episode.steps[step].node;
    let mut consumed = 0.0;
    let mut frontier: Vec<usize> = vec![root];
    let mut s = step;
    for _ in 0..n {
        if s >= episode.steps.len() || !episode.is_ancestor(root, episode.steps[s].node) {
            break;
        }
        let node = episode.steps[s].node;
        frontier.retain(|&o| o != node);
        consumed += 1.0;
        if let Some((l, r)) = episode.nodes[node].children {
            for c in [l, r] {
                if episode.nodes[c].branchable() {
                    frontier.push(c);
                } else {
                    consumed += 1.0;
                }
            }
        }
        s += 1;
    }
    let tail: f64 = frontier
        .iter()
        .map(|&o| estimate(episode.nodes[o].visit_step.expect("branchable node has a visit step")))
        .sum();
    -consumed + tail
}

/// The trajectory starting at `start`, unrolled for `k` steps.
pub fn extract_trajectory(
    episode: &EpisodeRecord,
    start: usize,
    k: usize,
    values: &ValueSource<'_>,
) -> Result<SubtreeTrajectory, TrainError> {
    if start >= episode.steps.len() {
        return Err(TrainError::StepOutOfRange(start));
    }
    let root = episode.steps[start].node;
    let root_observation = observation_at(episode, start)?.clone();
    let mut steps = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let s = start + j;
        if s >= episode.steps.len() || !episode.is_ancestor(root, episode.steps[s].node) {
            break;
        }
        let rec = &episode.steps[s];
        let value_target = match values {
            ValueSource::Exact => exact_value(episode, s)?,
            ValueSource::Bootstrap { n, estimate } => bootstrap_value(episode, s, *n, *estimate),
        };
        let (action, children) = if j < k {
            let (l, r) = episode.nodes[rec.node]
                .children
                .ok_or(TrainError::Unlabeled(rec.node))?;
            let make = |c: usize| -> Result<ChildTarget, TrainError> {
                let node = &episode.nodes[c];
                let observation = match node.visit_step {
                    Some(v) => Some(observation_at(episode, v)?.clone()),
                    None => None,
                };
                Ok(ChildTarget {
                    node: c,
                    branchable: node.branchable(),
                    observation,
                })
            };
            (Some(rec.action), Some([make(l)?, make(r)?]))
        } else {
            (None, None)
        };
        steps.push(UnrollStep {
            step: s,
            node: rec.node,
            candidates: rec.candidates.clone(),
            policy: rec.policy.clone(),
            value_target,
            action,
            children,
        });
    }
    let padded = k - steps.iter().filter(|s| s.action.is_some()).count();
    Ok(SubtreeTrajectory {
        start,
        root_observation,
        steps,
        padded,
    })
}

/// One exact-target trajectory per branching step.
pub fn extract_trajectories(episode: &EpisodeRecord, k: usize) -> Result<Vec<SubtreeTrajectory>, TrainError> {
    (0..episode.steps.len())
        .map(|t| extract_trajectory(episode, t, k, &ValueSource::Exact))
        .collect()
}

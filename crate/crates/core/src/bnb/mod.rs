//! Depth-first branch and bound with eager child LP solves and full
//! trajectory recording.

mod record;

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{extract_observation, fractional_candidates, GraphStructure, MilpInstance, NodeContext};
use crate::policy::{BranchContext, BranchingPolicy, PolicyError};
use crate::simplex::{solve_cold, solve_warm, BoundChange, LpModel, LpSolution, LpStatus};

pub use record::{
    audit_open_sizes, discovery_step, label_subtree_sizes, read_episode, write_episode, EpisodeRecord, NodeRecord,
    StepRecord, SummaryRow,
};

/// Slack on the bound-dominance test: a node is pruned when
/// `lp_objective >= gub - PRUNE_TOL`.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BnbError {
    #[error("LP at node {node} ended with {status:?}")]
    LpFailure { node: usize, status: LpStatus },
    #[error("policy error at step {step}: {source}")]
    Policy { step: usize, source: PolicyError },
    #[error(transparent)]
    Milp(#[from] crate::milp::MilpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_nodes: usize,
    pub max_seconds: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_nodes: 200_000,
            max_seconds: 600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub limits: Limits,
    /// Warm-start child LPs from the parent basis.
    pub warm_start: bool,
    /// Keep per-step observations (needed for training, heavy for long runs).
    pub record_observations: bool,
    /// Also solve every child cold and record the comparison.
    pub shadow_cold: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            limits: Limits::default(),
            warm_start: true,
            record_observations: true,
            shadow_cold: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Root,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Open,
    Branched,
    PrunedInfeasible,
    PrunedBound,
    PrunedIntegral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Optimal,
    /// Search completed without finding a feasible point.
    Infeasible,
    NodeLimit,
    TimeLimit,
}

/// A node still waiting on the DFS stack.
struct OpenNode {
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    lp: LpSolution,
}

/// Warm vs cold comparison for one child LP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpComparison {
    pub warm_iterations: usize,
    pub cold_iterations: usize,
    pub warm_seconds: f64,
    pub cold_seconds: f64,
    /// `|warm - cold|` objective gap; 0 when both agree on a non-optimal status.
    pub objective_gap: f64,
    pub status_match: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub termination: Termination,
    pub incumbent: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub nodes: usize,
    pub steps: usize,
    pub seconds: f64,
    /// LP iterations spent on the two children of each step.
    pub step_lp_iterations: Vec<usize>,
    /// Seconds spent on the two child LPs of each step.
    pub step_lp_seconds: Vec<f64>,
    pub comparisons: Vec<LpComparison>,
    /// Smallest LP bound among nodes left open (equals the objective when optimal).
    pub best_bound: f64,
    pub episode: EpisodeRecord,
}

impl SolveResult {
    /// `(gub - best_bound) / max(1, |gub|)`, or infinity without an incumbent.
    pub fn dual_gap(&self) -> f64 {
        match self.objective {
            Some(_) if self.termination == Termination::Optimal => 0.0,
            Some(gub) => ((gub - self.best_bound) / gub.abs().max(1.0)).max(0.0),
            None => f64::INFINITY,
        }
    }
}

fn is_integral(inst: &MilpInstance, lp: &LpSolution) -> bool {
    fractional_candidates(inst, &lp.x).is_empty()
}

/// Run DFS branch and bound with `policy` choosing the branching variable.
pub fn solve(
    instance: &MilpInstance,
    policy: &mut dyn BranchingPolicy,
    options: &SolveOptions,
) -> Result<SolveResult, BnbError> {
    let start = Instant::now();
    let model = LpModel::new(instance);
    let graph = Arc::new(GraphStructure::new(instance));
    let mut episode = EpisodeRecord::new(instance.name(), policy.name());
    let mut gub = f64::INFINITY;
    let mut incumbent: Option<Vec<f64>> = None;
    let mut step_lp_iterations = Vec::new();
    let mut step_lp_seconds = Vec::new();
    let mut comparisons = Vec::new();

    let root_lp = solve_cold(&model.root());
    episode.nodes.push(NodeRecord::new(0, None, 0, Side::Root, 0));
    episode.nodes[0].lp_objective = root_lp.is_optimal().then_some(root_lp.objective);
    let mut stack: Vec<OpenNode> = Vec::new();
    match root_lp.status {
        LpStatus::Infeasible => episode.nodes[0].status = NodeStatus::PrunedInfeasible,
        LpStatus::Optimal if is_integral(instance, &root_lp) => {
            episode.nodes[0].status = NodeStatus::PrunedIntegral;
            gub = root_lp.objective;
            incumbent = Some(root_lp.x.clone());
        }
        LpStatus::Optimal => stack.push(OpenNode {
            id: 0,
            lower: instance.lower().to_vec(),
            upper: instance.upper().to_vec(),
            lp: root_lp,
        }),
        status => return Err(BnbError::LpFailure { node: 0, status }),
    }
    episode.root_incumbent = incumbent.as_ref().map(|_| gub);

    let mut termination = None;
    while let Some(node) = stack.pop() {
        if node.lp.objective >= gub - PRUNE_TOL {
            episode.nodes[node.id].status = NodeStatus::PrunedBound;
            continue;
        }
        if episode.nodes.len() + 2 > options.limits.max_nodes {
            termination = Some(Termination::NodeLimit);
            stack.push(node);
            break;
        }
        if start.elapsed().as_secs_f64() > options.limits.max_seconds {
            termination = Some(Termination::TimeLimit);
            stack.push(node);
            break;
        }
        let step = episode.steps.len();
        let depth = episode.nodes[node.id].depth;
        let observation = extract_observation(
            instance,
            &graph,
            &node.lower,
            &node.upper,
            Some(&node.lp),
            NodeContext {
                incumbent: incumbent.as_deref(),
                depth,
            },
        )?;
        let ctx = BranchContext {
            instance,
            model: &model,
            lower: &node.lower,
            upper: &node.upper,
            lp: &node.lp,
            observation: &observation,
            node_id: node.id,
            step,
        };
        let decision = policy
            .decide(&ctx)
            .map_err(|source| BnbError::Policy { step, source })?;
        let action = decision.action;
        if !observation.candidates.contains(&action) {
            return Err(BnbError::Policy {
                step,
                source: PolicyError::OutsideMask(action),
            });
        }

        let value = node.lp.x[action];
        let parent_problem = model.with_bounds(node.lower, node.upper);
        let mut child_ids = [0usize; 2];
        let mut opened: Vec<OpenNode> = Vec::with_capacity(2);
        let mut lp_iters = 0;
        let mut lp_secs = 0.0;
        for (k, (side, change)) in [
            (Side::Left, BoundChange::Upper(action, value.floor())),
            (Side::Right, BoundChange::Lower(action, value.ceil())),
        ]
        .into_iter()
        .enumerate()
        {
            let id = episode.nodes.len();
            child_ids[k] = id;
            let problem = parent_problem.with_change(change);
            let t0 = Instant::now();
            let lp = match (&node.lp.basis, options.warm_start) {
                (Some(b), true) => solve_warm(&problem, b),
                _ => solve_cold(&problem),
            };
            let warm_secs = t0.elapsed().as_secs_f64();
            lp_secs += warm_secs;
            lp_iters += lp.iterations;
            if options.shadow_cold {
                let t1 = Instant::now();
                let cold = solve_cold(&problem);
                let cold_secs = t1.elapsed().as_secs_f64();
                let both = lp.is_optimal() && cold.is_optimal();
                comparisons.push(LpComparison {
                    warm_iterations: lp.iterations,
                    cold_iterations: cold.iterations,
                    warm_seconds: warm_secs,
                    cold_seconds: cold_secs,
                    objective_gap: if both { (lp.objective - cold.objective).abs() } else { 0.0 },
                    status_match: lp.status == cold.status,
                });
            }
            let mut rec = NodeRecord::new(id, Some(node.id), depth + 1, side, step + 1);
            rec.lp_objective = lp.is_optimal().then_some(lp.objective);
            rec.status = match lp.status {
                LpStatus::Infeasible => NodeStatus::PrunedInfeasible,
                LpStatus::Optimal if lp.objective >= gub - PRUNE_TOL => NodeStatus::PrunedBound,
                LpStatus::Optimal if is_integral(instance, &lp) => {
                    gub = lp.objective;
                    incumbent = Some(lp.x.clone());
                    NodeStatus::PrunedIntegral
                }
                LpStatus::Optimal => NodeStatus::Open,
                status => return Err(BnbError::LpFailure { node: id, status }),
            };
            episode.nodes.push(rec);
            if episode.nodes[id].status == NodeStatus::Open {
                let (lower, upper) = problem.into_bounds();
                opened.push(OpenNode { id, lower, upper, lp });
            }
        }
        step_lp_iterations.push(lp_iters);
        step_lp_seconds.push(lp_secs);
        let parent = &mut episode.nodes[node.id];
        parent.status = NodeStatus::Branched;
        parent.children = Some((child_ids[0], child_ids[1]));
        parent.branch_var = Some(action);
        parent.visit_step = Some(step);
        // right first so the left child is expanded next
        for child in opened.into_iter().rev() {
            stack.push(child);
        }
        episode.steps.push(StepRecord {
            step,
            node: node.id,
            action,
            candidates: observation.candidates.clone(),
            policy: decision.distribution,
            incumbent_objective: incumbent.as_ref().map(|_| gub),
            open_after: stack.iter().map(|o| o.id).collect(),
            nodes_after: episode.nodes.len(),
            observation: options.record_observations.then_some(observation),
        });
    }

    let termination = termination.unwrap_or(if incumbent.is_some() {
        Termination::Optimal
    } else {
        Termination::Infeasible
    });
    let best_bound = if termination == Termination::Optimal {
        gub
    } else {
        stack
            .iter()
            .map(|o| o.lp.objective)
            .filter(|&v| v < gub - PRUNE_TOL)
            .fold(gub, f64::min)
    };
    episode.complete = matches!(termination, Termination::Optimal | Termination::Infeasible);
    episode.final_objective = incumbent.as_ref().map(|_| gub);
    label_subtree_sizes(&mut episode);
    Ok(SolveResult {
        termination,
        objective: incumbent.as_ref().map(|_| gub),
        incumbent,
        nodes: episode.nodes.len(),
        steps: episode.steps.len(),
        seconds: start.elapsed().as_secs_f64(),
        step_lp_iterations,
        step_lp_seconds,
        comparisons,
        best_bound,
        episode,
    })
}

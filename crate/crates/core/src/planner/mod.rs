//! Gumbel search over imagined B&B subtrees.
//!
//! Each search node holds an imagined tree (open and closed latent nodes).
//! Expanding an edge applies the dynamics function once to the deepest,
//! leftmost open node and evaluates both children with the prediction
//! function. The root uses Gumbel top-k plus sequential halving; deeper
//! nodes use the deterministic `pi' - N / (1 + sum N)` rule.

mod network;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::argmax;

pub use network::{NetworkSearchModel, PlannerPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("model failure: {0}")]
    Model(String),
    #[error("no candidate actions at the root")]
    EmptyActions,
    #[error("invalid search config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelConfig {
    pub simulations: usize,
    /// Root actions sampled for sequential halving (`M`).
    pub considered: usize,
    pub c_visit: f64,
    pub c_scale: f64,
    /// Imagined nodes with predicted branchability at or above this are open.
    pub branch_threshold: f64,
    /// Imagined trees whose current node is deeper than this stop expanding.
    pub max_depth: usize,
    /// Multiplier on the root Gumbel noise; 0 gives greedy, noise-free search.
    pub gumbel_scale: f64,
    pub trace: bool,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig {
            simulations: 50,
            considered: 10,
            c_visit: 50.0,
            c_scale: 0.1,
            branch_threshold: 0.5,
            max_depth: 64,
            gumbel_scale: 1.0,
            trace: false,
        }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.considered == 0 {
            return Err(PlannerError::Config("considered actions must be >= 1".into()));
        }
        if self.simulations > 0 && self.simulations < self.considered {
            return Err(PlannerError::Config(format!(
                "{} simulations cannot cover {} considered actions",
                self.simulations, self.considered
            )));
        }
        if !(self.c_visit >= 0.0 && self.c_scale >= 0.0 && self.gumbel_scale >= 0.0) {
            return Err(PlannerError::Config("negative search constant".into()));
        }
        Ok(())
    }
}

/// Output of the prediction function for one latent node.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// One logit per variable of the instance.
    pub policy_logits: Vec<f64>,
    /// Predicted subtree value (negative node count).
    pub value: f64,
    pub branch_prob: f64,
}

/// The learned model as seen by the search: `g` and `f` on opaque latents.
pub trait SearchModel {
    type Latent: Clone;
    fn dynamics(&mut self, latent: &Self::Latent, action: usize) -> Result<(Self::Latent, Self::Latent), PlannerError>;
    fn predict(&mut self, latent: &Self::Latent) -> Result<Evaluation, PlannerError>;
}

#[derive(Debug, Clone)]
pub struct ImaginedNode<L> {
    pub latent: L,
    pub depth: usize,
    /// Left (0) / right (1) turns from the root; orders nodes of equal depth.
    pub path: Vec<u8>,
    pub eval: Arc<Evaluation>,
}

#[derive(Debug, Clone)]
pub struct ImaginedTree<L> {
    pub open: Vec<ImaginedNode<L>>,
    pub closed: Vec<ImaginedNode<L>>,
    /// Set once the tree stops evolving: empty open set (value 0) or depth cap.
    frozen: Option<f64>,
    /// Latent fed to `g` once frozen, so every simulation still costs one call.
    sentinel: L,
}

impl<L: Clone> ImaginedTree<L> {
    fn new(root: ImaginedNode<L>) -> Self {
        let sentinel = root.latent.clone();
        ImaginedTree {
            open: vec![root],
            closed: Vec::new(),
            frozen: None,
            sentinel,
        }
    }

    /// Index of the deepest open node, leftmost among equals.
    pub fn current(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, o) in self.open.iter().enumerate() {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let cur = &self.open[b];
                    if o.depth > cur.depth || (o.depth == cur.depth && o.path < cur.path) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }

    pub fn is_terminal(&self) -> bool {
        self.open.is_empty()
    }

    /// Sum of the open nodes' predicted subtree values.
    pub fn value(&self) -> f64 {
        self.frozen.unwrap_or_else(|| self.open.iter().map(|o| o.eval.value).sum())
    }
}

struct SearchNode<L> {
    tree: ImaginedTree<L>,
    /// Children of the parent's current node closed on arrival.
    closed: f64,
    /// 1 for a real branching transition, 0 once the tree is frozen.
    step_cost: f64,
    actions: Arc<Vec<usize>>,
    log_prior: Vec<f64>,
    children: Vec<Option<usize>>,
    visits: Vec<u32>,
    q: Vec<f64>,
}

impl<L> SearchNode<L> {
    fn max_visits(&self) -> u32 {
        self.visits.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    /// `(search node, action)` pairs from the root down.
    pub path: Vec<(usize, usize)>,
    /// Return backed up into each edge of `path`.
    pub returns: Vec<f64>,
    pub leaf: usize,
    pub leaf_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub simulations: Vec<SimulationTrace>,
    /// Final `(node, action, visits, q)` for every visited edge.
    pub edges: Vec<(usize, usize, u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub action: usize,
    /// Improved policy aligned with the root candidates.
    pub policy: Vec<f64>,
    pub root_visits: Vec<u32>,
    pub root_q: Vec<f64>,
    /// Normalized value of every visited edge in the tree.
    pub normalized_q: Vec<f64>,
    pub simulations: usize,
    pub dynamics_calls: usize,
    pub prediction_calls: usize,
    pub trace: Option<SearchTrace>,
}

/// Visits per surviving arm in each halving phase, as `(survivors, per_arm)`
/// before the budget cap; the last phase absorbs any remainder.
pub fn halving_schedule(considered: usize, simulations: usize) -> Vec<(usize, usize)> {
    let phases = phase_count(considered);
    let mut out = Vec::with_capacity(phases);
    let mut survivors = considered;
    let mut used = 0;
    for p in 0..phases {
        let per_arm = if p + 1 == phases {
            simulations.saturating_sub(used).div_ceil(survivors)
        } else {
            (simulations / (phases * survivors)).max(1)
        };
        used += per_arm * survivors;
        out.push((survivors, per_arm));
        survivors = survivors.div_ceil(2);
    }
    out
}

fn phase_count(considered: usize) -> usize {
    (usize::BITS - (considered.max(1) - 1).leading_zeros()).max(1) as usize
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - z).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `sigma(Q~(a)) = (c_visit + max_b N(b)) * c_scale * Q~(a)`, where `Q~` is the
/// normalized value for visited actions and the prior-weighted mean of the
/// visited values otherwise (0 when nothing was visited).
pub fn completed_sigma(log_prior: &[f64], q_normalized: &[Option<f64>], max_visits: u32, config: &GumbelConfig) -> Vec<f64> {
    let prior = softmax(log_prior);
    let mut weight = 0.0;
    let mut acc = 0.0;
    for (p, q) in prior.iter().zip(q_normalized) {
        if let Some(q) = q {
            weight += p;
            acc += p * q;
        }
    }
    let completion = if weight > 0.0 { acc / weight } else { 0.0 };
    let scale = (config.c_visit + f64::from(max_visits)) * config.c_scale;
    q_normalized.iter().map(|q| scale * q.unwrap_or(completion)).collect()
}

/// `pi' = softmax(P + sigma(Q~))` with `P` given as log-probabilities.
pub fn improved_policy(log_prior: &[f64], q_normalized: &[Option<f64>], max_visits: u32, config: &GumbelConfig) -> Vec<f64> {
    let sigma = completed_sigma(log_prior, q_normalized, max_visits, config);
    let logits: Vec<f64> = log_prior.iter().zip(&sigma).map(|(p, s)| p + s).collect();
    softmax(&logits)
}

/// `argmax_a pi'(a) - N(a) / (1 + sum_b N(b))`, lowest index on ties.
pub fn select_interior(pi: &[f64], visits: &[u32]) -> usize {
    let total = f64::from(visits.iter().sum::<u32>());
    let scores: Vec<f64> = pi.iter().zip(visits).map(|(p, &n)| p - f64::from(n) / (1.0 + total)).collect();
    argmax(&scores)
}

struct Search<'a, M: SearchModel> {
    model: &'a mut M,
    config: GumbelConfig,
    interior: Arc<Vec<usize>>,
    nodes: Vec<SearchNode<M::Latent>>,
    dynamics_calls: usize,
    prediction_calls: usize,
    trace: Option<SearchTrace>,
}

impl<M: SearchModel> Search<'_, M> {
    fn q_bounds(&self) -> Option<(f64, f64)> {
        let mut bounds: Option<(f64, f64)> = None;
        for node in &self.nodes {
            for (k, &n) in node.visits.iter().enumerate() {
                if n > 0 {
                    let q = node.q[k];
                    bounds = Some(match bounds {
                        None => (q, q),
                        Some((lo, hi)) => (lo.min(q), hi.max(q)),
                    });
                }
            }
        }
        bounds
    }

    fn normalize(&self, q: f64, bounds: Option<(f64, f64)>) -> f64 {
        match bounds {
            Some((lo, hi)) if hi > lo => ((q - lo) / (hi - lo)).clamp(0.0, 1.0),
            // a single distinct value carries no ordering information
            _ => 0.5,
        }
    }

    /// `sigma(Q~)` for every action of `node`.
    fn sigma_completed(&self, node: usize) -> Vec<f64> {
        let bounds = self.q_bounds();
        let nd = &self.nodes[node];
        let q: Vec<Option<f64>> = nd
            .visits
            .iter()
            .zip(&nd.q)
            .map(|(&n, &q)| (n > 0).then(|| self.normalize(q, bounds)))
            .collect();
        completed_sigma(&nd.log_prior, &q, nd.max_visits(), &self.config)
    }

    fn improved_policy(&self, node: usize) -> Vec<f64> {
        let sigma = self.sigma_completed(node);
        let logits: Vec<f64> = self.nodes[node].log_prior.iter().zip(&sigma).map(|(p, s)| p + s).collect();
        softmax(&logits)
    }

    fn select_interior(&self, node: usize) -> usize {
        select_interior(&self.improved_policy(node), &self.nodes[node].visits)
    }

    fn make_node(
        &self,
        tree: ImaginedTree<M::Latent>,
        closed: f64,
        step_cost: f64,
        actions: Arc<Vec<usize>>,
        logits: Option<&[f64]>,
    ) -> SearchNode<M::Latent> {
        let raw: Vec<f64> = match logits {
            Some(l) => actions.iter().map(|&a| l[a]).collect(),
            None => vec![0.0; actions.len()],
        };
        let k = actions.len();
        SearchNode {
            tree,
            closed,
            step_cost,
            log_prior: log_softmax(&raw),
            actions,
            children: vec![None; k],
            visits: vec![0; k],
            q: vec![0.0; k],
        }
    }

    /// Apply `g` to the tree of `node` under `action` and evaluate the children.
    fn expand(&mut self, node: usize, action: usize) -> Result<usize, PlannerError> {
        let tree = &self.nodes[node].tree;
        let (mut next, cur) = if tree.frozen.is_some() {
            (tree.clone(), None)
        } else {
            let mut t = tree.clone();
            let idx = t.current().expect("unfrozen tree has an open node");
            let cur = t.open.remove(idx);
            t.sentinel = cur.latent.clone();
            (t, Some(cur))
        };
        let parent_latent = match &cur {
            Some(c) => c.latent.clone(),
            None => next.sentinel.clone(),
        };
        let (l, r) = self.model.dynamics(&parent_latent, action)?;
        self.dynamics_calls += 1;
        let el = self.model.predict(&l)?;
        let er = self.model.predict(&r)?;
        self.prediction_calls += 2;
        let Some(cur) = cur else {
            let interior = Arc::clone(&self.interior);
            let n = self.make_node(next, 0.0, 0.0, interior, None);
            self.nodes.push(n);
            return Ok(self.nodes.len() - 1);
        };
        let mut closed = 0.0;
        for (side, latent, eval) in [(0u8, l, el), (1u8, r, er)] {
            let mut path = cur.path.clone();
            path.push(side);
            let child = ImaginedNode {
                latent,
                depth: cur.depth + 1,
                path,
                eval: Arc::new(eval),
            };
            if child.eval.branch_prob >= self.config.branch_threshold {
                next.open.push(child);
            } else {
                closed += 1.0;
                next.closed.push(child);
            }
        }
        let logits = match next.current() {
            None => {
                next.frozen = Some(0.0);
                None
            }
            Some(i) => {
                if next.open[i].depth > self.config.max_depth {
                    next.frozen = Some(next.value());
                }
                Some(Arc::clone(&next.open[i].eval))
            }
        };
        let interior = Arc::clone(&self.interior);
        let n = self.make_node(next, closed, 1.0, interior, logits.as_deref().map(|e| &e.policy_logits[..]));
        self.nodes.push(n);
        Ok(self.nodes.len() - 1)
    }

    fn simulate(&mut self, root_action: usize) -> Result<(), PlannerError> {
        let mut path = vec![(0usize, root_action)];
        let mut node = 0;
        let mut idx = root_action;
        while let Some(child) = self.nodes[node].children[idx] {
            node = child;
            idx = self.select_interior(node);
            path.push((node, idx));
        }
        let action = self.nodes[node].actions[idx];
        let leaf = self.expand(node, action)?;
        self.nodes[node].children[idx] = Some(leaf);

        // G^k = -(l-k) + v^l, less one per imagined node closed on arrival
        let leaf_value = self.nodes[leaf].tree.value();
        let mut g = leaf_value;
        let mut child = leaf;
        let mut returns = vec![0.0; path.len()];
        for (k, &(nd, ix)) in path.iter().enumerate().rev() {
            g -= self.nodes[child].closed;
            let n = &mut self.nodes[nd];
            let v = f64::from(n.visits[ix]);
            n.q[ix] = (v * n.q[ix] + g) / (v + 1.0);
            n.visits[ix] += 1;
            returns[k] = g;
            g -= self.nodes[child].step_cost;
            child = nd;
        }
        if let Some(t) = &mut self.trace {
            t.simulations.push(SimulationTrace {
                path,
                returns,
                leaf,
                leaf_value,
            });
        }
        Ok(())
    }
}

/// Run Gumbel search from a root latent.
///
/// `root_eval` is the prediction at the root (computed by the caller, not
/// counted); `candidates` are the real fractional variables and `interior`
/// the action set used inside the imagined tree.
pub fn search<M: SearchModel>(
    model: &mut M,
    root_latent: M::Latent,
    root_eval: Evaluation,
    candidates: &[usize],
    interior: Arc<Vec<usize>>,
    config: &GumbelConfig,
    seed: u64,
) -> Result<SearchOutcome, PlannerError> {
    if candidates.is_empty() {
        return Err(PlannerError::EmptyActions);
    }
    config.validate()?;
    let root_logits: Vec<f64> = candidates.iter().map(|&j| root_eval.policy_logits[j]).collect();
    if config.simulations == 0 {
        let action = candidates[argmax(&root_logits)];
        return Ok(SearchOutcome {
            action,
            policy: softmax(&root_logits),
            root_visits: vec![0; candidates.len()],
            root_q: vec![0.0; candidates.len()],
            normalized_q: Vec::new(),
            simulations: 0,
            dynamics_calls: 0,
            prediction_calls: 0,
            trace: config.trace.then(|| SearchTrace {
                simulations: Vec::new(),
                edges: Vec::new(),
            }),
        });
    }

    let root = ImaginedNode {
        latent: root_latent,
        depth: 0,
        path: Vec::new(),
        eval: Arc::new(root_eval),
    };
    let tree = ImaginedTree::new(root);
    let mut s = Search {
        model,
        config: *config,
        interior,
        nodes: Vec::new(),
        dynamics_calls: 0,
        prediction_calls: 0,
        trace: config.trace.then(|| SearchTrace {
            simulations: Vec::new(),
            edges: Vec::new(),
        }),
    };
    let root_eval = Arc::clone(&tree.open[0].eval);
    let root_node = s.make_node(tree, 0.0, 1.0, Arc::new(candidates.to_vec()), Some(&root_eval.policy_logits));
    s.nodes.push(root_node);

    let k = candidates.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gumbel = Gumbel::new(0.0, 1.0).expect("standard Gumbel");
    let noise: Vec<f64> = (0..k).map(|_| config.gumbel_scale * gumbel.sample(&mut rng)).collect();
    let log_prior = s.nodes[0].log_prior.clone();
    let base: Vec<f64> = noise.iter().zip(&log_prior).map(|(g, p)| g + p).collect();

    // Gumbel top-M, ties to the lowest candidate position
    let m = config.considered.min(k);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| base[b].total_cmp(&base[a]).then(a.cmp(&b)));
    let mut survivors: Vec<usize> = order[..m].to_vec();

    let score = |s: &Search<'_, M>, a: usize| base[a] + s.sigma_completed(0)[a];
    let mut used = 0;
    for (phase, (_, per_arm)) in halving_schedule(m, config.simulations).into_iter().enumerate() {
        debug_assert_eq!(phase == 0, survivors.len() == m);
        'phase: for _ in 0..per_arm {
            for &a in &survivors {
                if used == config.simulations {
                    break 'phase;
                }
                s.simulate(a)?;
                used += 1;
            }
        }
        let mut ranked: Vec<(usize, f64)> = survivors.iter().map(|&a| (a, score(&s, a))).collect();
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        ranked.truncate(survivors.len().div_ceil(2));
        survivors = ranked.into_iter().map(|(a, _)| a).collect();
    }
    // the last phase leaves a single survivor unless M = 1 (already single)
    let winner = survivors[0];

    let policy = s.improved_policy(0);
    let bounds = s.q_bounds();
    let mut normalized_q = Vec::new();
    let mut edges = Vec::new();
    for (id, node) in s.nodes.iter().enumerate() {
        for (ix, &n) in node.visits.iter().enumerate() {
            if n > 0 {
                normalized_q.push(s.normalize(node.q[ix], bounds));
                edges.push((id, ix, n, node.q[ix]));
            }
        }
    }
    let mut trace = s.trace.take();
    if let Some(t) = &mut trace {
        t.edges = edges;
    }
    Ok(SearchOutcome {
        action: candidates[winner],
        policy,
        root_visits: s.nodes[0].visits.clone(),
        root_q: s.nodes[0].q.clone(),
        normalized_q,
        simulations: used,
        dynamics_calls: s.dynamics_calls,
        prediction_calls: s.prediction_calls,
        trace,
    })
}

#[cfg(test)]
mod tests;

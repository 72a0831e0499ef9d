//! The learned network behind the search, and the policy that plans with it.

use std::sync::Arc;

use super::{search, Evaluation, GumbelConfig, PlannerError, SearchModel, SearchOutcome};
use crate::milp::{BipartiteObservation, GraphStructure};
use crate::model::{LatentNode, Network};
use crate::policy::{BranchContext, BranchingDecision, BranchingPolicy, PolicyError};
use crate::tensor::{Graph, ParamStore, Tensor, TensorError};

/// Latent embeddings held outside any tape.
#[derive(Debug, Clone)]
pub struct TensorLatent {
    pub v: Arc<Tensor>,
    pub c: Arc<Tensor>,
    pub e: Arc<Tensor>,
}

fn model_err(e: impl std::fmt::Display) -> PlannerError {
    PlannerError::Model(e.to_string())
}

/// Runs each `g` / `f` call on a fresh tape so a search keeps only latents.
pub struct NetworkSearchModel<'a> {
    net: &'a Network,
    params: &'a ParamStore,
    structure: Arc<GraphStructure>,
}

impl<'a> NetworkSearchModel<'a> {
    pub fn new(net: &'a Network, params: &'a ParamStore, structure: Arc<GraphStructure>) -> Self {
        NetworkSearchModel { net, params, structure }
    }

    fn load(&self, g: &mut Graph<'_>, lat: &TensorLatent) -> Result<LatentNode, TensorError> {
        Ok(LatentNode {
            v: g.input((*lat.v).clone())?,
            c: g.input((*lat.c).clone())?,
            e: g.input((*lat.e).clone())?,
        })
    }

    fn evaluate(&self, g: &mut Graph<'_>, lat: &LatentNode) -> Result<Evaluation, PlannerError> {
        let p = self.net.predict(g, &self.structure, lat).map_err(model_err)?;
        let pred = self.net.read(g, &p).map_err(model_err)?;
        Ok(Evaluation {
            policy_logits: pred.policy_logits,
            value: pred.value,
            branch_prob: pred.branch_prob,
        })
    }

    /// `h` then `f` on a real observation.
    pub fn root(&self, obs: &BipartiteObservation) -> Result<(TensorLatent, Evaluation), PlannerError> {
        let mut g = Graph::new(self.params);
        let lat = self.net.represent(&mut g, obs).map_err(model_err)?;
        let eval = self.evaluate(&mut g, &lat)?;
        let out = TensorLatent {
            v: Arc::new(g.value(lat.v).clone()),
            c: Arc::new(g.value(lat.c).clone()),
            e: Arc::new(g.value(lat.e).clone()),
        };
        Ok((out, eval))
    }
}

impl SearchModel for NetworkSearchModel<'_> {
    type Latent = TensorLatent;

    fn dynamics(&mut self, latent: &TensorLatent, action: usize) -> Result<(TensorLatent, TensorLatent), PlannerError> {
        let mut g = Graph::new(self.params);
        let lat = self.load(&mut g, latent).map_err(model_err)?;
        let (l, r) = self.net.dynamics(&mut g, &self.structure, &lat, action).map_err(model_err)?;
        let wrap = |x: LatentNode| TensorLatent {
            v: Arc::new(g.value(x.v).clone()),
            c: Arc::new(g.value(x.c).clone()),
            e: Arc::clone(&latent.e),
        };
        Ok((wrap(l), wrap(r)))
    }

    fn predict(&mut self, latent: &TensorLatent) -> Result<Evaluation, PlannerError> {
        let mut g = Graph::new(self.params);
        let lat = self.load(&mut g, latent).map_err(model_err)?;
        self.evaluate(&mut g, &lat)
    }
}

/// Running totals over every search a [`PlannerPolicy`] has made.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlannerStats {
    pub searches: usize,
    pub simulations: usize,
    pub dynamics_calls: usize,
    pub prediction_calls: usize,
}

/// Branch on the Gumbel search winner.
pub struct PlannerPolicy {
    net: Arc<Network>,
    params: Arc<ParamStore>,
    config: GumbelConfig,
    seed: u64,
    stats: PlannerStats,
    last: Option<SearchOutcome>,
}

impl PlannerPolicy {
    pub fn new(net: Arc<Network>, params: Arc<ParamStore>, config: GumbelConfig, seed: u64) -> Self {
        PlannerPolicy {
            net,
            params,
            config,
            seed,
            stats: PlannerStats::default(),
            last: None,
        }
    }

    pub fn set_params(&mut self, params: Arc<ParamStore>) {
        self.params = params;
    }

    pub fn stats(&self) -> PlannerStats {
        self.stats
    }

    pub fn last_outcome(&self) -> Option<&SearchOutcome> {
        self.last.as_ref()
    }

    pub fn plan(&mut self, obs: &BipartiteObservation, seed: u64) -> Result<SearchOutcome, PlannerError> {
        let mut model = NetworkSearchModel::new(&self.net, &self.params, Arc::clone(&obs.graph));
        let (lat, eval) = model.root(obs)?;
        let interior = Arc::clone(&obs.graph.integers);
        let out = search(&mut model, lat, eval, &obs.candidates, interior, &self.config, seed)?;
        self.stats.searches += 1;
        self.stats.simulations += out.simulations;
        self.stats.dynamics_calls += out.dynamics_calls;
        self.stats.prediction_calls += out.prediction_calls;
        Ok(out)
    }
}

impl BranchingPolicy for PlannerPolicy {
    fn name(&self) -> &str {
        "plan"
    }

    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError> {
        if ctx.candidates().is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let seed = self.seed ^ ((ctx.node_id as u64) << 32 ^ ctx.step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let out = self
            .plan(ctx.observation, seed)
            .map_err(|e| PolicyError::Model(e.to_string()))?;
        let decision = BranchingDecision {
            action: out.action,
            distribution: out.policy.clone(),
            scores: Some(out.root_visits.iter().map(|&n| f64::from(n)).collect()),
        };
        self.last = Some(out);
        Ok(decision)
    }
}

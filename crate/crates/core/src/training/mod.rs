//! Replay, subtree trajectories, the unrolled loss and the act/learn loop.

mod loss;
mod optim;
mod replay;
mod trajectory;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::{solve, Limits, SolveOptions};
use crate::config::{family_params, family_params_string, parse_value, ConfigError, KeyValues};
use crate::milp::{generate, Family, FamilyParams, GeneratorConfig};
use crate::model::{CodecError, ModelConfig, Network};
use crate::planner::{GumbelConfig, PlannerPolicy};
use crate::policy::NetworkPolicy;
use crate::tensor::{GradientMap, ParamStore, TensorError};

pub use loss::{build_loss, consistency_targets, unroll_and_loss, LossBreakdown, LossVars, LossWeights};
pub use optim::{clip_global_norm, cosine_lr, Adam};
pub use replay::ReplayBuffer;
pub use trajectory::{
    bootstrap_value, exact_value, extract_trajectories, extract_trajectory, ChildTarget, SubtreeTrajectory,
    UnrollStep, ValueSource,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("node {0} has no subtree label")]
    Unlabeled(usize),
    #[error("step {0} has no stored observation")]
    MissingObservation(usize),
    #[error("step {0} is past the end of the episode")]
    StepOutOfRange(usize),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("recorded action sequence leaves the imagined tree at step {0}")]
    ReplayMismatch(usize),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("acting failed: {0}")]
    Acting(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueMode {
    Exact,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub training_steps: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub unroll_steps: usize,
    pub td_steps: usize,
    pub value_mode: ValueMode,
    pub replay_capacity: usize,
    pub sync_every: usize,
    pub weights: LossWeights,
    pub grad_clip: f64,
    pub model: ModelConfig,
    pub search: GumbelConfig,
    pub family: Family,
    pub family_params: FamilyParams,
    /// Episodes played before the first update.
    pub warmup_episodes: usize,
    /// One new episode every this many updates (0 = never after warmup).
    pub act_every: usize,
    pub actor_node_limit: usize,
    pub eval_every: usize,
    pub eval_instances: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            training_steps: 20_000,
            batch_size: 32,
            lr_start: 1e-3,
            lr_end: 1e-5,
            unroll_steps: 3,
            td_steps: 3,
            value_mode: ValueMode::Exact,
            replay_capacity: 100_000,
            sync_every: 100,
            weights: LossWeights::default(),
            grad_clip: 10.0,
            model: ModelConfig::default(),
            search: GumbelConfig {
                simulations: 8,
                considered: 4,
                ..GumbelConfig::default()
            },
            family: Family::CombinatorialAuction,
            family_params: FamilyParams::CombinatorialAuction { items: 15, bids: 30 },
            warmup_episodes: 20,
            act_every: 50,
            actor_node_limit: 5_000,
            eval_every: 0,
            eval_instances: 20,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Apply `key = value` overrides; unknown keys are an error.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<(), ConfigError> {
        let mut params_text: Option<String> = None;
        for (k, v) in kv.iter() {
            match k {
                "seed" => self.seed = parse_value(k, v)?,
                "training_steps" => self.training_steps = parse_value(k, v)?,
                "batch_size" => self.batch_size = parse_value(k, v)?,
                "lr_start" => self.lr_start = parse_value(k, v)?,
                "lr_end" => self.lr_end = parse_value(k, v)?,
                "unroll_steps" => self.unroll_steps = parse_value(k, v)?,
                "td_steps" => self.td_steps = parse_value(k, v)?,
                "value_target" => {
                    self.value_mode = match v {
                        "exact" => ValueMode::Exact,
                        "bootstrap" => ValueMode::Bootstrap,
                        _ => return Err(parse_value::<u8>(k, v).unwrap_err()),
                    }
                }
                "replay_capacity" => self.replay_capacity = parse_value(k, v)?,
                "sync_every" => self.sync_every = parse_value(k, v)?,
                "policy_loss_coef" => self.weights.policy = parse_value(k, v)?,
                "value_loss_coef" => self.weights.value = parse_value(k, v)?,
                "branch_loss_coef" => self.weights.branch = parse_value(k, v)?,
                "consistency_loss_coef" => self.weights.consistency = parse_value(k, v)?,
                "grad_clip" => self.grad_clip = parse_value(k, v)?,
                "hidden_dim" => self.model.d_h = parse_value(k, v)?,
                "proj_dim" => self.model.d_proj = parse_value(k, v)?,
                "value_bins" => self.model.m_b = parse_value(k, v)?,
                "hl_sigma" => self.model.sigma_g = parse_value(k, v)?,
                "simulations" => self.search.simulations = parse_value(k, v)?,
                "considered_actions" => self.search.considered = parse_value(k, v)?,
                "c_visit" => self.search.c_visit = parse_value(k, v)?,
                "c_scale" => self.search.c_scale = parse_value(k, v)?,
                "family" => self.family = v.parse().map_err(|_| parse_value::<u8>(k, v).unwrap_err())?,
                "family_params" => params_text = Some(v.to_string()),
                "warmup_episodes" => self.warmup_episodes = parse_value(k, v)?,
                "act_every" => self.act_every = parse_value(k, v)?,
                "actor_node_limit" => self.actor_node_limit = parse_value(k, v)?,
                "eval_every" => self.eval_every = parse_value(k, v)?,
                "eval_instances" => self.eval_instances = parse_value(k, v)?,
                "checkpoint_every" => self.checkpoint_every = parse_value(k, v)?,
                _ => return Err(ConfigError::Unknown(k.to_string())),
            }
        }
        match params_text {
            Some(p) => self.family_params = family_params(self.family, &p)?,
            None if GeneratorConfig { params: self.family_params, seed: 0 }.family() != self.family => {
                self.family_params = GeneratorConfig::desk(self.family, 0).params;
            }
            None => {}
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let value_target = match self.value_mode {
            ValueMode::Exact => "exact",
            ValueMode::Bootstrap => "bootstrap",
        };
        let lines = [
            format!("seed = {}", self.seed),
            format!("training_steps = {}", self.training_steps),
            format!("batch_size = {}", self.batch_size),
            format!("lr_start = {}", self.lr_start),
            format!("lr_end = {}", self.lr_end),
            format!("unroll_steps = {}", self.unroll_steps),
            format!("td_steps = {}", self.td_steps),
            format!("value_target = {value_target}"),
            format!("replay_capacity = {}", self.replay_capacity),
            format!("sync_every = {}", self.sync_every),
            format!("policy_loss_coef = {}", self.weights.policy),
            format!("value_loss_coef = {}", self.weights.value),
            format!("branch_loss_coef = {}", self.weights.branch),
            format!("consistency_loss_coef = {}", self.weights.consistency),
            format!("grad_clip = {}", self.grad_clip),
            format!("hidden_dim = {}", self.model.d_h),
            format!("proj_dim = {}", self.model.d_proj),
            format!("value_bins = {}", self.model.m_b),
            format!("hl_sigma = {}", self.model.sigma_g),
            format!("simulations = {}", self.search.simulations),
            format!("considered_actions = {}", self.search.considered),
            format!("c_visit = {}", self.search.c_visit),
            format!("c_scale = {}", self.search.c_scale),
            format!("family = {}", self.family.short()),
            format!("family_params = {}", family_params_string(&self.family_params)),
            format!("warmup_episodes = {}", self.warmup_episodes),
            format!("act_every = {}", self.act_every),
            format!("actor_node_limit = {}", self.actor_node_limit),
            format!("eval_every = {}", self.eval_every),
            format!("eval_instances = {}", self.eval_instances),
            format!("checkpoint_every = {}", self.checkpoint_every),
        ];
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, v: String| ConfigError::Value { key: k.into(), value: v };
        if self.batch_size == 0 {
            return Err(bad("batch_size", "0".into()));
        }
        if self.sync_every == 0 {
            return Err(bad("sync_every", "0".into()));
        }
        if self.unroll_steps == 0 {
            return Err(bad("unroll_steps", "0".into()));
        }
        let w = self.weights;
        if [w.policy, w.value, w.branch, w.consistency].iter().any(|&x| x < 0.0) {
            return Err(bad("loss coefficients", "negative".into()));
        }
        self.model.validate().map_err(|e| bad("model", e))?;
        self.search.validate().map_err(|e| bad("search", e.to_string()))?;
        Ok(())
    }

    /// Seed of the `i`-th training instance.
    pub fn train_instance(&self, i: u64) -> GeneratorConfig {
        GeneratorConfig {
            params: self.family_params,
            seed: self.seed.wrapping_mul(1_000_003).wrapping_add(i),
        }
    }

    /// Held-out instances use a disjoint seed range.
    pub fn eval_instance(&self, i: u64) -> GeneratorConfig {
        GeneratorConfig {
            params: self.family_params,
            seed: (1u64 << 40) + i,
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub branch_loss: f64,
    pub consistency_loss: f64,
    pub grad_norm: f64,
    pub replay_steps: usize,
    pub episodes: usize,
    pub eval_nodes: Option<f64>,
}

pub struct TrainOutcome {
    pub network: Arc<Network>,
    pub params: ParamStore,
    pub curve: Vec<CurveRow>,
    /// Update counts at which actor parameters were refreshed.
    pub actor_syncs: Vec<usize>,
    pub episodes: usize,
}

/// Sum of losses and gradients over a batch, averaged.
pub fn batch_gradients(
    net: &Network,
    params: &ParamStore,
    batch: &[SubtreeTrajectory],
    weights: &LossWeights,
) -> Result<(LossBreakdown, GradientMap), TrainError> {
    let mut total = LossBreakdown::default();
    let mut grads = GradientMap::new();
    let s = 1.0 / batch.len().max(1) as f64;
    for traj in batch {
        let (l, g) = unroll_and_loss(net, params, traj, weights)?;
        total.add_scaled(&l, s);
        grads.merge(&g);
    }
    grads.scale(s);
    Ok((total, grads))
}

/// Geometric-mean node count of the policy head on held-out instances.
pub fn evaluate_policy_head(
    net: &Arc<Network>,
    params: &Arc<ParamStore>,
    instances: &[GeneratorConfig],
    node_limit: usize,
) -> Result<f64, TrainError> {
    let mut counts = Vec::with_capacity(instances.len());
    for cfg in instances {
        let inst = generate(cfg).map_err(|e| TrainError::Acting(e.to_string()))?;
        let mut policy = NetworkPolicy::new(Arc::clone(net), Arc::clone(params), 0.0, 0);
        let opts = SolveOptions {
            limits: Limits {
                max_nodes: node_limit,
                max_seconds: 600.0,
            },
            record_observations: false,
            ..SolveOptions::default()
        };
        let r = solve(&inst, &mut policy, &opts).map_err(|e| TrainError::Acting(e.to_string()))?;
        counts.push(r.nodes as f64);
    }
    Ok(crate::eval::geometric_mean(&counts))
}

struct Learner<'a> {
    config: &'a TrainConfig,
    net: Arc<Network>,
    params: ParamStore,
    /// Snapshot used by actors and bootstrap targets; refreshed every `sync_every` updates.
    target: Arc<ParamStore>,
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    played: u64,
}

impl Learner<'_> {
    fn act(&mut self) -> Result<(), TrainError> {
        let gen = self.config.train_instance(self.played);
        self.played += 1;
        let inst = generate(&gen).map_err(|e| TrainError::Acting(e.to_string()))?;
        let mut policy = PlannerPolicy::new(
            Arc::clone(&self.net),
            Arc::clone(&self.target),
            self.config.search,
            self.config.seed ^ self.played,
        );
        let opts = SolveOptions {
            limits: Limits {
                max_nodes: self.config.actor_node_limit,
                max_seconds: 600.0,
            },
            ..SolveOptions::default()
        };
        let r = solve(&inst, &mut policy, &opts).map_err(|e| TrainError::Acting(e.to_string()))?;
        // only fully labeled episodes carry exact targets
        if r.episode.complete {
            self.replay.push(Arc::new(r.episode));
        }
        Ok(())
    }

    fn sample_batch(&mut self) -> Result<Vec<SubtreeTrajectory>, TrainError> {
        let mut batch = Vec::with_capacity(self.config.batch_size);
        for _ in 0..self.config.batch_size {
            let Some((ep, t)) = self.replay.sample(&mut self.rng) else {
                break;
            };
            let traj = match self.config.value_mode {
                ValueMode::Exact => extract_trajectory(&ep, t, self.config.unroll_steps, &ValueSource::Exact)?,
                ValueMode::Bootstrap => {
                    let estimate = |s: usize| -> f64 {
                        let obs = ep.steps[s].observation.as_ref().expect("recorded observation");
                        target_value(&self.net, &self.target, obs).unwrap_or(0.0)
                    };
                    extract_trajectory(
                        &ep,
                        t,
                        self.config.unroll_steps,
                        &ValueSource::Bootstrap {
                            n: self.config.td_steps,
                            estimate: &estimate,
                        },
                    )?
                }
            };
            batch.push(traj);
        }
        Ok(batch)
    }
}

fn target_value(net: &Network, params: &ParamStore, obs: &crate::milp::BipartiteObservation) -> Result<f64, TrainError> {
    let mut g = crate::tensor::Graph::new(params);
    let lat = net.represent(&mut g, obs)?;
    let p = net.predict(&mut g, &obs.graph, &lat)?;
    Ok(net.read(&g, &p)?.value)
}

fn io_err(e: impl std::fmt::Display) -> TrainError {
    TrainError::Io(e.to_string())
}

pub const CURVE_HEADER: &str =
    "step,lr,loss,policy_loss,value_loss,branch_loss,consistency_loss,grad_norm,replay_steps,episodes,eval_nodes";

fn curve_line(r: &CurveRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.step,
        r.lr,
        r.loss,
        r.policy_loss,
        r.value_loss,
        r.branch_loss,
        r.consistency_loss,
        r.grad_norm,
        r.replay_steps,
        r.episodes,
        r.eval_nodes.map(|v| v.to_string()).unwrap_or_default()
    )
}

/// Sequential act/learn loop. With `out_dir`, writes `config.txt`,
/// `curve.csv`, periodic `ckpt_<step>.txt` and `final.ckpt`.
pub fn train(config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let (net, params) = Network::build(config.model, config.seed)?;
    let net = Arc::new(net);
    let mut learner = Learner {
        config,
        net: Arc::clone(&net),
        target: Arc::new(params.clone()),
        params,
        replay: ReplayBuffer::new(config.replay_capacity),
        rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed),
        played: 0,
    };
    let mut curve_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err)?;
            fs::write(dir.join("config.txt"), config.to_key_values()).map_err(io_err)?;
            let mut f = fs::File::create(dir.join("curve.csv")).map_err(io_err)?;
            writeln!(f, "{CURVE_HEADER}").map_err(io_err)?;
            Some(f)
        }
        None => None,
    };
    let ckpt = |dir: &Path, name: String, p: &ParamStore| -> Result<PathBuf, TrainError> {
        let path = dir.join(name);
        net.save(p, &path)?;
        Ok(path)
    };

    let eval_set: Vec<GeneratorConfig> = (0..config.eval_instances as u64).map(|i| config.eval_instance(i)).collect();
    let mut opt = Adam::new(&learner.params);
    let mut curve = Vec::new();
    let mut actor_syncs = Vec::new();
    if config.training_steps > 0 {
        for _ in 0..config.warmup_episodes {
            learner.act()?;
        }
        // tiny instances may close at the root; keep playing until there is data
        let mut tries = 0;
        while learner.replay.is_empty() && tries < 1000 {
            learner.act()?;
            tries += 1;
        }
    }

    for step in 0..config.training_steps {
        if config.act_every > 0 && step > 0 && step % config.act_every == 0 {
            learner.act()?;
        }
        let batch = learner.sample_batch()?;
        if batch.is_empty() {
            return Err(TrainError::Acting("replay buffer is empty".into()));
        }
        let (loss, mut grads) = batch_gradients(&net, &learner.params, &batch, &config.weights).map_err(|e| match e {
            TrainError::Tensor(TensorError::NonFinite(op)) => TrainError::Diverged {
                step,
                detail: format!("non-finite value in {op}"),
            },
            other => other,
        })?;
        let norm = clip_global_norm(&mut grads, config.grad_clip);
        if !loss.total.is_finite() || !norm.is_finite() {
            return Err(TrainError::Diverged {
                step,
                detail: format!("loss {} grad norm {norm}", loss.total),
            });
        }
        let lr = cosine_lr(step, config.training_steps, config.lr_start, config.lr_end);
        opt.step(&mut learner.params, &grads, lr);
        let done = step + 1;
        if done % config.sync_every == 0 {
            learner.target = Arc::new(learner.params.clone());
            actor_syncs.push(done);
        }
        let eval_nodes = if config.eval_every > 0 && done % config.eval_every == 0 {
            Some(evaluate_policy_head(
                &net,
                &Arc::new(learner.params.clone()),
                &eval_set,
                config.actor_node_limit,
            )?)
        } else {
            None
        };
        let row = CurveRow {
            step: done,
            lr,
            loss: loss.total,
            policy_loss: loss.policy,
            value_loss: loss.value,
            branch_loss: loss.branch,
            consistency_loss: loss.consistency,
            grad_norm: norm,
            replay_steps: learner.replay.len_steps(),
            episodes: learner.played as usize,
            eval_nodes,
        };
        if let Some(f) = curve_file.as_mut() {
            writeln!(f, "{}", curve_line(&row)).map_err(io_err)?;
        }
        if done % 500 == 0 {
            log::info!("step {done} loss {:.4} lr {lr:.2e}", loss.total);
        }
        curve.push(row);
        if let Some(dir) = out_dir {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 {
                ckpt(dir, format!("ckpt_{done:06}.txt"), &learner.params)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        ckpt(dir, "final.ckpt".into(), &learner.params)?;
    }
    Ok(TrainOutcome {
        network: net,
        params: learner.params,
        curve,
        actor_syncs,
        episodes: learner.played as usize,
    })
}

#[cfg(test)]
mod tests;

//! Representation `h`, prediction `f` and dynamics `g` networks over the
//! bipartite graph, plus the consistency projector/predictor.

mod hlgauss;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::milp::{BipartiteObservation, GraphStructure, CONS_FEATURES, EDGE_FEATURES, VAR_FEATURES};
use crate::tensor::{read_checkpoint, softmax_rows, write_checkpoint, Graph, ParamId, ParamStore, Tensor, TensorError, Var};

pub use hlgauss::{CodecError, Encoded, HlGauss};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_v: usize,
    pub d_c: usize,
    pub d_e: usize,
    pub d_h: usize,
    pub d_proj: usize,
    pub m_b: usize,
    pub sigma_g: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_v: VAR_FEATURES,
            d_c: CONS_FEATURES,
            d_e: EDGE_FEATURES,
            d_h: 32,
            d_proj: 16,
            m_b: 18,
            sigma_g: 0.75,
            z_min: -1.0,
            z_max: 16.0,
        }
    }
}

impl ModelConfig {
    pub fn codec(&self) -> HlGauss {
        HlGauss {
            bins: self.m_b,
            z_min: self.z_min,
            z_max: self.z_max,
            sigma: self.sigma_g,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.d_v == 0 || self.d_c == 0 || self.d_e == 0 || self.d_h == 0 || self.d_proj == 0 {
            return Err("model dimensions must be positive".into());
        }
        if self.m_b < 2 || !(self.z_max > self.z_min) || !(self.sigma_g > 0.0) {
            return Err("value codec needs m_b >= 2, z_max > z_min and sigma_g > 0".into());
        }
        Ok(())
    }
}

/// Two fully connected layers, `relu(x W1 + b1) W2 + b2`, optionally followed
/// by a relu.
#[derive(Debug, Clone, Copy)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w_msg: ParamId,
    b_msg: ParamId,
    w_self: ParamId,
    w_agg: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ConvPair {
    vc: Conv,
    cv: Conv,
}

#[derive(Debug, Clone, Copy)]
struct DynamicsHead {
    action: Mlp,
    convs: ConvPair,
    out_v: ParamId,
    out_c: ParamId,
}

/// Parameter layout of the three networks. Parameter values live in a
/// separate [`ParamStore`] so online and target copies share one layout.
#[derive(Debug, Clone)]
pub struct Network {
    config: ModelConfig,
    enc_v: Mlp,
    enc_c: Mlp,
    enc_e: Mlp,
    core: ConvPair,
    out_m: Mlp,
    head_p: (ParamId, ParamId),
    head_v: (ParamId, ParamId),
    head_b: (ParamId, ParamId),
    left: DynamicsHead,
    right: DynamicsHead,
    proj: Mlp,
    pred: Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Child {
    Left,
    Right,
}

/// Latent node on a graph: variable, constraint and edge embeddings.
#[derive(Debug, Clone, Copy)]
pub struct LatentNode {
    pub v: Var,
    pub c: Var,
    pub e: Var,
}

/// Prediction head outputs recorded on a graph.
#[derive(Debug, Clone, Copy)]
pub struct PredictionVars {
    /// `n x 1` policy logits.
    pub policy: Var,
    /// `1 x m_b` value logits.
    pub value: Var,
    /// `1 x 2` branchability logits (class 1 = branchable).
    pub branch: Var,
}

/// Plain-value prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub policy_logits: Vec<f64>,
    pub value_probs: Vec<f64>,
    /// Decoded subtree value (negative).
    pub value: f64,
    pub branch_prob: f64,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<ParamId, TensorError> {
        self.store.glorot(name, fan_in, fan_out, &mut self.rng)
    }

    fn bias(&mut self, name: &str, width: usize) -> Result<ParamId, TensorError> {
        self.store.zeros(name, 1, width)
    }

    fn mlp(&mut self, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Result<Mlp, TensorError> {
        Ok(Mlp {
            w1: self.weight(&format!("{name}.w1"), d_in, d_hidden)?,
            b1: self.bias(&format!("{name}.b1"), d_hidden)?,
            w2: self.weight(&format!("{name}.w2"), d_hidden, d_out)?,
            b2: self.bias(&format!("{name}.b2"), d_out)?,
        })
    }

    fn conv(&mut self, name: &str, d: usize) -> Result<Conv, TensorError> {
        Ok(Conv {
            w_msg: self.weight(&format!("{name}.w_msg"), d, d)?,
            b_msg: self.bias(&format!("{name}.b_msg"), d)?,
            w_self: self.weight(&format!("{name}.w_self"), d, d)?,
            w_agg: self.weight(&format!("{name}.w_agg"), d, d)?,
            b: self.bias(&format!("{name}.b"), d)?,
        })
    }

    fn pair(&mut self, name: &str, d: usize) -> Result<ConvPair, TensorError> {
        Ok(ConvPair {
            vc: self.conv(&format!("{name}.vc"), d)?,
            cv: self.conv(&format!("{name}.cv"), d)?,
        })
    }

    fn linear(&mut self, name: &str, d_in: usize, d_out: usize) -> Result<(ParamId, ParamId), TensorError> {
        Ok((
            self.weight(&format!("{name}.w"), d_in, d_out)?,
            self.bias(&format!("{name}.b"), d_out)?,
        ))
    }

    fn dynamics(&mut self, name: &str, d: usize) -> Result<DynamicsHead, TensorError> {
        Ok(DynamicsHead {
            action: self.mlp(&format!("{name}.action"), d, d, d)?,
            convs: self.pair(&format!("{name}.conv"), d)?,
            out_v: self.weight(&format!("{name}.out_v"), d, d)?,
            out_c: self.weight(&format!("{name}.out_c"), d, d)?,
        })
    }
}

fn mlp(g: &mut Graph<'_>, m: &Mlp, x: Var, final_relu: bool) -> Result<Var, TensorError> {
    let h = g.linear(x, m.w1, Some(m.b1))?;
    let h = g.relu(h)?;
    let y = g.linear(h, m.w2, Some(m.b2))?;
    if final_relu {
        g.relu(y)
    } else {
        Ok(y)
    }
}

/// Half-convolution: gated messages from `src` rows over the edges,
/// degree-averaged into `dst` rows.
#[allow(clippy::too_many_arguments)]
fn conv(
    g: &mut Graph<'_>,
    p: &Conv,
    src: Var,
    dst: Var,
    edges: Var,
    src_idx: &Arc<Vec<usize>>,
    dst_idx: &Arc<Vec<usize>>,
    dst_rows: usize,
) -> Result<Var, TensorError> {
    let gathered = g.gather_rows(src, Arc::clone(src_idx))?;
    let msg = g.linear(gathered, p.w_msg, Some(p.b_msg))?;
    let msg = g.mul(msg, edges)?;
    let agg = g.segment_mean(msg, Arc::clone(dst_idx), dst_rows)?;
    let own = g.linear(dst, p.w_self, None)?;
    let agg = g.linear(agg, p.w_agg, Some(p.b))?;
    let h = g.add(own, agg)?;
    g.relu(h)
}

fn conv_pair(
    g: &mut Graph<'_>,
    p: &ConvPair,
    graph: &GraphStructure,
    v: Var,
    c: Var,
    e: Var,
) -> Result<(Var, Var), TensorError> {
    let c1 = conv(g, &p.vc, v, c, e, &graph.edge_cols, &graph.edge_rows, graph.m)?;
    let v1 = conv(g, &p.cv, c1, v, e, &graph.edge_rows, &graph.edge_cols, graph.n)?;
    Ok((v1, c1))
}

fn shape_mismatch(what: &'static str, got: usize, want: usize) -> TensorError {
    TensorError::Shape {
        op: what,
        lhs: vec![got],
        rhs: vec![want],
    }
}

impl Network {
    /// Layout plus freshly initialized parameters.
    pub fn build(config: ModelConfig, seed: u64) -> Result<(Network, ParamStore), TensorError> {
        config
            .validate()
            .map_err(TensorError::Checkpoint)?;
        let mut store = ParamStore::new();
        let mut b = Builder {
            store: &mut store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let d = config.d_h;
        let net = Network {
            config,
            enc_v: b.mlp("h.var", config.d_v, d, d)?,
            enc_c: b.mlp("h.cons", config.d_c, d, d)?,
            enc_e: b.mlp("h.edge", config.d_e, d, d)?,
            core: b.pair("f.conv", d)?,
            out_m: b.mlp("f.out", d, d, d)?,
            head_p: b.linear("f.policy", d, 1)?,
            head_v: b.linear("f.value", d, config.m_b)?,
            head_b: b.linear("f.branch", d, 2)?,
            left: b.dynamics("g.left", d)?,
            right: b.dynamics("g.right", d)?,
            proj: b.mlp("r.proj", d, d, config.d_proj)?,
            pred: b.mlp("r.pred", config.d_proj, config.d_proj, config.d_proj)?,
        };
        Ok((net, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn codec(&self) -> HlGauss {
        self.config.codec()
    }

    /// Parameters of the consistency projector and predictor.
    pub fn consistency_params(&self) -> Vec<ParamId> {
        let m = |x: &Mlp| [x.w1, x.b1, x.w2, x.b2];
        m(&self.proj).into_iter().chain(m(&self.pred)).collect()
    }

    /// Load a checkpoint and check it against this layout.
    pub fn load(&self, path: &Path) -> Result<ParamStore, TensorError> {
        let loaded = read_checkpoint(path)?;
        let (_, mut store) = Network::build(self.config, 0)?;
        store.load_from(&loaded)?;
        Ok(store)
    }

    pub fn save(&self, params: &ParamStore, path: &Path) -> Result<(), TensorError> {
        write_checkpoint(params, path)
    }

    /// `h`: embed an observation.
    pub fn represent(&self, g: &mut Graph<'_>, obs: &BipartiteObservation) -> Result<LatentNode, TensorError> {
        let cfg = &self.config;
        if obs.var_features.cols() != cfg.d_v {
            return Err(shape_mismatch("represent.d_v", obs.var_features.cols(), cfg.d_v));
        }
        if obs.cons_features.cols() != cfg.d_c {
            return Err(shape_mismatch("represent.d_c", obs.cons_features.cols(), cfg.d_c));
        }
        if obs.graph.edge_features.cols() != cfg.d_e {
            return Err(shape_mismatch("represent.d_e", obs.graph.edge_features.cols(), cfg.d_e));
        }
        let xv = g.input(obs.var_features.clone())?;
        let xc = g.input(obs.cons_features.clone())?;
        let xe = g.input(obs.graph.edge_features.clone())?;
        Ok(LatentNode {
            v: mlp(g, &self.enc_v, xv, true)?,
            c: mlp(g, &self.enc_c, xc, true)?,
            e: mlp(g, &self.enc_e, xe, true)?,
        })
    }

    /// `f`: policy, value and branchability heads.
    pub fn predict(
        &self,
        g: &mut Graph<'_>,
        graph: &GraphStructure,
        lat: &LatentNode,
    ) -> Result<PredictionVars, TensorError> {
        let (v1, _) = conv_pair(g, &self.core, graph, lat.v, lat.c, lat.e)?;
        let o = mlp(g, &self.out_m, v1, true)?;
        let policy = g.linear(o, self.head_p.0, Some(self.head_p.1))?;
        let pooled = g.mean_pool(o)?;
        let value = g.linear(pooled, self.head_v.0, Some(self.head_v.1))?;
        let branch = g.linear(pooled, self.head_b.0, Some(self.head_b.1))?;
        Ok(PredictionVars { policy, value, branch })
    }

    /// `g`: left and right child latents after branching on `action`.
    pub fn dynamics(
        &self,
        g: &mut Graph<'_>,
        graph: &GraphStructure,
        lat: &LatentNode,
        action: usize,
    ) -> Result<(LatentNode, LatentNode), TensorError> {
        if action >= graph.n {
            return Err(TensorError::Index {
                op: "dynamics",
                index: action,
                len: graph.n,
            });
        }
        let left = self.dynamics_head(g, &self.left, graph, lat, action)?;
        let right = self.dynamics_head(g, &self.right, graph, lat, action)?;
        Ok((left, right))
    }

    pub fn dynamics_child(
        &self,
        g: &mut Graph<'_>,
        graph: &GraphStructure,
        lat: &LatentNode,
        action: usize,
        child: Child,
    ) -> Result<LatentNode, TensorError> {
        let head = match child {
            Child::Left => &self.left,
            Child::Right => &self.right,
        };
        self.dynamics_head(g, head, graph, lat, action)
    }

    fn dynamics_head(
        &self,
        g: &mut Graph<'_>,
        head: &DynamicsHead,
        graph: &GraphStructure,
        lat: &LatentNode,
        action: usize,
    ) -> Result<LatentNode, TensorError> {
        let (n, d) = (graph.n, self.config.d_h);
        // only the action row goes through the action embedder
        let mut keep = Tensor::filled(n, d, 1.0);
        for x in &mut keep.data_mut()[action * d..(action + 1) * d] {
            *x = 0.0;
        }
        let keep = g.input(keep)?;
        let kept = g.mul(lat.v, keep)?;
        let idx = Arc::new(vec![action]);
        let row = g.gather_rows(lat.v, Arc::clone(&idx))?;
        let row = mlp(g, &head.action, row, false)?;
        let placed = g.segment_sum(row, Arc::new(vec![action]), n)?;
        let v_a = g.add(kept, placed)?;
        let (v1, c1) = conv_pair(g, &head.convs, graph, v_a, lat.c, lat.e)?;
        let dv = g.linear(v1, head.out_v, None)?;
        let dc = g.linear(c1, head.out_c, None)?;
        Ok(LatentNode {
            v: g.add(v_a, dv)?,
            c: g.add(lat.c, dc)?,
            e: lat.e,
        })
    }

    /// Projected latent, flattened as `d_proj x (n + m)`. The online branch
    /// adds the predictor; the target branch is wrapped in a stop-gradient.
    pub fn consistency_vector(&self, g: &mut Graph<'_>, lat: &LatentNode, online: bool) -> Result<Var, TensorError> {
        let mut parts = Vec::with_capacity(2);
        for x in [lat.v, lat.c] {
            let mut z = mlp(g, &self.proj, x, false)?;
            if online {
                z = mlp(g, &self.pred, z, false)?;
            }
            parts.push(g.transpose(z)?);
        }
        let flat = g.concat_cols(parts[0], parts[1])?;
        if online {
            Ok(flat)
        } else {
            g.stop_gradient(flat)
        }
    }

    /// Read head outputs into plain values.
    pub fn read(&self, g: &Graph<'_>, p: &PredictionVars) -> Result<Prediction, CodecError> {
        let value_probs = softmax_rows(g.value(p.value)).into_data();
        let value = self.codec().decode(&value_probs)?;
        let b = softmax_rows(g.value(p.branch));
        Ok(Prediction {
            policy_logits: g.value(p.policy).data().to_vec(),
            value_probs,
            value,
            branch_prob: b.data()[1],
        })
    }
}

//! Bipartite variable/constraint graph observation of one B&B node.
//!
//! Variable features (`VAR_FEATURES` = 19), all finite:
//!
//! | idx | feature | range |
//! |-----|---------|-------|
//! | 0 | objective coefficient / max\|c\| | [-1, 1] |
//! | 1 | is integer | {0, 1} |
//! | 2, 3 | lower / upper bound finite | {0, 1} |
//! | 4, 5 | squashed lower / upper bound (0 when infinite) | R |
//! | 6 | squashed LP value | R |
//! | 7, 8 | LP value at lower / upper bound | {0, 1} |
//! | 9 | fractionality `x - floor(x)` (0 for continuous) | [0, 1) |
//! | 10 | distance to ceil (0 for continuous) | [0, 1) |
//! | 11 | fractional candidate | {0, 1} |
//! | 12..14 | basis status one-hot: basic, at lower, at upper | {0, 1} |
//! | 15 | reduced cost / max(1, max\|c\|), clipped | [-1, 1] |
//! | 16 | squashed incumbent value (0 without incumbent) | R |
//! | 17 | incumbent agrees with LP value | {0, 1} |
//! | 18 | depth / (1 + depth) | [0, 1) |
//!
//! Constraint features (`CONS_FEATURES` = 5): rhs / ‖a_i‖, squashed slack /
//! ‖a_i‖, sign of the row dual, ln(1 + ‖a_i‖), tight flag.
//! Edge feature (`EDGE_FEATURES` = 1): coefficient / ‖a_i‖.
//!
//! `squash(v) = sign(v) ln(1 + |v|)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{MilpError, MilpInstance, INTEGRALITY_TOL};
use crate::simplex::{LpSolution, VarStatus};
use crate::tensor::Tensor;

pub const VAR_FEATURES: usize = 19;
pub const CONS_FEATURES: usize = 5;
pub const EDGE_FEATURES: usize = 1;

const TIGHT_TOL: f64 = 1e-6;

fn squash(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

/// Instance-dependent parts that never change during a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStructure {
    pub n: usize,
    pub m: usize,
    pub edge_rows: Arc<Vec<usize>>,
    pub edge_cols: Arc<Vec<usize>>,
    pub edge_features: Tensor,
    pub integers: Arc<Vec<usize>>,
    row_norms: Vec<f64>,
    cmax: f64,
}

impl GraphStructure {
    pub fn new(instance: &MilpInstance) -> Self {
        let mut rows = Vec::with_capacity(instance.nnz());
        let mut cols = Vec::with_capacity(instance.nnz());
        let mut feats = Vec::with_capacity(instance.nnz());
        let mut row_norms = Vec::with_capacity(instance.m());
        for (i, row) in instance.rows().iter().enumerate() {
            let norm = row.entries.iter().map(|(_, a)| a * a).sum::<f64>().sqrt();
            row_norms.push(norm);
            for &(j, a) in &row.entries {
                rows.push(i);
                cols.push(j);
                feats.push(a / norm);
            }
        }
        let nnz = feats.len();
        GraphStructure {
            n: instance.n(),
            m: instance.m(),
            edge_rows: Arc::new(rows),
            edge_cols: Arc::new(cols),
            edge_features: Tensor::new(nnz, EDGE_FEATURES, feats).expect("edge shape"),
            integers: Arc::new(instance.integers().to_vec()),
            row_norms,
            cmax: instance.objective().iter().fold(0.0f64, |a, c| a.max(c.abs())),
        }
    }

    pub fn nnz(&self) -> usize {
        self.edge_rows.len()
    }
}

/// Incumbent and tree position of the node being observed.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeContext<'a> {
    pub incumbent: Option<&'a [f64]>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteObservation {
    pub graph: Arc<GraphStructure>,
    pub var_features: Tensor,
    pub cons_features: Tensor,
    /// Fractional integer variables, ascending.
    pub candidates: Vec<usize>,
}

impl BipartiteObservation {
    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn m(&self) -> usize {
        self.graph.m
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        for &j in &self.candidates {
            mask[j] = true;
        }
        mask
    }
}

/// Build the observation for a node with local bounds `lower`/`upper` and its
/// solved LP relaxation.
pub fn extract_observation(
    instance: &MilpInstance,
    graph: &Arc<GraphStructure>,
    lower: &[f64],
    upper: &[f64],
    lp: Option<&LpSolution>,
    ctx: NodeContext<'_>,
) -> Result<BipartiteObservation, MilpError> {
    let lp = lp.filter(|s| s.is_optimal()).ok_or(MilpError::MissingLp)?;
    let n = instance.n();
    let m = instance.m();
    if lp.x.len() != n || lower.len() != n || upper.len() != n || graph.n != n || graph.m != m {
        return Err(MilpError::Invalid("observation inputs do not match the instance".into()));
    }
    let cmax = graph.cmax;
    let cscale = cmax.max(1.0);
    let mut candidates = Vec::new();
    let mut vf = Vec::with_capacity(n * VAR_FEATURES);
    for j in 0..n {
        let x = lp.x[j];
        let int = instance.is_integer(j);
        let frac_part = x - x.floor();
        let is_frac = int && (x - x.round()).abs() > INTEGRALITY_TOL;
        if is_frac {
            candidates.push(j);
        }
        let (l, u) = (lower[j], upper[j]);
        let status = lp.structural_status(j);
        let (inc_val, agree) = match ctx.incumbent {
            Some(inc) => (squash(inc[j]), f64::from(u8::from((inc[j] - x).abs() <= INTEGRALITY_TOL))),
            None => (0.0, 0.0),
        };
        let flag = |b: bool| f64::from(u8::from(b));
        vf.extend_from_slice(&[
            if cmax > 0.0 { instance.objective()[j] / cmax } else { 0.0 },
            flag(int),
            flag(l.is_finite()),
            flag(u.is_finite()),
            if l.is_finite() { squash(l) } else { 0.0 },
            if u.is_finite() { squash(u) } else { 0.0 },
            squash(x),
            flag(l.is_finite() && (x - l).abs() <= INTEGRALITY_TOL),
            flag(u.is_finite() && (u - x).abs() <= INTEGRALITY_TOL),
            if is_frac { frac_part } else { 0.0 },
            if is_frac { x.ceil() - x } else { 0.0 },
            flag(is_frac),
            flag(status == Some(VarStatus::Basic)),
            flag(status == Some(VarStatus::AtLower)),
            flag(status == Some(VarStatus::AtUpper)),
            (lp.reduced_costs[j] / cscale).clamp(-1.0, 1.0),
            inc_val,
            agree,
            ctx.depth as f64 / (1.0 + ctx.depth as f64),
        ]);
    }
    let mut cf = Vec::with_capacity(m * CONS_FEATURES);
    for (i, row) in instance.rows().iter().enumerate() {
        let norm = graph.row_norms[i];
        let slack = (row.rhs - instance.row_activity(i, &lp.x)) / norm;
        let dual = lp.duals.get(i).copied().unwrap_or(0.0);
        let dual_sign = if dual.abs() <= 1e-9 { 0.0 } else { dual.signum() };
        cf.extend_from_slice(&[
            row.rhs / norm,
            squash(slack),
            dual_sign,
            norm.ln_1p(),
            f64::from(u8::from(slack.abs() <= TIGHT_TOL)),
        ]);
    }
    let var_features = Tensor::new(n, VAR_FEATURES, vf).map_err(|e| MilpError::Invalid(e.to_string()))?;
    let cons_features = Tensor::new(m, CONS_FEATURES, cf).map_err(|e| MilpError::Invalid(e.to_string()))?;
    if !var_features.is_finite() || !cons_features.is_finite() {
        return Err(MilpError::Invalid("non-finite observation feature".into()));
    }
    Ok(BipartiteObservation {
        graph: Arc::clone(graph),
        var_features,
        cons_features,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{fractional_candidates, generate, Family, GeneratorConfig};
    use crate::simplex::{solve_cold, LpModel};

    #[test]
    fn root_observation_shapes_and_mask() {
        for family in Family::ALL {
            let inst = generate(&GeneratorConfig::desk(family, 3)).unwrap();
            let graph = Arc::new(GraphStructure::new(&inst));
            let model = LpModel::new(&inst);
            let lp = solve_cold(&model.root());
            let obs = extract_observation(
                &inst,
                &graph,
                inst.lower(),
                inst.upper(),
                Some(&lp),
                NodeContext::default(),
            )
            .unwrap();
            assert_eq!(obs.var_features.shape(), [inst.n(), VAR_FEATURES]);
            assert_eq!(obs.cons_features.shape(), [inst.m(), CONS_FEATURES]);
            assert_eq!(obs.graph.edge_features.shape(), [inst.nnz(), EDGE_FEATURES]);
            assert!(obs.candidates.iter().all(|&j| inst.is_integer(j)));
            assert_eq!(obs.candidates, fractional_candidates(&inst, &lp.x));
        }
    }

    #[test]
    fn missing_lp_is_an_error() {
        let inst = generate(&GeneratorConfig::desk(Family::SetCovering, 0)).unwrap();
        let graph = Arc::new(GraphStructure::new(&inst));
        let r = extract_observation(&inst, &graph, inst.lower(), inst.upper(), None, NodeContext::default());
        assert_eq!(r.unwrap_err(), MilpError::MissingLp);
    }
}

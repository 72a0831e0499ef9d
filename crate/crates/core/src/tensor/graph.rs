use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use super::params::{GradientMap, ParamId, ParamStore};
use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive vocabulary. Inputs always refer to earlier nodes, so the
/// recording order is a topological order.
#[derive(Debug, Clone)]
pub enum Op {
    Param(ParamId),
    Input,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a (r x k) + bias (1 x k)` broadcast over rows.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// Softmax along each row.
    Softmax(Var),
    /// Log-softmax along each row.
    LogSoftmax(Var),
    Log(Var),
    /// Row `r` of the input is added into output row `segments[r]`, then each
    /// output row is multiplied by `weights[row]`.
    SegmentSum {
        input: Var,
        segments: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
    },
    GatherRows(Var, Arc<Vec<usize>>),
    /// Mean over rows, giving a `1 x k` row.
    MeanPool(Var),
    ConcatCols(Var, Var),
    Transpose(Var),
    Sum(Var),
    /// Cosine similarity of two tensors flattened to vectors.
    Cosine(Var, Var),
    StopGradient(Var),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// A define-by-run record of primitive applications.
///
/// Values are computed as nodes are appended; [`Graph::backward`] walks the
/// record in reverse.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

const COS_EPS: f64 = 1e-12;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite(name));
        }
        self.nodes.push(Node { op, value });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let value = self.params.get(id).clone();
        self.nodes.push(Node {
            op: Op::Param(id),
            value,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// A constant leaf. Inputs never receive gradient.
    pub fn input(&mut self, value: Tensor) -> Result<Var, TensorError> {
        self.push(Op::Input, value, "input")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let cols = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            for (x, b) in row.iter_mut().zip(tb.data()) {
                *x += b;
            }
        }
        let out = Tensor::new(ta.rows(), cols, data)?;
        self.push(Op::AddRow(a, bias), out, "add_row")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * s).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push(Op::Scale(a, s), out, "scale")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push(Op::Relu(a), out, "relu")
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = softmax_rows(self.value(a));
        self.push(Op::Softmax(a), out, "softmax")
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(cols.max(1)) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        let out = Tensor::new(ta.rows(), cols, data)?;
        self.push(Op::LogSoftmax(a), out, "log_softmax")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x.ln()).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data)?;
        self.push(Op::Log(a), out, "log")
    }

    pub fn segment_sum(
        &mut self,
        input: Var,
        segments: Arc<Vec<usize>>,
        out_rows: usize,
    ) -> Result<Var, TensorError> {
        let weights = Arc::new(vec![1.0; out_rows]);
        self.segment_weighted(input, segments, weights)
    }

    /// Segment sum divided by the number of rows landing in each segment
    /// (empty segments stay zero).
    pub fn segment_mean(
        &mut self,
        input: Var,
        segments: Arc<Vec<usize>>,
        out_rows: usize,
    ) -> Result<Var, TensorError> {
        let mut counts = vec![0usize; out_rows];
        for &s in segments.iter() {
            if s < out_rows {
                counts[s] += 1;
            }
        }
        let weights = counts
            .into_iter()
            .map(|c| if c == 0 { 0.0 } else { 1.0 / c as f64 })
            .collect();
        self.segment_weighted(input, segments, Arc::new(weights))
    }

    pub fn segment_weighted(
        &mut self,
        input: Var,
        segments: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
    ) -> Result<Var, TensorError> {
        let ti = self.value(input);
        if segments.len() != ti.rows() {
            return Err(TensorError::Shape {
                op: "segment_sum",
                lhs: ti.shape().to_vec(),
                rhs: vec![segments.len()],
            });
        }
        let out_rows = weights.len();
        let cols = ti.cols();
        let mut out = Tensor::zeros(out_rows, cols);
        for (r, &s) in segments.iter().enumerate() {
            if s >= out_rows {
                return Err(TensorError::Index {
                    op: "segment_sum",
                    index: s,
                    len: out_rows,
                });
            }
            let src = ti.row_slice(r);
            let dst = &mut out.data_mut()[s * cols..(s + 1) * cols];
            for (d, x) in dst.iter_mut().zip(src) {
                *d += x;
            }
        }
        for (s, w) in weights.iter().enumerate() {
            for d in &mut out.data_mut()[s * cols..(s + 1) * cols] {
                *d *= w;
            }
        }
        self.push(
            Op::SegmentSum {
                input,
                segments,
                weights,
            },
            out,
            "segment_sum",
        )
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var, TensorError> {
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(TensorError::Index {
                op: "gather_rows",
                index: bad,
                len: ta.rows(),
            });
        }
        let out = ta.select_rows(&idx);
        self.push(Op::GatherRows(a, idx), out, "gather_rows")
    }

    pub fn mean_pool(&mut self, a: Var) -> Result<Var, TensorError> {
        let ta = self.value(a);
        let (r, c) = (ta.rows(), ta.cols());
        let mut out = vec![0.0; c];
        if r > 0 {
            for row in ta.data().chunks(c.max(1)) {
                for (o, x) in out.iter_mut().zip(row) {
                    *o += x;
                }
            }
            for o in &mut out {
                *o /= r as f64;
            }
        }
        self.push(Op::MeanPool(a), Tensor::row(out), "mean_pool")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(shape_err("concat_cols", ta, tb));
        }
        let (ca, cb) = (ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(ta.rows() * (ca + cb));
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row_slice(r));
            data.extend_from_slice(tb.row_slice(r));
        }
        let out = Tensor::new(ta.rows(), ca + cb, data)?;
        self.push(Op::ConcatCols(a, b), out, "concat_cols")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out, "transpose")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        let s = self.value(a).sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(shape_err("cosine", ta, tb));
        }
        let dot: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let na = ta.norm().max(COS_EPS);
        let nb = tb.norm().max(COS_EPS);
        self.push(Op::Cosine(a, b), Tensor::scalar(dot / (na * nb)), "cosine")
    }

    pub fn stop_gradient(&mut self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).clone();
        self.push(Op::StopGradient(a), out, "stop_gradient")
    }

    /// `x W + b` for a weight `W (in x out)` and bias row `b (1 x out)`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: Option<ParamId>) -> Result<Var, TensorError> {
        let wv = self.param(w);
        let y = self.matmul(x, wv)?;
        match b {
            Some(b) => {
                let bv = self.param(b);
                self.add_row(y, bv)
            }
            None => Ok(y),
        }
    }

    /// Hash of the sign pattern at every relu input; two evaluations with the
    /// same signature lie on the same linear piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                for &x in self.value(a).data() {
                    (x > 0.0).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<GradientMap, TensorError> {
        let out = self.value(output);
        if out.shape() != [1, 1] {
            return Err(TensorError::NonScalarSeed(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));
        let mut result = GradientMap::new();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Param(id) => result.accumulate(*id, &g),
                Op::Input | Op::StopGradient(_) => {}
                Op::MatMul(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let ga = g.matmul(&tb.transpose())?;
                    let gb = ta.transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRow(a, bias) => {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for row in g.data().chunks(cols.max(1)) {
                        for (o, x) in gb.iter_mut().zip(row) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *bias, Tensor::row(gb));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let ga = zip_map(&g, tb, |x, y| x * y);
                    let gb = zip_map(&g, ta, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale_assign(*s);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ta = self.value(*a);
                    let ga = zip_map(&g, ta, |x, y| if y > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let cols = y.cols().max(1);
                    let mut ga = g.clone();
                    for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, p)| x * p).sum();
                        for (x, p) in grow.iter_mut().zip(yrow) {
                            *x = p * (*x - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let cols = y.cols().max(1);
                    let mut ga = g.clone();
                    for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                        let total: f64 = grow.iter().sum();
                        for (x, ly) in grow.iter_mut().zip(yrow) {
                            *x -= ly.exp() * total;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ta = self.value(*a);
                    let ga = zip_map(&g, ta, |x, y| x / y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentSum {
                    input,
                    segments,
                    weights,
                } => {
                    let ti = self.value(*input);
                    let cols = ti.cols();
                    let mut ga = Tensor::zeros(ti.rows(), cols);
                    for (r, &s) in segments.iter().enumerate() {
                        let w = weights[s];
                        let src = g.row_slice(s);
                        for (d, x) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                            *d = w * x;
                        }
                    }
                    accumulate(&mut grads, *input, ga);
                }
                Op::GatherRows(a, idx) => {
                    let ta = self.value(*a);
                    let cols = ta.cols();
                    let mut ga = Tensor::zeros(ta.rows(), cols);
                    for (r, &i) in idx.iter().enumerate() {
                        let src = g.row_slice(r);
                        for (d, x) in ga.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                            *d += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MeanPool(a) => {
                    let ta = self.value(*a);
                    let r = ta.rows();
                    let mut ga = Tensor::zeros(r, ta.cols());
                    if r > 0 {
                        let inv = 1.0 / r as f64;
                        let cols = ta.cols().max(1);
                        for row in ga.data_mut().chunks_mut(cols) {
                            for (d, x) in row.iter_mut().zip(g.data()) {
                                *d = x * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let rows = g.rows();
                    let mut da = Vec::with_capacity(rows * ca);
                    let mut db = Vec::with_capacity(rows * cb);
                    for r in 0..rows {
                        let row = g.row_slice(r);
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut grads, *a, Tensor::new(rows, ca, da)?);
                    accumulate(&mut grads, *b, Tensor::new(rows, cb, db)?);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::filled(ta.rows(), ta.cols(), g.item()));
                }
                Op::Cosine(a, b) => {
                    let ta = self.value(*a);
                    let tb = self.value(*b);
                    let seed = g.item();
                    let cos = node.value.item();
                    let na = ta.norm().max(COS_EPS);
                    let nb = tb.norm().max(COS_EPS);
                    let ga = zip_map(ta, tb, |x, y| seed * (y / (na * nb) - cos * x / (na * na)));
                    let gb = zip_map(tb, ta, |y, x| seed * (x / (na * nb) - cos * y / (nb * nb)));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
            }
        }
        Ok(result)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("zip_map shapes agree")
}

/// Row-wise softmax outside any graph.
pub fn softmax_rows(t: &Tensor) -> Tensor {
    let cols = t.cols();
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols.max(1)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    Tensor::new(t.rows(), cols, data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        ParamStore::new()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let ps = store();
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::row(vec![0.0, 0.0, 0.0])).unwrap();
        let y = g.softmax(x).unwrap();
        for &p in g.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_pool_of_rows() {
        let ps = store();
        let mut g = Graph::new(&ps);
        let x = g
            .input(Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap())
            .unwrap();
        let y = g.mean_pool(x).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 2.0]);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut ps = store();
        let id = ps.insert("x", Tensor::row(vec![1.0, 2.0])).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn stop_gradient_blocks_flow() {
        let mut ps = store();
        let id = ps.insert("x", Tensor::row(vec![1.0, 2.0])).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.param(id);
        let sg = g.stop_gradient(x).unwrap();
        let sq = g.mul(sg, sg).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(id).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar_seed() {
        let ps = store();
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::row(vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarSeed(_))));
    }

    #[test]
    fn non_finite_intermediate_is_an_error() {
        let ps = store();
        let mut g = Graph::new(&ps);
        let x = g.input(Tensor::row(vec![0.0])).unwrap();
        assert!(matches!(g.log(x), Err(TensorError::NonFinite("log"))));
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut ps = store();
        let id = ps.insert("x", Tensor::row(vec![0.0, 1.0, -1.0])).unwrap();
        let mut g = Graph::new(&ps);
        let x = g.param(id);
        let r = g.relu(x).unwrap();
        let s = g.sum(r).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn forward_is_bit_identical() {
        let mut ps = store();
        let w = ps.insert("w", Tensor::from_rows(&[vec![0.3, -0.7], vec![1.1, 0.2]]).unwrap()).unwrap();
        let run = || {
            let mut g = Graph::new(&ps);
            let x = g.input(Tensor::row(vec![0.5, -0.25])).unwrap();
            let y = g.linear(x, w, None).unwrap();
            let z = g.softmax(y).unwrap();
            g.value(z).clone()
        };
        assert_eq!(run().data(), run().data());
    }
}

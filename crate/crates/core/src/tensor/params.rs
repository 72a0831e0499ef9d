use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use super::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId, TensorError> {
        if self.index.contains_key(name) {
            return Err(TensorError::Checkpoint(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    /// Glorot-uniform weight of shape `fan_in x fan_out`.
    pub fn glorot<R: Rng>(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId, TensorError> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        self.insert(name, Tensor::new(fan_in, fan_out, data)?)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId, TensorError> {
        self.insert(name, Tensor::zeros(rows, cols))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn total_size(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Overwrite values from `other`, which must have identical names and shapes.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), TensorError> {
        if other.names != self.names {
            return Err(TensorError::Checkpoint(
                "parameter names differ from model layout".into(),
            ));
        }
        for (dst, src) in self.tensors.iter_mut().zip(&other.tensors) {
            if dst.shape() != src.shape() {
                return Err(TensorError::Shape {
                    op: "load_from",
                    lhs: dst.shape().to_vec(),
                    rhs: src.shape().to_vec(),
                });
            }
            *dst = src.clone();
        }
        Ok(())
    }
}

/// Per-parameter gradients; absent entries mean zero gradient.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: BTreeMap<ParamId, Tensor>,
}

impl GradientMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn accumulate(&mut self, id: ParamId, g: &Tensor) {
        match self.grads.get_mut(&id) {
            Some(t) => t.add_assign(g),
            None => {
                self.grads.insert(id, g.clone());
            }
        }
    }

    pub fn merge(&mut self, other: &GradientMap) {
        for (id, g) in &other.grads {
            self.accumulate(*id, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.values_mut() {
            g.scale_assign(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .values()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

const CHECKPOINT_MAGIC: &str = "CHECKPOINT v1";

/// Structured-text checkpoint: a header line, then for every parameter a
/// `PARAM name rows cols` line followed by one line of row-major values.
/// Values use the shortest round-trip representation, so reads are exact.
pub fn write_checkpoint(store: &ParamStore, path: &Path) -> Result<(), TensorError> {
    fs::write(path, checkpoint_to_string(store))
        .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn checkpoint_to_string(store: &ParamStore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC} {}", store.len());
    for id in store.ids() {
        let t = store.get(id);
        let _ = writeln!(out, "PARAM {} {} {}", store.name(id), t.rows(), t.cols());
        let vals: Vec<String> = t.data().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}

pub fn read_checkpoint(path: &Path) -> Result<ParamStore, TensorError> {
    let text = fs::read_to_string(path)
        .map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))?;
    checkpoint_from_str(&text)
}

pub fn checkpoint_from_str(text: &str) -> Result<ParamStore, TensorError> {
    let bad = |line: usize, msg: &str| TensorError::Checkpoint(format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let count: usize = header
        .strip_prefix(CHECKPOINT_MAGIC)
        .ok_or_else(|| bad(1, "missing CHECKPOINT v1 header"))?
        .trim()
        .parse()
        .map_err(|_| bad(1, "bad parameter count"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let (ln, decl) = lines.next().ok_or_else(|| bad(0, "truncated file"))?;
        let parts: Vec<&str> = decl.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "PARAM" {
            return Err(bad(ln + 1, "expected PARAM name rows cols"));
        }
        let rows: usize = parts[2].parse().map_err(|_| bad(ln + 1, "bad rows"))?;
        let cols: usize = parts[3].parse().map_err(|_| bad(ln + 1, "bad cols"))?;
        let (vln, vals) = lines.next().ok_or_else(|| bad(ln + 2, "missing values"))?;
        let data = vals
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(vln + 1, "bad float"))?;
        let t = Tensor::new(rows, cols, data).map_err(|_| bad(vln + 1, "value count mismatch"))?;
        store.insert(parts[1], t)?;
    }
    Ok(store)
}

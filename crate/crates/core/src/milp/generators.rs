//! Seeded instance generators for the four benchmark families.
//!
//! The distributions are compact approximations of the usual benchmark
//! generators; every instance carries a feasible witness built alongside it.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Family, MilpError, MilpInstance, Row};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FamilyParams {
    SetCovering { rows: usize, cols: usize, density: f64 },
    CombinatorialAuction { items: usize, bids: usize },
    MaxIndependentSet { nodes: usize, edge_prob: f64 },
    MultipleKnapsack { items: usize, knapsacks: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub params: FamilyParams,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn family(&self) -> Family {
        match self.params {
            FamilyParams::SetCovering { .. } => Family::SetCovering,
            FamilyParams::CombinatorialAuction { .. } => Family::CombinatorialAuction,
            FamilyParams::MaxIndependentSet { .. } => Family::MaxIndependentSet,
            FamilyParams::MultipleKnapsack { .. } => Family::MultipleKnapsack,
        }
    }

    /// Desk-scale default sizes.
    pub fn desk(family: Family, seed: u64) -> Self {
        let params = match family {
            Family::SetCovering => FamilyParams::SetCovering {
                rows: 150,
                cols: 200,
                density: 0.05,
            },
            Family::CombinatorialAuction => FamilyParams::CombinatorialAuction { items: 50, bids: 150 },
            Family::MaxIndependentSet => FamilyParams::MaxIndependentSet {
                nodes: 80,
                edge_prob: 0.08,
            },
            Family::MultipleKnapsack => FamilyParams::MultipleKnapsack { items: 30, knapsacks: 3 },
        };
        GeneratorConfig { params, seed }
    }

    /// Transfer sizes: roughly 1.5-2x the desk defaults.
    pub fn transfer(family: Family, seed: u64) -> Self {
        let params = match family {
            Family::SetCovering => FamilyParams::SetCovering {
                rows: 225,
                cols: 300,
                density: 0.05,
            },
            Family::CombinatorialAuction => FamilyParams::CombinatorialAuction { items: 75, bids: 300 },
            Family::MaxIndependentSet => FamilyParams::MaxIndependentSet {
                nodes: 140,
                edge_prob: 0.05,
            },
            Family::MultipleKnapsack => FamilyParams::MultipleKnapsack { items: 50, knapsacks: 5 },
        };
        GeneratorConfig { params, seed }
    }

    pub fn validate(&self) -> Result<(), MilpError> {
        let bad = |msg: &str| Err(MilpError::Invalid(format!("degenerate generator config: {msg}")));
        match self.params {
            FamilyParams::SetCovering { rows, cols, density } => {
                if rows == 0 || cols < 2 {
                    return bad("set covering needs rows >= 1 and cols >= 2");
                }
                if !(density > 0.0 && density <= 1.0) {
                    return bad("density must lie in (0, 1]");
                }
            }
            FamilyParams::CombinatorialAuction { items, bids } => {
                if items == 0 || bids == 0 {
                    return bad("auction needs items and bids");
                }
            }
            FamilyParams::MaxIndependentSet { nodes, edge_prob } => {
                if nodes < 2 {
                    return bad("independent set needs at least two nodes");
                }
                if !(edge_prob > 0.0 && edge_prob <= 1.0) {
                    return bad("edge probability must lie in (0, 1]");
                }
            }
            FamilyParams::MultipleKnapsack { items, knapsacks } => {
                if items == 0 || knapsacks == 0 {
                    return bad("knapsack needs items and knapsacks");
                }
            }
        }
        Ok(())
    }
}

/// Build an instance; a pure function of the config.
pub fn generate(config: &GeneratorConfig) -> Result<MilpInstance, MilpError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inst = match config.params {
        FamilyParams::SetCovering { rows, cols, density } => set_covering(rows, cols, density, &mut rng)?,
        FamilyParams::CombinatorialAuction { items, bids } => combinatorial_auction(items, bids, &mut rng)?,
        FamilyParams::MaxIndependentSet { nodes, edge_prob } => {
            let mut edges = Vec::new();
            for u in 0..nodes {
                for v in u + 1..nodes {
                    if rng.random::<f64>() < edge_prob {
                        edges.push((u, v));
                    }
                }
            }
            independent_set(nodes, &edges)?
        }
        FamilyParams::MultipleKnapsack { items, knapsacks } => multiple_knapsack(items, knapsacks, &mut rng)?,
    };
    let family = config.family();
    Ok(inst
        .with_family(family)
        .with_seed(config.seed)
        .with_name(format!("{}-{}", family.short(), config.seed)))
}

fn binary(n: usize) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    (vec![0.0; n], vec![1.0; n], (0..n).collect())
}

fn set_covering(rows: usize, cols: usize, density: f64, rng: &mut ChaCha8Rng) -> Result<MilpInstance, MilpError> {
    let target = ((rows * cols) as f64 * density).round() as usize;
    let mut cover: Vec<BTreeSet<usize>> = (0..rows)
        .map(|_| sample(rng, cols, 2).into_iter().collect())
        .collect();
    let mut nnz = 2 * rows;
    while nnz < target.min(rows * cols) {
        let i = rng.random_range(0..rows);
        let j = rng.random_range(0..cols);
        if cover[i].insert(j) {
            nnz += 1;
        }
    }
    let cost: Vec<f64> = (0..cols).map(|_| rng.random_range(1..=100) as f64).collect();
    let rows = cover
        .iter_mut()
        .map(|set| Row {
            entries: set.iter().map(|&j| (j, -1.0)).collect(),
            rhs: -1.0,
        })
        .collect();
    let (l, u, ints) = binary(cols);
    MilpInstance::new(cost, l, u, ints, rows)?.with_witness(vec![1.0; cols])
}

fn combinatorial_auction(items: usize, bids: usize, rng: &mut ChaCha8Rng) -> Result<MilpInstance, MilpError> {
    let price: Vec<f64> = (0..items).map(|_| rng.random_range(1.0..100.0)).collect();
    let mut item_bids: Vec<Vec<usize>> = vec![Vec::new(); items];
    let mut value = Vec::with_capacity(bids);
    for b in 0..bids {
        // geometric size with mean 3
        let mut size = 1;
        while size < items && rng.random::<f64>() >= 1.0 / 3.0 {
            size += 1;
        }
        let bundle = sample(rng, items, size);
        let mut v = 0.0;
        for i in bundle.iter() {
            item_bids[i].push(b);
            v += price[i];
        }
        value.push(v * (1.0 + rng.random_range(0.0..0.5)));
    }
    let rows = item_bids
        .into_iter()
        .filter(|bs| !bs.is_empty())
        .map(|bs| Row {
            entries: bs.into_iter().map(|b| (b, 1.0)).collect(),
            rhs: 1.0,
        })
        .collect();
    let obj = value.into_iter().map(|v| -v).collect();
    let (l, u, ints) = binary(bids);
    MilpInstance::new(obj, l, u, ints, rows)?.with_witness(vec![0.0; bids])
}

/// Maximum independent set with one `x_u + x_v <= 1` row per edge.
pub fn independent_set(nodes: usize, edges: &[(usize, usize)]) -> Result<MilpInstance, MilpError> {
    let rows = edges
        .iter()
        .map(|&(u, v)| Row {
            entries: vec![(u, 1.0), (v, 1.0)],
            rhs: 1.0,
        })
        .collect();
    let (l, u, ints) = binary(nodes);
    MilpInstance::new(vec![-1.0; nodes], l, u, ints, rows)?.with_witness(vec![0.0; nodes])
}

fn multiple_knapsack(items: usize, knapsacks: usize, rng: &mut ChaCha8Rng) -> Result<MilpInstance, MilpError> {
    let weight: Vec<f64> = (0..items).map(|_| rng.random_range(5..=100) as f64).collect();
    let profit: Vec<f64> = weight
        .iter()
        .map(|w| (w + rng.random_range(-5.0..=15.0_f64)).max(1.0).round())
        .collect();
    let total: f64 = weight.iter().sum();
    let caps: Vec<f64> = (0..knapsacks)
        .map(|_| (rng.random_range(0.4..0.6) * total / knapsacks as f64).floor().max(1.0))
        .collect();
    multiple_knapsack_from(&weight, &profit, &caps)
}

/// Variable `i * knapsacks + j` assigns item `i` to knapsack `j`.
pub fn multiple_knapsack_from(weight: &[f64], profit: &[f64], caps: &[f64]) -> Result<MilpInstance, MilpError> {
    let (items, knapsacks) = (weight.len(), caps.len());
    let var = |i: usize, j: usize| i * knapsacks + j;
    let mut rows = Vec::with_capacity(items + knapsacks);
    for (j, &cap) in caps.iter().enumerate() {
        rows.push(Row {
            entries: (0..items).map(|i| (var(i, j), weight[i])).collect(),
            rhs: cap,
        });
    }
    for i in 0..items {
        rows.push(Row {
            entries: (0..knapsacks).map(|j| (var(i, j), 1.0)).collect(),
            rhs: 1.0,
        });
    }
    let n = items * knapsacks;
    let obj = (0..n).map(|v| -profit[v / knapsacks]).collect();
    let (l, u, ints) = binary(n);
    MilpInstance::new(obj, l, u, ints, rows)?.with_witness(vec![0.0; n])
}

/// Small pure-binary MILP with random integer data. A random binary point is
/// made feasible by construction and kept as the witness.
pub fn random_binary_milp(n: usize, m: usize, seed: u64) -> Result<MilpInstance, MilpError> {
    if n == 0 || m == 0 {
        return Err(MilpError::Invalid("degenerate generator config: need n, m >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut entries = Vec::new();
        for j in 0..n {
            if rng.random::<f64>() < 0.6 {
                let a = rng.random_range(-5..=9) as f64;
                if a != 0.0 {
                    entries.push((j, a));
                }
            }
        }
        if entries.is_empty() {
            entries.push((rng.random_range(0..n), 1.0));
        }
        let act: f64 = entries.iter().map(|&(j, a)| a * x0[j]).sum();
        let rhs = act + rng.random_range(0..=3) as f64;
        rows.push(Row { entries, rhs });
    }
    let obj = (0..n).map(|_| rng.random_range(-10..=10) as f64).collect();
    let (l, u, ints) = binary(n);
    Ok(MilpInstance::new(obj, l, u, ints, rows)?
        .with_witness(x0)?
        .with_seed(seed)
        .with_name(format!("rand-{n}x{m}-{seed}")))
}

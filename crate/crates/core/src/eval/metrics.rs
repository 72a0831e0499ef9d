//! Aggregates over per-run rows: geometric means, wins, ranks and
//! normalized scores. Every aggregate is a pure function of the rows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bnb::SummaryRow;

/// Geometric mean of positive values; 0 for an empty slice.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Aggregate for one (benchmark, policy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub benchmark: String,
    pub policy: String,
    pub runs: usize,
    pub solved: usize,
    pub geo_nodes: f64,
    pub geo_seconds: f64,
    /// Spread of the per-seed geometric means, as % of their mean.
    pub seed_std_pct: f64,
    pub wins: usize,
    pub mean_rank: f64,
    /// `100 * geo_nodes / reference geo_nodes` (lower is better).
    pub norm_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<PolicySummary>,
    /// Per policy, geometric mean over benchmarks of `norm_score`.
    pub aggregate_score: Vec<(String, f64)>,
}

fn solved(r: &SummaryRow) -> bool {
    r.status == "optimal" || r.status == "infeasible"
}

/// Policies in first-appearance order; this order breaks rank ties.
fn policy_order(rows: &[SummaryRow]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in rows {
        if !seen.contains(&r.policy) {
            seen.push(r.policy.clone());
        }
    }
    seen
}

/// Ranks per instance: solved runs by node count, unsolved ones after them by
/// dual gap; ties go to the policy listed first. Seeds are averaged first
/// (geometric mean of nodes, arithmetic mean of gaps, solved only if every
/// seed solved).
pub fn instance_ranks(rows: &[SummaryRow], policies: &[String]) -> BTreeMap<String, Vec<(String, usize)>> {
    let mut by_inst: BTreeMap<String, BTreeMap<String, Vec<&SummaryRow>>> = BTreeMap::new();
    for r in rows {
        by_inst.entry(r.instance.clone()).or_default().entry(r.policy.clone()).or_default().push(r);
    }
    let mut out = BTreeMap::new();
    for (inst, per) in by_inst {
        // rank only on instances every policy ran
        if policies.iter().any(|p| !per.contains_key(p)) {
            continue;
        }
        let mut keyed: Vec<(usize, bool, f64, String)> = policies
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let runs = &per[p];
                let all_solved = runs.iter().all(|r| solved(r));
                let key = if all_solved {
                    geometric_mean(&runs.iter().map(|r| r.nodes as f64).collect::<Vec<_>>())
                } else {
                    runs.iter().map(|r| r.dual_gap).sum::<f64>() / runs.len() as f64
                };
                (i, all_solved, key, p.clone())
            })
            .collect();
        keyed.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)));
        out.insert(inst, keyed.into_iter().enumerate().map(|(rank, k)| (k.3, rank + 1)).collect());
    }
    out
}

/// Full report; `reference` names the policy whose score is 100.
pub fn summarize(rows: &[SummaryRow], reference: Option<&str>) -> MetricsReport {
    let benchmarks: BTreeSet<String> = rows.iter().map(|r| r.family.clone()).collect();
    let policies = policy_order(rows);
    let mut summaries = Vec::new();
    for bench in &benchmarks {
        let bench_rows: Vec<SummaryRow> = rows.iter().filter(|r| &r.family == bench).cloned().collect();
        let bench_policies: Vec<String> = policies
            .iter()
            .filter(|p| bench_rows.iter().any(|r| &r.policy == *p))
            .cloned()
            .collect();
        let ranks = instance_ranks(&bench_rows, &bench_policies);
        let mut first = Vec::new();
        for p in &bench_policies {
            let mine: Vec<&SummaryRow> = bench_rows.iter().filter(|r| &r.policy == p).collect();
            let nodes: Vec<f64> = mine.iter().map(|r| r.nodes as f64).collect();
            let secs: Vec<f64> = mine.iter().map(|r| r.seconds.max(1e-9)).collect();
            let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
            for r in &mine {
                per_seed.entry(r.seed).or_default().push(r.nodes as f64);
            }
            let seed_means: Vec<f64> = per_seed.values().map(|v| geometric_mean(v)).collect();
            let mean = seed_means.iter().sum::<f64>() / seed_means.len().max(1) as f64;
            let var = seed_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / seed_means.len().max(1) as f64;
            let my_ranks: Vec<usize> = ranks
                .values()
                .filter_map(|v| v.iter().find(|(q, _)| q == p).map(|(_, r)| *r))
                .collect();
            first.push(PolicySummary {
                benchmark: bench.clone(),
                policy: p.clone(),
                runs: mine.len(),
                solved: mine.iter().filter(|r| solved(r)).count(),
                geo_nodes: geometric_mean(&nodes),
                geo_seconds: geometric_mean(&secs),
                seed_std_pct: if mean > 0.0 { 100.0 * var.sqrt() / mean } else { 0.0 },
                wins: my_ranks.iter().filter(|&&r| r == 1).count(),
                mean_rank: if my_ranks.is_empty() {
                    0.0
                } else {
                    my_ranks.iter().sum::<usize>() as f64 / my_ranks.len() as f64
                },
                norm_score: 0.0,
            });
        }
        let ref_nodes = reference
            .and_then(|name| first.iter().find(|s| s.policy == name))
            .map(|s| s.geo_nodes);
        for s in &mut first {
            s.norm_score = match ref_nodes {
                Some(r) if r > 0.0 => 100.0 * s.geo_nodes / r,
                _ => f64::NAN,
            };
        }
        summaries.extend(first);
    }
    let aggregate_score = policies
        .iter()
        .map(|p| {
            let scores: Vec<f64> = summaries
                .iter()
                .filter(|s| &s.policy == p && s.norm_score.is_finite())
                .map(|s| s.norm_score)
                .collect();
            (p.clone(), if scores.is_empty() { f64::NAN } else { geometric_mean(&scores) })
        })
        .collect();
    MetricsReport {
        rows: summaries,
        aggregate_score,
    }
}

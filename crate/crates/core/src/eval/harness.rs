//! Running policies over instance sets.

use std::sync::Mutex;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::bnb::{discovery_step, solve, Limits, SolveOptions, SummaryRow};
use crate::milp::MilpInstance;
use crate::policy::{
    argmax, strong_branching_scores, BranchContext, BranchingDecision, BranchingPolicy, PolicyError,
};

use super::alignment::AlignmentSample;
use super::metrics::geometric_mean;

pub type PolicyFactory = dyn Fn(u64) -> Box<dyn BranchingPolicy> + Sync;

/// A named policy constructor; the seed is the run seed.
pub struct PolicySpec<'a> {
    pub name: String,
    pub make: &'a PolicyFactory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessOptions {
    pub limits: Limits,
    /// Worker threads; 0 means one per available core.
    pub workers: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            limits: Limits::default(),
            workers: 0,
        }
    }
}

fn worker_count(requested: usize, jobs: usize) -> usize {
    let w = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    w.clamp(1, jobs.max(1))
}

/// Run `jobs` through `f` on a pool, returning results in job order.
pub fn parallel_map<J: Sync, R: Send>(jobs: &[J], workers: usize, f: impl Fn(&J) -> R + Sync) -> Vec<R> {
    let next = Mutex::new(0usize);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..worker_count(workers, jobs.len()) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("job counter poisoned");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                out.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

fn family_label(inst: &MilpInstance) -> String {
    inst.family().map_or("custom", |f| f.short()).to_string()
}

/// Solve one instance and summarize. Solver errors become an `error:` row
/// with infinite gap so the run still ranks last.
pub fn run_one(inst: &MilpInstance, policy_name: &str, policy: &mut dyn BranchingPolicy, seed: u64, limits: Limits) -> SummaryRow {
    let options = SolveOptions {
        limits,
        warm_start: true,
        record_observations: false,
        shadow_cold: false,
    };
    match solve(inst, policy, &options) {
        Ok(res) => SummaryRow {
            instance: inst.name().to_string(),
            family: family_label(inst),
            policy: policy_name.to_string(),
            seed,
            nodes: res.nodes,
            seconds: res.seconds,
            t_d: discovery_step(&res.episode).0,
            status: res.termination.as_str().to_string(),
            objective: res.objective,
            dual_gap: res.dual_gap(),
        },
        Err(e) => {
            warn!("{} with {policy_name} (seed {seed}) failed: {e}", inst.name());
            SummaryRow {
                instance: inst.name().to_string(),
                family: family_label(inst),
                policy: policy_name.to_string(),
                seed,
                nodes: limits.max_nodes,
                seconds: 0.0,
                t_d: 0,
                status: format!("error: {e}"),
                objective: None,
                dual_gap: f64::INFINITY,
            }
        }
    }
}

/// One row per (instance, policy, seed), ordered instance-major.
pub fn run_benchmark(
    instances: &[MilpInstance],
    policies: &[PolicySpec<'_>],
    seeds: &[u64],
    options: &HarnessOptions,
) -> Vec<SummaryRow> {
    let mut jobs = Vec::new();
    for i in 0..instances.len() {
        for p in 0..policies.len() {
            for &s in seeds {
                jobs.push((i, p, s));
            }
        }
    }
    parallel_map(&jobs, options.workers, |&(i, p, s)| {
        let spec = &policies[p];
        let mut policy = (spec.make)(s);
        run_one(&instances[i], &spec.name, policy.as_mut(), s, options.limits)
    })
}

/// Follows strong branching while asking `inner` what it would have done at
/// every visited state.
pub struct AlignmentProbe<'a> {
    pub inner: &'a mut dyn BranchingPolicy,
    pub samples: Vec<AlignmentSample>,
}

impl BranchingPolicy for AlignmentProbe<'_> {
    fn name(&self) -> &str {
        "sb"
    }

    fn decide(&mut self, ctx: &BranchContext<'_>) -> Result<BranchingDecision, PolicyError> {
        let cands = ctx.candidates();
        if cands.is_empty() {
            return Err(PolicyError::EmptyMask);
        }
        let scores = strong_branching_scores(ctx);
        let sb = argmax(&scores);
        let theirs = self.inner.decide(ctx)?;
        let policy_choice = cands
            .iter()
            .position(|&j| j == theirs.action)
            .ok_or(PolicyError::OutsideMask(theirs.action))?;
        self.samples.push(AlignmentSample {
            sb_scores: scores.clone(),
            sb_choice: sb,
            policy: theirs.distribution,
            policy_choice,
        });
        Ok(BranchingDecision::one_hot(cands, cands[sb], Some(scores)))
    }
}

/// Sample states along SB-guided solves and record `inner`'s output there.
pub fn collect_alignment(
    instances: &[MilpInstance],
    inner: &mut dyn BranchingPolicy,
    limits: Limits,
) -> Result<Vec<AlignmentSample>, crate::bnb::BnbError> {
    let mut probe = AlignmentProbe {
        inner,
        samples: Vec::new(),
    };
    let options = SolveOptions {
        limits,
        record_observations: false,
        ..SolveOptions::default()
    };
    for inst in instances {
        solve(inst, &mut probe, &options)?;
    }
    Ok(probe.samples)
}

/// One row of the simulation-budget sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: usize,
    pub runs: usize,
    pub solved: usize,
    pub geo_nodes: f64,
    pub geo_seconds: f64,
}

pub fn sweep_policy_name(budget: usize) -> String {
    format!("plan-n{budget}")
}

fn budget_of(policy: &str) -> Option<usize> {
    policy.strip_prefix("plan-n")?.parse().ok()
}

/// Sweep aggregates recomputed from per-run rows, sorted by budget.
pub fn sweep_from_rows(rows: &[SummaryRow]) -> Vec<SweepRow> {
    let mut budgets: Vec<usize> = rows.iter().filter_map(|r| budget_of(&r.policy)).collect();
    budgets.sort_unstable();
    budgets.dedup();
    budgets
        .into_iter()
        .map(|b| {
            let mine: Vec<&SummaryRow> = rows.iter().filter(|r| budget_of(&r.policy) == Some(b)).collect();
            SweepRow {
                budget: b,
                runs: mine.len(),
                solved: mine.iter().filter(|r| r.status == "optimal" || r.status == "infeasible").count(),
                geo_nodes: geometric_mean(&mine.iter().map(|r| r.nodes as f64).collect::<Vec<_>>()),
                geo_seconds: geometric_mean(&mine.iter().map(|r| r.seconds.max(1e-9)).collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// `100 * (nodes at the largest budget / nodes at budget 0 - 1)`; negative
/// means search helped.
pub fn sweep_improvement_pct(rows: &[SweepRow]) -> Option<f64> {
    let base = rows.iter().find(|r| r.budget == 0)?;
    let top = rows.iter().max_by_key(|r| r.budget)?;
    (base.geo_nodes > 0.0).then(|| 100.0 * (top.geo_nodes / base.geo_nodes - 1.0))
}

/// Warm vs cold child-LP statistics for one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub family: String,
    pub instances: usize,
    pub transitions: usize,
    pub warm_ms: f64,
    pub cold_ms: f64,
    pub warm_iterations: f64,
    pub cold_iterations: f64,
    /// Fraction of transitions where warm used no more iterations than cold.
    pub warm_not_worse: f64,
    pub max_objective_gap: f64,
    pub status_mismatches: usize,
}

/// Solve every instance with `policy`, shadowing each child LP cold.
/// `warm_start = false` makes both columns cold solves.
pub fn transition_timing(
    family: &str,
    instances: &[MilpInstance],
    policy: &mut dyn BranchingPolicy,
    limits: Limits,
    warm_start: bool,
) -> Result<TimingRow, crate::bnb::BnbError> {
    let options = SolveOptions {
        limits,
        warm_start,
        record_observations: false,
        shadow_cold: true,
    };
    let mut cmp = Vec::new();
    for inst in instances {
        cmp.extend(solve(inst, policy, &options)?.comparisons);
    }
    let n = cmp.len().max(1) as f64;
    Ok(TimingRow {
        family: family.to_string(),
        instances: instances.len(),
        transitions: cmp.len(),
        warm_ms: 1e3 * cmp.iter().map(|c| c.warm_seconds).sum::<f64>() / n,
        cold_ms: 1e3 * cmp.iter().map(|c| c.cold_seconds).sum::<f64>() / n,
        warm_iterations: cmp.iter().map(|c| c.warm_iterations as f64).sum::<f64>() / n,
        cold_iterations: cmp.iter().map(|c| c.cold_iterations as f64).sum::<f64>() / n,
        warm_not_worse: cmp.iter().filter(|c| c.warm_iterations <= c.cold_iterations).count() as f64 / n,
        max_objective_gap: cmp.iter().map(|c| c.objective_gap).fold(0.0, f64::max),
        status_mismatches: cmp.iter().filter(|c| !c.status_match).count(),
    })
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &std::path::Path) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<Vec<T>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

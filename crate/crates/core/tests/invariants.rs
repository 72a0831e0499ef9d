//! Property tests over whole solves and over the metric aggregates.

use proptest::prelude::*;

use branchlab::bnb::{audit_open_sizes, solve, SolveOptions, SummaryRow, Termination};
use branchlab::eval::{sb_alignment, summarize, AlignmentSample};
use branchlab::milp::{random_binary_milp, MilpInstance};
use branchlab::policy::{RandomPolicy, StrongBranching};

fn brute_force(inst: &MilpInstance) -> Option<f64> {
    let n = inst.n();
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = f64::from((mask >> j) & 1);
        }
        if inst.is_feasible(&x, 1e-9) {
            let v = inst.objective_value(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn solves_are_exact_and_audited(n in 3usize..11, m in 1usize..6, seed in 0u64..10_000, sb in any::<bool>()) {
        let inst = random_binary_milp(n, m, seed).unwrap();
        let opts = SolveOptions { shadow_cold: true, ..SolveOptions::default() };
        let r = if sb {
            solve(&inst, &mut StrongBranching, &opts)
        } else {
            solve(&inst, &mut RandomPolicy::new(seed), &opts)
        }.unwrap();
        match brute_force(&inst) {
            Some(w) => prop_assert!((r.objective.unwrap() - w).abs() <= 1e-6),
            None => prop_assert_eq!(r.termination, Termination::Infeasible),
        }
        prop_assert_eq!(r.nodes, 1 + 2 * r.steps);
        prop_assert_eq!(r.episode.nodes[0].subtree_size, Some(r.nodes as u64));
        prop_assert!(audit_open_sizes(&r.episode).is_ok());
        let mut gub = f64::INFINITY;
        for s in &r.episode.steps {
            let g = s.incumbent_objective.unwrap_or(f64::INFINITY);
            prop_assert!(g <= gub);
            gub = g;
            prop_assert!(s.candidates.contains(&s.action));
            prop_assert!((s.policy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for c in &r.comparisons {
            prop_assert!(c.status_match && c.objective_gap <= 1e-6);
        }
    }

    #[test]
    fn wins_sum_to_instances_and_reference_is_100(
        nodes in prop::collection::vec((1usize..500, any::<bool>(), 0.0f64..1.0), 3..30),
    ) {
        // three policies over nodes.len() / 3 instances
        let k = nodes.len() / 3;
        let mut rows = Vec::new();
        for (i, (n, solved, gap)) in nodes.iter().take(3 * k).enumerate() {
            rows.push(SummaryRow {
                instance: format!("i{}", i / 3),
                family: "sc".into(),
                policy: ["a", "b", "c"][i % 3].into(),
                seed: 0,
                nodes: *n,
                seconds: 0.01,
                t_d: 0,
                status: if *solved { "optimal" } else { "node-limit" }.into(),
                objective: None,
                dual_gap: if *solved { 0.0 } else { *gap },
            });
        }
        let rep = summarize(&rows, Some("b"));
        prop_assert_eq!(rep.rows.iter().map(|s| s.wins).sum::<usize>(), k);
        let b = rep.rows.iter().find(|s| s.policy == "b").unwrap();
        prop_assert!((b.norm_score - 100.0).abs() < 1e-9);
        for s in &rep.rows {
            prop_assert!(s.mean_rank >= 1.0 && s.mean_rank <= 3.0);
        }
    }

    #[test]
    fn alignment_of_sb_with_itself(scores in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 1..8), 1..20)) {
        let samples: Vec<AlignmentSample> = scores
            .into_iter()
            .map(|s| {
                let best = branchlab::policy::argmax(&s);
                let mut p = vec![0.0; s.len()];
                p[best] = 1.0;
                AlignmentSample { sb_scores: s, sb_choice: best, policy: p, policy_choice: best }
            })
            .collect();
        let r = sb_alignment(&samples).unwrap();
        prop_assert_eq!((r.cross_entropy, r.score_ratio, r.frequency), (0.0, 1.0, 1.0));
    }
}

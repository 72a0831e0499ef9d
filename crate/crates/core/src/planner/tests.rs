use super::*;
use proptest::prelude::*;

/// Fixture with exact values: taking arm `a` at the root is worth `values[a]`
/// along every path. Each expansion keeps the left child open with value
/// `values[a] + 2d - 1` and closes the right child.
struct Bandit {
    values: Vec<f64>,
    logits: Vec<f64>,
    dynamics: usize,
    predictions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Lat {
    Root,
    Arm { arm: usize, depth: usize, left: bool },
}

impl SearchModel for Bandit {
    type Latent = Lat;

    fn dynamics(&mut self, latent: &Lat, action: usize) -> Result<(Lat, Lat), PlannerError> {
        self.dynamics += 1;
        let (arm, depth) = match *latent {
            Lat::Root => (action, 1),
            Lat::Arm { arm, depth, .. } => (arm, depth + 1),
        };
        Ok((
            Lat::Arm { arm, depth, left: true },
            Lat::Arm {
                arm,
                depth,
                left: false,
            },
        ))
    }

    fn predict(&mut self, latent: &Lat) -> Result<Evaluation, PlannerError> {
        self.predictions += 1;
        let n = self.values.len();
        Ok(match *latent {
            Lat::Root => Evaluation {
                policy_logits: self.logits.clone(),
                value: -100.0,
                branch_prob: 1.0,
            },
            Lat::Arm { arm, depth, left } => Evaluation {
                policy_logits: vec![0.0; n],
                value: self.values[arm] + 2.0 * depth as f64 - 1.0,
                branch_prob: if left { 1.0 } else { 0.0 },
            },
        })
    }
}

impl Bandit {
    fn new(values: Vec<f64>, logits: Vec<f64>) -> Self {
        Bandit {
            values,
            logits,
            dynamics: 0,
            predictions: 0,
        }
    }

    fn run(&mut self, config: &GumbelConfig, seed: u64) -> SearchOutcome {
        let k = self.values.len();
        let root = Evaluation {
            policy_logits: self.logits.clone(),
            value: -100.0,
            branch_prob: 1.0,
        };
        let cands: Vec<usize> = (0..k).collect();
        search(self, Lat::Root, root, &cands, Arc::new(cands.clone()), config, seed).unwrap()
    }
}

/// Fixed-outcome model: every child gets the same evaluation.
struct Flat {
    eval: Evaluation,
}

impl SearchModel for Flat {
    type Latent = ();

    fn dynamics(&mut self, _: &(), _: usize) -> Result<((), ()), PlannerError> {
        Ok(((), ()))
    }

    fn predict(&mut self, _: &()) -> Result<Evaluation, PlannerError> {
        Ok(self.eval.clone())
    }
}

fn cfg(simulations: usize, considered: usize) -> GumbelConfig {
    GumbelConfig {
        simulations,
        considered,
        trace: true,
        ..GumbelConfig::default()
    }
}

#[test]
fn schedule_examples() {
    assert_eq!(halving_schedule(4, 8), vec![(4, 1), (2, 2)]);
    assert_eq!(halving_schedule(1, 7), vec![(1, 7)]);
    let s = halving_schedule(10, 50);
    assert_eq!(s.len(), 4);
    let total: usize = s.iter().map(|(k, n)| k * n).sum();
    assert!(total >= 50);
}

#[test]
fn zero_budget_is_prior_argmax() {
    let mut b = Bandit::new(vec![-1.0; 4], vec![0.2, 1.5, -0.3, 1.5]);
    let out = b.run(&cfg(0, 2), 0);
    assert_eq!(out.action, 1);
    let want = crate::policy::masked_softmax(&[0.2, 1.5, -0.3, 1.5], &[0, 1, 2, 3]);
    for (x, y) in out.policy.iter().zip(&want) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(b.dynamics, 0);
}

#[test]
fn accounting_per_simulation() {
    let values: Vec<f64> = (0..8).map(|i| -(i as f64) - 2.0).collect();
    let mut b = Bandit::new(values, vec![0.0; 8]);
    let out = b.run(&cfg(30, 4), 11);
    assert_eq!(out.root_visits.iter().sum::<u32>(), 30);
    assert_eq!(out.dynamics_calls, 30);
    assert_eq!(out.prediction_calls, 60);
    assert_eq!(b.dynamics, 30);
    assert_eq!(b.predictions, 60);
    assert!(out.normalized_q.iter().all(|q| (0.0..=1.0).contains(q)));
    assert!((out.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_values_back_up_unchanged_at_every_depth() {
    let values = vec![-3.0, -7.0, -5.0];
    let mut b = Bandit::new(values.clone(), vec![0.0; 3]);
    let out = b.run(&cfg(40, 3), 2);
    for (a, &n) in out.root_visits.iter().enumerate() {
        if n > 0 {
            assert!((out.root_q[a] - values[a]).abs() < 1e-9, "arm {a}: {}", out.root_q[a]);
        }
    }
    assert_eq!(out.action, 0);
}

#[test]
fn single_step_leaf_value_is_the_return() {
    // one simulation, leaf tree holds one open node valued -3 and no closed ones
    let mut m = Flat {
        eval: Evaluation {
            policy_logits: vec![0.0],
            value: -1.5,
            branch_prob: 0.9,
        },
    };
    let root = m.eval.clone();
    let out = search(&mut m, (), root, &[0], Arc::new(vec![0]), &cfg(1, 1), 0).unwrap();
    assert_eq!(out.root_visits, vec![1]);
    assert!((out.root_q[0] + 3.0).abs() < 1e-12);
}

#[test]
fn both_children_closed_is_terminal() {
    let mut m = Flat {
        eval: Evaluation {
            policy_logits: vec![0.0, 0.0],
            value: -4.0,
            branch_prob: 0.1,
        },
    };
    let root = m.eval.clone();
    let out = search(&mut m, (), root, &[0, 1], Arc::new(vec![0, 1]), &cfg(6, 2), 0).unwrap();
    // terminal value 0, minus the two closed children; later steps cost nothing
    for &q in &out.root_q {
        assert!((q + 2.0).abs() < 1e-12);
    }
    assert_eq!(out.dynamics_calls, 6);
    assert_eq!(out.prediction_calls, 12);
}

#[test]
fn running_mean_update() {
    // two different returns on the same root edge through a deeper visit
    let mut b = Bandit::new(vec![-2.0, -4.0], vec![5.0, -5.0]);
    let out = b.run(
        &GumbelConfig {
            gumbel_scale: 0.0,
            ..cfg(2, 1)
        },
        0,
    );
    assert_eq!(out.root_visits, vec![2, 0]);
    assert!((out.root_q[0] + 2.0).abs() < 1e-12);
}

#[test]
fn trace_replay_matches_q() {
    let values: Vec<f64> = (0..6).map(|i| -1.0 - (i * i) as f64).collect();
    let mut b = Bandit::new(values, vec![0.3, 0.1, 0.0, -0.2, 0.5, 0.0]);
    let out = b.run(&cfg(25, 6), 5);
    let t = out.trace.unwrap();
    assert_eq!(t.simulations.len(), 25);
    let mut sums = std::collections::HashMap::new();
    for s in &t.simulations {
        for (edge, g) in s.path.iter().zip(&s.returns) {
            let e = sums.entry(*edge).or_insert((0u32, 0.0));
            e.0 += 1;
            e.1 += g;
        }
    }
    assert_eq!(sums.len(), t.edges.len());
    for (node, action, n, q) in t.edges {
        let (cnt, sum) = sums[&(node, action)];
        assert_eq!(cnt, n);
        assert!((sum / f64::from(cnt) - q).abs() < 1e-9);
    }
}

#[test]
fn zero_noise_considers_top_prior() {
    let logits = vec![0.0, 3.0, 1.0, 2.0, -1.0];
    let mut b = Bandit::new(vec![-1.0; 5], logits);
    let out = b.run(
        &GumbelConfig {
            gumbel_scale: 0.0,
            ..cfg(6, 2)
        },
        0,
    );
    assert!(out.root_visits[1] > 0 && out.root_visits[3] > 0);
    assert_eq!(out.root_visits.iter().filter(|&&n| n > 0).count(), 2);
}

#[test]
fn improved_policy_hand_case() {
    let c = GumbelConfig::default();
    let lp = log_softmax(&[0.0, 0.0]);
    let pi = improved_policy(&lp, &[Some(1.0), Some(0.0)], 4, &c);
    let want = softmax(&[5.4, 0.0]);
    assert!((pi[0] - want[0]).abs() < 1e-12);
}

#[test]
fn equal_q_gives_prior() {
    let c = GumbelConfig::default();
    let lp = log_softmax(&[0.3, -1.0, 2.0]);
    let pi = improved_policy(&lp, &[Some(0.4), Some(0.4), None], 9, &c);
    let want = softmax(&[0.3, -1.0, 2.0]);
    for (x, y) in pi.iter().zip(&want) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn interior_selection_cases() {
    // unvisited: argmax of pi'
    assert_eq!(select_interior(&[0.2, 0.5, 0.3], &[0, 0, 0]), 1);
    // heavy visits on the favourite push selection elsewhere
    let c = GumbelConfig::default();
    let lp = log_softmax(&[0.0, 0.0, 0.0]);
    let pi = improved_policy(&lp, &[Some(0.0), None, None], 10, &c);
    assert_ne!(select_interior(&pi, &[10, 0, 0]), 0);
}

#[test]
fn imagined_tree_current_node_rule() {
    let e = Arc::new(Evaluation {
        policy_logits: vec![],
        value: -2.0,
        branch_prob: 1.0,
    });
    let node = |depth, path: Vec<u8>| ImaginedNode {
        latent: (),
        depth,
        path,
        eval: Arc::clone(&e),
    };
    let mut t = ImaginedTree::new(node(0, vec![]));
    t.open = vec![node(1, vec![1]), node(2, vec![0, 1]), node(2, vec![0, 0])];
    assert_eq!(t.current(), Some(2));
    assert!((t.value() + 6.0).abs() < 1e-12);
}

#[test]
fn search_is_deterministic() {
    let values: Vec<f64> = (0..10).map(|i| -((i * 7) % 10) as f64 - 1.0).collect();
    let a = Bandit::new(values.clone(), vec![0.1; 10]).run(&cfg(20, 5), 99);
    let b = Bandit::new(values, vec![0.1; 10]).run(&cfg(20, 5), 99);
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn halving_covers_budget(m in 1usize..32, extra in 0usize..200) {
        let n = m + extra;
        let s = halving_schedule(m, n);
        let total: usize = s.iter().map(|(k, per)| k * per).sum();
        prop_assert!(total >= n);
        prop_assert_eq!(s.last().unwrap().0 <= 2, true);
    }

    #[test]
    fn root_visits_sum_to_budget(seed in 0u64..1000, k in 2usize..12, extra in 0usize..30) {
        let values: Vec<f64> = (0..k).map(|i| -1.0 - ((i as u64 * 31 + seed) % 17) as f64).collect();
        let m = k.min(4);
        let mut b = Bandit::new(values, vec![0.0; k]);
        let out = b.run(&cfg(m + extra, m), seed);
        prop_assert_eq!(out.root_visits.iter().sum::<u32>() as usize, m + extra);
        prop_assert!(out.normalized_q.iter().all(|q| (0.0..=1.0).contains(q)));
    }
}

use super::*;
use crate::bnb::EpisodeRecord;
use crate::policy::RandomPolicy;
use crate::tensor::{finite_difference_check, Graph};

fn tiny_ca() -> FamilyParams {
    FamilyParams::CombinatorialAuction { items: 20, bids: 50 }
}

fn small_model() -> ModelConfig {
    ModelConfig {
        d_h: 8,
        d_proj: 4,
        ..ModelConfig::default()
    }
}

/// A complete random-policy episode with at least `min_steps` branchings.
fn episode(seed: u64, min_steps: usize) -> EpisodeRecord {
    for s in seed..seed + 500 {
        let inst = generate(&GeneratorConfig { params: tiny_ca(), seed: s }).unwrap();
        let r = solve(&inst, &mut RandomPolicy::new(s), &SolveOptions::default()).unwrap();
        if r.episode.complete && r.steps >= min_steps {
            return r.episode;
        }
    }
    panic!("no episode with {min_steps} steps");
}

#[test]
fn one_trajectory_per_step_following_recorded_children() {
    let ep = episode(0, 6);
    let trajs = extract_trajectories(&ep, 3).unwrap();
    assert_eq!(trajs.len(), ep.steps.len());
    for (t, tr) in trajs.iter().enumerate() {
        assert_eq!(tr.start, t);
        for (j, st) in tr.steps.iter().enumerate() {
            assert_eq!(st.step, t + j);
            assert_eq!(st.node, ep.steps[t + j].node);
            if let Some(ch) = &st.children {
                let (l, r) = ep.nodes[st.node].children.unwrap();
                assert_eq!([ch[0].node, ch[1].node], [l, r]);
                assert_eq!(st.action, Some(ep.steps[t + j].action));
            }
        }
        assert_eq!(tr.padded + tr.steps.iter().filter(|s| s.action.is_some()).count(), 3);
    }
}

#[test]
fn single_branching_subtree_is_padded() {
    let ep = episode(0, 4);
    let t = ep
        .steps
        .iter()
        .position(|s| {
            let (l, r) = ep.nodes[s.node].children.unwrap();
            !ep.nodes[l].branchable() && !ep.nodes[r].branchable()
        })
        .expect("some step closes both children");
    let tr = extract_trajectory(&ep, t, 3, &ValueSource::Exact).unwrap();
    assert_eq!(tr.steps.len(), 1);
    assert_eq!(tr.padded, 2);
    assert_eq!(tr.steps[0].value_target, -3.0);
}

#[test]
fn exact_targets_telescope() {
    let ep = episode(3, 8);
    for (t, s) in ep.steps.iter().enumerate() {
        let z = exact_value(&ep, t).unwrap();
        assert_eq!(z, -(ep.nodes[s.node].subtree_size.unwrap() as f64));
        let (l, r) = ep.nodes[s.node].children.unwrap();
        let mut want = -1.0;
        for c in [l, r] {
            want += match ep.nodes[c].visit_step {
                Some(v) => exact_value(&ep, v).unwrap(),
                None => -1.0,
            };
        }
        assert_eq!(z, want);
    }
}

#[test]
fn bootstrap_with_exact_estimator_is_exact() {
    let ep = episode(5, 8);
    let est = |s: usize| exact_value(&ep, s).unwrap();
    for t in 0..ep.steps.len() {
        for n in 0..5 {
            assert_eq!(bootstrap_value(&ep, t, n, &est), exact_value(&ep, t).unwrap(), "t {t} n {n}");
        }
    }
}

#[test]
fn unlabeled_episode_is_rejected() {
    let mut ep = episode(0, 2);
    for n in &mut ep.nodes {
        n.subtree_size = None;
    }
    assert!(matches!(extract_trajectories(&ep, 3), Err(TrainError::Unlabeled(_))));
}

#[test]
fn unroll_replays_every_trajectory() {
    let ep = episode(7, 6);
    let (net, params) = Network::build(small_model(), 1).unwrap();
    for tr in extract_trajectories(&ep, 3).unwrap() {
        let (l, g) = unroll_and_loss(&net, &params, &tr, &LossWeights::default()).unwrap();
        assert!(l.total.is_finite() && g.global_norm().is_finite());
    }
}

#[test]
fn identical_consistency_vectors_give_minus_one() {
    let ep = episode(7, 6);
    let (net, params) = Network::build(small_model(), 1).unwrap();
    let tr = extract_trajectories(&ep, 3)
        .unwrap()
        .into_iter()
        .find(|t| consistency_targets(&net, &params, t).map_or(false, |v| !v.is_empty()))
        .expect("a trajectory with a branched child");
    // targets equal to the online vectors themselves
    let mut g = Graph::new(&params);
    let dummy = consistency_targets(&net, &params, &tr).unwrap();
    let w = LossWeights {
        policy: 0.0,
        value: 0.0,
        branch: 0.0,
        consistency: 1.0,
    };
    build_loss(&mut g, &net, &tr, &dummy, &w).unwrap();
    let online: Vec<crate::tensor::Tensor> = {
        let mut g2 = Graph::new(&params);
        let mut out = Vec::new();
        let lat = net.represent(&mut g2, &tr.root_observation).unwrap();
        let st = &tr.steps[0];
        let (l, r) = net.dynamics(&mut g2, &tr.root_observation.graph, &lat, st.action.unwrap()).unwrap();
        for (c, v) in st.children.as_ref().unwrap().iter().zip([l, r]) {
            if c.branchable && c.observation.is_some() {
                let o = net.consistency_vector(&mut g2, &v, true).unwrap();
                out.push(g2.value(o).clone());
            }
        }
        out
    };
    let one = SubtreeTrajectory {
        steps: tr.steps[..2.min(tr.steps.len())]
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let mut s = s.clone();
                if j == 1 {
                    s.action = None;
                    s.children = None;
                }
                s
            })
            .collect(),
        ..tr.clone()
    };
    let mut g3 = Graph::new(&params);
    let vars = build_loss(&mut g3, &net, &one, &online, &w).unwrap();
    assert!((g3.value(vars.total).item() + 1.0).abs() < 1e-12);
}

#[test]
fn zero_consistency_weight_gives_zero_gradient_there() {
    let ep = episode(7, 6);
    let (net, params) = Network::build(small_model(), 2).unwrap();
    let w = LossWeights {
        consistency: 0.0,
        ..LossWeights::default()
    };
    for tr in extract_trajectories(&ep, 3).unwrap().iter().take(5) {
        let (_, g) = unroll_and_loss(&net, &params, tr, &w).unwrap();
        for id in net.consistency_params() {
            if let Some(t) = g.get(id) {
                assert!(t.norm() == 0.0, "{}", params.name(id));
            }
        }
    }
}

#[test]
fn total_loss_passes_finite_difference_check() {
    let ep = episode(11, 6);
    let (net, params) = Network::build(small_model(), 3).unwrap();
    let trajs = extract_trajectories(&ep, 3).unwrap();
    for tr in trajs.iter().take(3) {
        let targets = consistency_targets(&net, &params, tr).unwrap();
        let report = finite_difference_check(
            &params,
            |g| Ok(build_loss(g, &net, tr, &targets, &LossWeights::default()).unwrap().total),
            1e-5,
            1e-4,
            Some(4),
        )
        .unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error());
    }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    for seed in 0..3u64 {
        let mut batch = Vec::new();
        let mut s = seed * 100;
        while batch.len() < 8 {
            let ep = episode(s, 3);
            s += 1;
            batch.extend(extract_trajectories(&ep, 3).unwrap().into_iter().take(8 - batch.len()));
        }
        let (net, mut params) = Network::build(small_model(), seed).unwrap();
        let w = LossWeights::default();
        let mut opt = Adam::new(&params);
        let (first, _) = batch_gradients(&net, &params, &batch, &w).unwrap();
        for _ in 0..200 {
            let (_, g) = batch_gradients(&net, &params, &batch, &w).unwrap();
            opt.step(&mut params, &g, 3e-3);
        }
        let (last, _) = batch_gradients(&net, &params, &batch, &w).unwrap();
        assert!(last.total < first.total, "seed {seed}: {} -> {}", first.total, last.total);
    }
}

fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        training_steps: 0,
        batch_size: 2,
        model: small_model(),
        family_params: tiny_ca(),
        warmup_episodes: 1,
        act_every: 20,
        search: GumbelConfig {
            simulations: 2,
            considered: 2,
            ..GumbelConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_steps_returns_initialization() {
    let cfg = tiny_train_config();
    let dir = tempfile::tempdir().unwrap();
    let out = train(&cfg, Some(dir.path())).unwrap();
    let (_, init) = Network::build(cfg.model, cfg.seed).unwrap();
    assert_eq!(out.params, init);
    assert!(out.curve.is_empty());
    assert_eq!(out.network.load(&dir.path().join("final.ckpt")).unwrap(), init);
}

#[test]
fn actor_sync_only_at_multiples() {
    let cfg = TrainConfig {
        training_steps: 230,
        sync_every: 100,
        ..tiny_train_config()
    };
    let out = train(&cfg, None).unwrap();
    assert_eq!(out.actor_syncs, vec![100, 200]);
    assert_eq!(out.curve.len(), 230);
    assert!(out.curve.iter().all(|r| r.loss.is_finite()));
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        training_steps: 15,
        ..tiny_train_config()
    };
    let a = train(&cfg, None).unwrap();
    let b = train(&cfg, None).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.curve, b.curve);
}

#[test]
fn config_round_trip() {
    let mut cfg = TrainConfig {
        seed: 9,
        lr_start: 2.5e-3,
        value_mode: ValueMode::Bootstrap,
        family: Family::SetCovering,
        family_params: FamilyParams::SetCovering {
            rows: 30,
            cols: 40,
            density: 0.1,
        },
        ..TrainConfig::default()
    };
    cfg.weights.consistency = 0.5;
    let kv = KeyValues::parse(&cfg.to_key_values()).unwrap();
    let mut back = TrainConfig::default();
    back.apply(&kv).unwrap();
    assert_eq!(back, cfg);
    assert!(matches!(
        back.apply(&KeyValues::parse("bogus = 1").unwrap()),
        Err(ConfigError::Unknown(_))
    ));
}

#[test]
fn family_switch_resets_sizes() {
    let mut cfg = TrainConfig::default();
    cfg.apply(&KeyValues::parse("family = mk").unwrap()).unwrap();
    assert_eq!(cfg.family_params, GeneratorConfig::desk(Family::MultipleKnapsack, 0).params);
}

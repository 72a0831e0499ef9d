use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::milp::{MilpInstance, Row};

/// Naive dense two-phase tableau with Bland's rule, used as an independent
/// oracle. Solves `min c x, A x <= b, l <= x <= u` for finite bounds by
/// shifting `x = l + y` and adding `y <= u - l` rows.
fn tableau_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64], l: &[f64], u: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (ai, &bi) in a.iter().zip(b) {
        let shift: f64 = ai.iter().zip(l).map(|(x, y)| x * y).sum();
        rows.push((ai.clone(), bi - shift));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e, u[j] - l[j]));
    }
    let m = rows.len();
    // columns: y (n), slack (m), artificial (m)
    let w = n + 2 * m + 1;
    let mut t = vec![vec![0.0; w]; m];
    let mut basis = vec![0; m];
    for (i, (ai, bi)) in rows.iter().enumerate() {
        let s = if *bi < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * ai[j];
        }
        t[i][n + i] = s;
        t[i][n + m + i] = 1.0;
        t[i][w - 1] = s * bi;
        basis[i] = n + m + i;
    }
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> bool {
        for _ in 0..10_000 {
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let d = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
                if d < -1e-10 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(q) = enter else { return true };
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..m {
                if t[i][q] > 1e-10 {
                    let r = t[i][w - 1] / t[i][q];
                    if r < best - 1e-12 || (r <= best + 1e-12 && leave.is_some_and(|li| basis[i] < basis[li])) {
                        best = r;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else { return false };
            let p = t[r][q];
            for k in 0..w {
                t[r][k] /= p;
            }
            for i in 0..m {
                if i != r && t[i][q] != 0.0 {
                    let f = t[i][q];
                    for k in 0..w {
                        t[i][k] -= f * t[r][k];
                    }
                }
            }
            basis[r] = q;
        }
        false
    };
    let mut c1 = vec![0.0; w - 1];
    for v in c1.iter_mut().skip(n + m) {
        *v = 1.0;
    }
    assert!(run(&mut t, &mut basis, &c1, w - 1));
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= n + m).map(|i| t[i][w - 1]).sum();
    if infeas > 1e-8 {
        return None;
    }
    let mut c2 = vec![0.0; w - 1];
    c2[..n].copy_from_slice(c);
    // artificials stuck in the basis at zero stay harmless when excluded from entering
    assert!(run(&mut t, &mut basis, &c2, n + m));
    let mut y = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            y[basis[i]] = t[i][w - 1];
        }
    }
    Some((0..n).map(|j| c[j] * (l[j] + y[j])).sum())
}

fn random_lp(seed: u64, m: usize, n: usize) -> (MilpInstance, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = vec![vec![0.0; n]; m];
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..4.0)).collect();
    let mut rows = Vec::new();
    for row in dense.iter_mut() {
        for j in 0..n {
            if rng.random::<f64>() < 0.5 {
                row[j] = rng.random_range(-5.0..5.0_f64).round();
            }
        }
        if row.iter().all(|&v| v == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
        let act: f64 = row.iter().zip(&x0).map(|(a, x)| a * x).sum();
        let rhs = (act + rng.random_range(0.0..3.0)).round();
        rows.push(Row {
            entries: row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, v)).collect(),
            rhs,
        });
    }
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0_f64).round()).collect();
    let inst = MilpInstance::new(c, vec![0.0; n], vec![5.0; n], (0..n).collect(), rows).unwrap();
    (inst, dense)
}

fn check_feasible(model_inst: &MilpInstance, p: &LpProblem<'_>, sol: &LpSolution) {
    for (i, row) in model_inst.rows().iter().enumerate() {
        let act = model_inst.row_activity(i, &sol.x);
        assert!(act <= row.rhs + 1e-7 * (1.0 + row.rhs.abs()), "row {i}: {act} > {}", row.rhs);
    }
    for j in 0..sol.x.len() {
        assert!(sol.x[j] >= p.lower()[j] - 1e-9 && sol.x[j] <= p.upper()[j] + 1e-9);
    }
}

#[test]
fn single_variable_analytic() {
    let inst = MilpInstance::new(
        vec![-1.0],
        vec![0.0],
        vec![10.0],
        vec![],
        vec![Row {
            entries: vec![(0, 1.0)],
            rhs: 1.0,
        }],
    )
    .unwrap();
    let model = LpModel::new(&inst);
    let sol = solve_cold(&model.root());
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-12);
    assert!((sol.objective + 1.0).abs() < 1e-12);
}

#[test]
fn crossed_bounds_are_infeasible() {
    let inst = MilpInstance::new(
        vec![1.0],
        vec![0.0],
        vec![10.0],
        vec![],
        vec![Row {
            entries: vec![(0, 1.0)],
            rhs: 5.0,
        }],
    )
    .unwrap();
    let model = LpModel::new(&inst);
    let p = model.with_bounds(vec![2.0], vec![1.0]);
    assert!(p.trivially_infeasible());
    assert_eq!(solve_cold(&p).status, LpStatus::Infeasible);
}

#[test]
fn infeasible_rows_detected() {
    // x >= 2 and x <= 1
    let inst = MilpInstance::new(
        vec![1.0],
        vec![0.0],
        vec![10.0],
        vec![],
        vec![
            Row {
                entries: vec![(0, -1.0)],
                rhs: -2.0,
            },
            Row {
                entries: vec![(0, 1.0)],
                rhs: 1.0,
            },
        ],
    )
    .unwrap();
    let model = LpModel::new(&inst);
    assert_eq!(solve_cold(&model.root()).status, LpStatus::Infeasible);
}

#[test]
fn unbounded_detected() {
    let inst = MilpInstance::new(
        vec![-1.0, 0.0],
        vec![0.0, 0.0],
        vec![f64::INFINITY, 1.0],
        vec![],
        vec![Row {
            entries: vec![(0, -1.0), (1, 1.0)],
            rhs: 1.0,
        }],
    )
    .unwrap();
    let model = LpModel::new(&inst);
    assert_eq!(solve_cold(&model.root()).status, LpStatus::Unbounded);
}

#[test]
fn free_variables_supported() {
    // min x + y, x + y >= -3, x - y <= 1, x, y free
    let inst = MilpInstance::new(
        vec![1.0, 1.0],
        vec![f64::NEG_INFINITY; 2],
        vec![f64::INFINITY; 2],
        vec![],
        vec![
            Row {
                entries: vec![(0, -1.0), (1, -1.0)],
                rhs: 3.0,
            },
            Row {
                entries: vec![(0, 1.0), (1, -1.0)],
                rhs: 1.0,
            },
        ],
    )
    .unwrap();
    let model = LpModel::new(&inst);
    let sol = solve_cold(&model.root());
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!((sol.objective + 3.0).abs() < 1e-9, "{}", sol.objective);
}

#[test]
fn random_lps_match_tableau_oracle() {
    for seed in 0..40 {
        let (inst, dense) = random_lp(seed, 10, 20);
        let b: Vec<f64> = inst.rows().iter().map(|r| r.rhs).collect();
        let want = tableau_oracle(inst.objective(), &dense, &b, inst.lower(), inst.upper()).expect("feasible");
        let model = LpModel::new(&inst);
        let root = model.root();
        let sol = solve_cold(&root);
        assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
        assert!((sol.objective - want).abs() <= 1e-6, "seed {seed}: {} vs {want}", sol.objective);
        check_feasible(&inst, &root, &sol);
        for (j, &d) in sol.reduced_costs.iter().enumerate() {
            match sol.structural_status(j).unwrap() {
                VarStatus::AtLower => assert!(d >= -1e-7),
                VarStatus::AtUpper => assert!(d <= 1e-7),
                _ => {}
            }
        }
    }
}

#[test]
fn warm_from_own_basis_takes_no_pivots() {
    for seed in 0..10 {
        let (inst, _) = random_lp(seed, 10, 20);
        let model = LpModel::new(&inst);
        let root = model.root();
        let cold = solve_cold(&root);
        let basis = cold.basis.clone().unwrap();
        let warm = solve_warm(&root, &basis);
        assert_eq!(warm.iterations, 0);
        assert!(!warm.warm_fallback);
        assert!((warm.objective - cold.objective).abs() < 1e-9);
        // and again without the cached inverse
        let warm2 = solve_warm(&root, &basis.without_factor());
        assert_eq!(warm2.iterations, 0);
        assert!((warm2.objective - cold.objective).abs() < 1e-9);
    }
}

#[test]
fn warm_child_matches_cold_and_is_monotone() {
    let mut checked = 0;
    for seed in 0..30 {
        let (inst, _) = random_lp(seed, 10, 20);
        let model = LpModel::new(&inst);
        let root = model.root();
        let parent = solve_cold(&root);
        let basis = parent.basis.clone().unwrap();
        for j in 0..inst.n() {
            let v = parent.x[j];
            let fl = v.floor();
            let changes = [BoundChange::Upper(j, fl), BoundChange::Lower(j, fl + 1.0)];
            for ch in changes {
                let child = root.with_change(ch);
                let cold = solve_cold(&child);
                let warm = solve_warm(&child, &basis);
                assert_eq!(cold.status, warm.status, "seed {seed} var {j} {ch:?}");
                if cold.is_optimal() {
                    assert!((cold.objective - warm.objective).abs() <= 1e-6);
                    assert!(warm.objective >= parent.objective - 1e-9);
                    check_feasible(&inst, &child, &warm);
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn tightening_nonbasic_bound_is_immediately_optimal() {
    for seed in 0..10 {
        let (inst, _) = random_lp(seed, 10, 20);
        let model = LpModel::new(&inst);
        let root = model.root();
        let sol = solve_cold(&root);
        let basis = sol.basis.clone().unwrap();
        // a variable at its lower bound: raising the upper bound side (toward it) keeps optimality
        let j = (0..inst.n())
            .find(|&j| basis.status[j] == VarStatus::AtLower)
            .expect("some nonbasic at lower");
        let child = root.with_change(BoundChange::Upper(j, root.lower()[j] + 0.5));
        let warm = solve_warm(&child, &basis);
        assert_eq!(warm.status, LpStatus::Optimal);
        assert_eq!(warm.iterations, 0);
        assert!((warm.objective - sol.objective).abs() < 1e-9);
    }
}

#[test]
fn deterministic_pivots() {
    let (inst, _) = random_lp(3, 10, 20);
    let model = LpModel::new(&inst);
    let a = solve_cold(&model.root());
    let b = solve_cold(&model.root());
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x, b.x);
    assert_eq!(a.basis, b.basis);
}

use std::sync::Arc;

use super::factor::Factor;
use super::{Basis, LpModel, LpProblem, LpSolution, LpStatus, VarStatus};

/// Bound violation tolerated on basic variables before the dual simplex
/// selects them to leave.
const BOUND_TOL: f64 = 1e-9;
const STEP_EPS: f64 = 1e-12;

enum Outcome {
    Optimal,
    Unbounded,
    Infeasible,
    IterLimit,
}

struct Worker<'a> {
    model: &'a LpModel,
    n: usize,
    m: usize,
    /// row of each artificial column (columns `n + m ..`)
    art_rows: Vec<usize>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    basic: Vec<usize>,
    factor: Factor,
    iterations: usize,
    max_iterations: usize,
    degenerate_run: usize,
    bland: bool,
}

impl<'a> Worker<'a> {
    fn ncols(&self) -> usize {
        self.n + self.m + self.art_rows.len()
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in self.model.column(j) {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            f(self.art_rows[j - self.n - self.m], -1.0);
        }
    }

    fn col(&self, j: usize) -> Vec<(usize, f64)> {
        let mut v = Vec::new();
        self.for_col(j, |i, a| v.push((i, a)));
        v
    }

    fn dot_col(&self, j: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_col(j, |i, a| s += y[i] * a);
        s
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        self.factor.ftran(&self.col(j))
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lb[j] == self.ub[j]
    }

    fn refactor(&mut self) -> bool {
        let cols: Vec<Vec<(usize, f64)>> = self.basic.iter().map(|&j| self.col(j)).collect();
        match Factor::invert(self.m, &cols) {
            Some(f) => {
                self.factor = f;
                true
            }
            None => false,
        }
    }

    fn recompute_basics(&mut self) {
        let mut rhs = self.model.rhs.clone();
        for j in 0..self.ncols() {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_col(j, |i, a| rhs[i] -= a * xj);
            }
        }
        let m = self.m;
        for r in 0..m {
            let row = self.factor.row(r);
            let v: f64 = row.iter().zip(&rhs).map(|(b, v)| b * v).sum();
            self.x[self.basic[r]] = v;
        }
    }

    fn duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.basic.iter().map(|&j| self.cost[j]).collect();
        self.factor.btran(&cb)
    }

    fn maybe_refactor(&mut self) -> bool {
        if self.factor.pivots >= self.model.options.refactor_every {
            if !self.refactor() {
                return false;
            }
            self.recompute_basics();
        }
        true
    }

    fn note_step(&mut self, step: f64) {
        if step <= STEP_EPS {
            self.degenerate_run += 1;
            if self.degenerate_run >= self.model.options.bland_after {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    fn max_bound_violation(&self) -> f64 {
        self.basic
            .iter()
            .map(|&j| (self.lb[j] - self.x[j]).max(self.x[j] - self.ub[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn primal(&mut self) -> Outcome {
        let opts = self.model.options;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterLimit;
            }
            let y = self.duals();
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.ncols() {
                if self.status[j] == VarStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let d = self.cost[j] - self.dot_col(j, &y);
                let dir = match self.status[j] {
                    VarStatus::AtLower if d < -opts.dual_tol => 1.0,
                    VarStatus::AtUpper if d > opts.dual_tol => -1.0,
                    VarStatus::Free if d < -opts.dual_tol => 1.0,
                    VarStatus::Free if d > opts.dual_tol => -1.0,
                    _ => continue,
                };
                if self.bland {
                    enter = Some((j, dir));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Outcome::Optimal;
            };
            let alpha = self.ftran(q);

            let mut theta = self.ub[q] - self.lb[q];
            for (r, &a) in alpha.iter().enumerate() {
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let j = self.basic[r];
                let da = dir * a;
                let t = if da > 0.0 {
                    if self.lb[j] == f64::NEG_INFINITY {
                        continue;
                    }
                    (self.x[j] - self.lb[j]).max(0.0) / da
                } else {
                    if self.ub[j] == f64::INFINITY {
                        continue;
                    }
                    (self.ub[j] - self.x[j]).max(0.0) / -da
                };
                theta = theta.min(t);
            }
            if theta == f64::INFINITY {
                return Outcome::Unbounded;
            }
            let flip_range = self.ub[q] - self.lb[q];
            let mut leave: Option<usize> = None;
            if flip_range > theta + STEP_EPS {
                let mut best_key = f64::NEG_INFINITY;
                for (r, &a) in alpha.iter().enumerate() {
                    if a.abs() <= opts.pivot_tol {
                        continue;
                    }
                    let j = self.basic[r];
                    let da = dir * a;
                    let t = if da > 0.0 {
                        if self.lb[j] == f64::NEG_INFINITY {
                            continue;
                        }
                        (self.x[j] - self.lb[j]).max(0.0) / da
                    } else {
                        if self.ub[j] == f64::INFINITY {
                            continue;
                        }
                        (self.ub[j] - self.x[j]).max(0.0) / -da
                    };
                    if t <= theta + STEP_EPS {
                        let key = if self.bland { -(j as f64) } else { a.abs() };
                        if key > best_key {
                            best_key = key;
                            leave = Some(r);
                        }
                    }
                }
            }

            for (r, &a) in alpha.iter().enumerate() {
                let j = self.basic[r];
                self.x[j] -= dir * theta * a;
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.status[q] = VarStatus::AtUpper;
                        self.x[q] = self.ub[q];
                    } else {
                        self.status[q] = VarStatus::AtLower;
                        self.x[q] = self.lb[q];
                    }
                }
                Some(r) => {
                    self.x[q] += dir * theta;
                    let j = self.basic[r];
                    if dir * alpha[r] > 0.0 {
                        self.status[j] = VarStatus::AtLower;
                        self.x[j] = self.lb[j];
                    } else {
                        self.status[j] = VarStatus::AtUpper;
                        self.x[j] = self.ub[j];
                    }
                    self.status[q] = VarStatus::Basic;
                    self.basic[r] = q;
                    self.factor.pivot(r, &alpha);
                }
            }
            self.iterations += 1;
            self.note_step(theta);
            if !self.maybe_refactor() {
                return Outcome::IterLimit;
            }
        }
    }

    /// Dual simplex from a dual-feasible basis.
    fn dual(&mut self) -> Outcome {
        let opts = self.model.options;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterLimit;
            }
            let mut leave: Option<(usize, bool)> = None;
            let mut worst = BOUND_TOL;
            for (r, &j) in self.basic.iter().enumerate() {
                let below = self.lb[j] - self.x[j];
                let above = self.x[j] - self.ub[j];
                let (v, to_lower) = if below > above { (below, true) } else { (above, false) };
                if v > worst {
                    if self.bland {
                        let better = match leave {
                            None => true,
                            Some((lr, _)) => j < self.basic[lr],
                        };
                        if better {
                            leave = Some((r, to_lower));
                        }
                        continue;
                    }
                    worst = v;
                    leave = Some((r, to_lower));
                }
            }
            let Some((r, to_lower)) = leave else {
                return Outcome::Optimal;
            };
            let rho = self.factor.row(r).to_vec();
            let y = self.duals();
            let mut enter: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0;
            for j in 0..self.ncols() {
                if self.status[j] == VarStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let a = self.dot_col(j, &rho);
                if a.abs() <= opts.pivot_tol {
                    continue;
                }
                let d = self.cost[j] - self.dot_col(j, &y);
                let (ok, slack) = match self.status[j] {
                    VarStatus::AtLower => (if to_lower { a < 0.0 } else { a > 0.0 }, d.max(0.0)),
                    VarStatus::AtUpper => (if to_lower { a > 0.0 } else { a < 0.0 }, (-d).max(0.0)),
                    VarStatus::Free => (true, d.abs()),
                    VarStatus::Basic => (false, 0.0),
                };
                if !ok {
                    continue;
                }
                let ratio = slack / a.abs();
                let take = if self.bland {
                    ratio < best_ratio - STEP_EPS
                } else {
                    ratio < best_ratio - STEP_EPS
                        || (ratio <= best_ratio + STEP_EPS && a.abs() > best_alpha)
                };
                if take {
                    best_ratio = ratio;
                    best_alpha = a.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Outcome::Infeasible;
            };
            let alpha = self.ftran(q);
            if alpha[r].abs() <= opts.pivot_tol {
                // row and column computations disagree; refresh and retry
                if !self.refactor() {
                    return Outcome::IterLimit;
                }
                self.recompute_basics();
                self.iterations += 1;
                continue;
            }
            let leaving = self.basic[r];
            let target = if to_lower { self.lb[leaving] } else { self.ub[leaving] };
            let theta = (self.x[leaving] - target) / alpha[r];
            for (i, &a) in alpha.iter().enumerate() {
                let j = self.basic[i];
                self.x[j] -= theta * a;
            }
            self.x[q] += theta;
            self.x[leaving] = target;
            self.status[leaving] = if to_lower { VarStatus::AtLower } else { VarStatus::AtUpper };
            self.status[q] = VarStatus::Basic;
            self.basic[r] = q;
            self.factor.pivot(r, &alpha);
            self.iterations += 1;
            self.note_step(best_ratio);
            if !self.maybe_refactor() {
                return Outcome::IterLimit;
            }
        }
    }

    fn dual_feasible(&self) -> bool {
        let tol = self.model.options.dual_tol;
        let y = self.duals();
        (0..self.ncols()).all(|j| {
            if self.status[j] == VarStatus::Basic || self.is_fixed(j) {
                return true;
            }
            let d = self.cost[j] - self.dot_col(j, &y);
            match self.status[j] {
                VarStatus::AtLower => d >= -tol,
                VarStatus::AtUpper => d <= tol,
                VarStatus::Free => d.abs() <= tol,
                VarStatus::Basic => true,
            }
        })
    }

    /// Alternate primal and dual passes until a fresh recomputation of the
    /// basic values is both primal and dual feasible.
    fn polish(&mut self) -> Outcome {
        for _ in 0..4 {
            match self.primal() {
                Outcome::Optimal => {}
                other => return other,
            }
            if !self.refactor() {
                return Outcome::IterLimit;
            }
            self.recompute_basics();
            if self.max_bound_violation() <= BOUND_TOL {
                return Outcome::Optimal;
            }
            match self.dual() {
                Outcome::Optimal => {}
                other => return other,
            }
        }
        Outcome::IterLimit
    }

    fn finish(self, status: LpStatus, warm_fallback: bool) -> LpSolution {
        let (n, m) = (self.n, self.m);
        if status != LpStatus::Optimal {
            let mut s = LpSolution::failed(status, n, m, self.iterations);
            s.warm_fallback = warm_fallback;
            return s;
        }
        let y = self.duals();
        let reduced_costs: Vec<f64> = (0..n).map(|j| self.cost[j] - self.dot_col(j, &y)).collect();
        let x: Vec<f64> = (0..n).map(|j| self.x[j].clamp(self.lb[j], self.ub[j])).collect();
        let objective = x.iter().zip(&self.model.cost).map(|(v, c)| v * c).sum();
        let basis = Basis {
            status: self.status[..n + m].to_vec(),
            basic: self.basic.clone(),
            factor: Some(Arc::new(self.factor)),
        };
        LpSolution {
            status,
            x,
            objective,
            basis: Some(basis),
            iterations: self.iterations,
            duals: y,
            reduced_costs,
            warm_fallback,
        }
    }
}

fn nonbasic_default(l: f64, u: f64) -> (VarStatus, f64) {
    if l.is_finite() {
        (VarStatus::AtLower, l)
    } else if u.is_finite() {
        (VarStatus::AtUpper, u)
    } else {
        (VarStatus::Free, 0.0)
    }
}

fn column_bounds(problem: &LpProblem<'_>) -> (Vec<f64>, Vec<f64>) {
    let m = problem.model().m();
    let mut lb = problem.lower().to_vec();
    let mut ub = problem.upper().to_vec();
    lb.extend(std::iter::repeat_n(0.0, m));
    ub.extend(std::iter::repeat_n(f64::INFINITY, m));
    (lb, ub)
}

fn costs(model: &LpModel) -> Vec<f64> {
    let mut c = model.cost.clone();
    c.extend(std::iter::repeat_n(0.0, model.m()));
    c
}

/// Solve from scratch: slack basis, artificial phase 1, primal phase 2.
pub fn solve_cold(problem: &LpProblem<'_>) -> LpSolution {
    let model = problem.model();
    let (n, m) = (model.n(), model.m());
    if problem.trivially_infeasible() {
        return LpSolution::failed(LpStatus::Infeasible, n, m, 0);
    }
    let (mut lb, mut ub) = column_bounds(problem);
    let mut status = Vec::with_capacity(n + m);
    let mut x = Vec::with_capacity(n + m);
    for j in 0..n {
        let (s, v) = nonbasic_default(lb[j], ub[j]);
        status.push(s);
        x.push(v);
    }
    // slack values b - A x_N
    let mut slack = model.rhs.clone();
    for j in 0..n {
        if x[j] != 0.0 {
            for &(i, a) in model.column(j) {
                slack[i] -= a * x[j];
            }
        }
    }
    let mut art_rows = Vec::new();
    let mut basic = Vec::with_capacity(m);
    let mut factor = Factor::identity(m);
    for (i, &s) in slack.iter().enumerate() {
        if s < -model.options.primal_tol {
            status.push(VarStatus::AtLower);
            x.push(0.0);
            art_rows.push(i);
            factor.binv[i * m + i] = -1.0;
        } else {
            status.push(VarStatus::Basic);
            x.push(s);
        }
    }
    let mut next_art = n + m;
    for (i, &s) in slack.iter().enumerate() {
        if s < -model.options.primal_tol {
            basic.push(next_art);
            next_art += 1;
        } else {
            basic.push(n + i);
        }
    }
    let mut cost = costs(model);
    for (k, &i) in art_rows.iter().enumerate() {
        let _ = k;
        lb.push(0.0);
        ub.push(f64::INFINITY);
        status.push(VarStatus::Basic);
        x.push(-slack[i]);
        cost.push(0.0);
    }
    let mut w = Worker {
        model,
        n,
        m,
        art_rows,
        lb,
        ub,
        cost,
        status,
        x,
        basic,
        factor,
        iterations: 0,
        max_iterations: model.max_iterations(),
        degenerate_run: 0,
        bland: false,
    };

    if !w.art_rows.is_empty() {
        let phase2_cost = w.cost.clone();
        let mut phase1_cost = vec![0.0; w.ncols()];
        for c in phase1_cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        w.cost = phase1_cost;
        match w.primal() {
            Outcome::Optimal => {}
            Outcome::IterLimit => return w.finish(LpStatus::IterLimit, false),
            Outcome::Unbounded | Outcome::Infeasible => return w.finish(LpStatus::Infeasible, false),
        }
        if w.refactor() {
            w.recompute_basics();
        }
        let infeas: f64 = (n + m..w.ncols()).map(|j| w.x[j].max(0.0)).sum();
        let bmax = model.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > 1e-6 * (1.0 + bmax) {
            return w.finish(LpStatus::Infeasible, false);
        }
        drive_out_artificials(&mut w);
        if w.basic.iter().any(|&j| j >= n + m) {
            return w.finish(LpStatus::IterLimit, false);
        }
        w.art_rows.clear();
        w.lb.truncate(n + m);
        w.ub.truncate(n + m);
        w.status.truncate(n + m);
        w.x.truncate(n + m);
        w.cost = phase2_cost;
        w.cost.truncate(n + m);
        if !w.refactor() {
            return w.finish(LpStatus::IterLimit, false);
        }
        w.recompute_basics();
    }

    let outcome = w.polish();
    finish_outcome(w, outcome, false)
}

fn finish_outcome(w: Worker<'_>, outcome: Outcome, fallback: bool) -> LpSolution {
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => LpStatus::Unbounded,
        Outcome::Infeasible => LpStatus::Infeasible,
        Outcome::IterLimit => LpStatus::IterLimit,
    };
    w.finish(status, fallback)
}

fn drive_out_artificials(w: &mut Worker<'_>) {
    let (n, m) = (w.n, w.m);
    for r in 0..m {
        let a = w.basic[r];
        if a < n + m {
            continue;
        }
        let rho = w.factor.row(r).to_vec();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n + m {
            if w.status[j] == VarStatus::Basic {
                continue;
            }
            let v = w.dot_col(j, &rho).abs();
            if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        if let Some((j, _)) = best {
            let alpha = w.ftran(j);
            w.factor.pivot(r, &alpha);
            w.basic[r] = j;
            w.status[j] = VarStatus::Basic;
            w.status[a] = VarStatus::AtLower;
            w.x[a] = 0.0;
        }
    }
}

/// Re-solve after bound changes starting from `parent`, which must have been
/// optimal for a problem differing only in bounds. Falls back to a cold solve
/// (flagged) when the basis is singular or not dual feasible.
pub fn solve_warm(problem: &LpProblem<'_>, parent: &Basis) -> LpSolution {
    let model = problem.model();
    let (n, m) = (model.n(), model.m());
    if problem.trivially_infeasible() {
        return LpSolution::failed(LpStatus::Infeasible, n, m, 0);
    }
    if parent.status.len() != n + m || parent.basic.len() != m {
        return fallback(problem);
    }
    let (lb, ub) = column_bounds(problem);
    let mut status = parent.status.clone();
    let mut x = vec![0.0; n + m];
    for j in 0..n + m {
        match status[j] {
            VarStatus::Basic => {}
            VarStatus::AtLower if lb[j].is_finite() => x[j] = lb[j],
            VarStatus::AtUpper if ub[j].is_finite() => x[j] = ub[j],
            _ => {
                let (s, v) = nonbasic_default(lb[j], ub[j]);
                status[j] = s;
                x[j] = v;
            }
        }
    }
    let factor = match &parent.factor {
        Some(f) if f.m == m => (**f).clone(),
        _ => Factor::identity(m),
    };
    let mut w = Worker {
        model,
        n,
        m,
        art_rows: Vec::new(),
        lb,
        ub,
        cost: costs(model),
        status,
        x,
        basic: parent.basic.clone(),
        factor,
        iterations: 0,
        max_iterations: model.max_iterations(),
        degenerate_run: 0,
        bland: false,
    };
    if parent.factor.is_none() && !w.refactor() {
        return fallback(problem);
    }
    w.recompute_basics();
    if !w.dual_feasible() {
        if w.max_bound_violation() <= BOUND_TOL {
            let outcome = w.polish();
            return finish_outcome(w, outcome, false);
        }
        return fallback(problem);
    }
    match w.dual() {
        Outcome::Optimal => {}
        Outcome::Infeasible => return w.finish(LpStatus::Infeasible, false),
        Outcome::IterLimit => return w.finish(LpStatus::IterLimit, false),
        Outcome::Unbounded => return w.finish(LpStatus::Unbounded, false),
    }
    if w.max_bound_violation() <= BOUND_TOL && w.dual_feasible() {
        // already optimal without an extra refactorization
        return w.finish(LpStatus::Optimal, false);
    }
    let outcome = w.polish();
    finish_outcome(w, outcome, false)
}

fn fallback(problem: &LpProblem<'_>) -> LpSolution {
    let mut s = solve_cold(problem);
    s.warm_fallback = true;
    s
}

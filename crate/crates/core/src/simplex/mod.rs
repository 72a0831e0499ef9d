//! Bounded-variable revised simplex.
//!
//! Constraints `A x <= b` get one slack each, `A x + s = b, s >= 0`. The basis
//! inverse is kept dense and updated in product form, with a full
//! refactorization every [`SimplexOptions::refactor_every`] pivots. Cold solves
//! run a phase 1 on artificial columns followed by primal phase 2; warm solves
//! start from a parent basis and run the dual simplex.

mod factor;
mod solver;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::milp::MilpInstance;

pub use solver::{solve_cold, solve_warm};

pub(crate) use factor::Factor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Pivot cap; `None` means `50 * (n + m)`.
    pub max_iterations: Option<usize>,
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub pivot_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iterations: None,
            refactor_every: 50,
            bland_after: 1000,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            pivot_tol: 1e-9,
        }
    }
}

/// Column-wise copy of an instance's constraint matrix.
#[derive(Debug, Clone)]
pub struct LpModel {
    n: usize,
    m: usize,
    columns: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    options: SimplexOptions,
}

impl LpModel {
    pub fn new(instance: &MilpInstance) -> Self {
        Self::with_options(instance, SimplexOptions::default())
    }

    pub fn with_options(instance: &MilpInstance, options: SimplexOptions) -> Self {
        let n = instance.n();
        let mut columns = vec![Vec::new(); n];
        for (i, row) in instance.rows().iter().enumerate() {
            for &(j, a) in &row.entries {
                columns[j].push((i, a));
            }
        }
        LpModel {
            n,
            m: instance.m(),
            columns,
            rhs: instance.rows().iter().map(|r| r.rhs).collect(),
            cost: instance.objective().to_vec(),
            lower: instance.lower().to_vec(),
            upper: instance.upper().to_vec(),
            options,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn options(&self) -> &SimplexOptions {
        &self.options
    }

    pub fn max_iterations(&self) -> usize {
        self.options.max_iterations.unwrap_or(50 * (self.n + self.m).max(1))
    }

    /// LP relaxation at the instance's own bounds.
    pub fn root(&self) -> LpProblem<'_> {
        LpProblem {
            model: self,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn with_bounds(&self, lower: Vec<f64>, upper: Vec<f64>) -> LpProblem<'_> {
        debug_assert_eq!(lower.len(), self.n);
        LpProblem {
            model: self,
            lower,
            upper,
        }
    }

    pub(crate) fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }
}

/// An LP relaxation with node-local bounds.
#[derive(Debug, Clone)]
pub struct LpProblem<'a> {
    model: &'a LpModel,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundChange {
    Upper(usize, f64),
    Lower(usize, f64),
}

impl BoundChange {
    pub fn var(self) -> usize {
        match self {
            BoundChange::Upper(j, _) | BoundChange::Lower(j, _) => j,
        }
    }
}

impl<'a> LpProblem<'a> {
    pub fn model(&self) -> &'a LpModel {
        self.model
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn into_bounds(self) -> (Vec<f64>, Vec<f64>) {
        (self.lower, self.upper)
    }

    /// Tighten one bound (never loosens).
    pub fn apply(&mut self, change: BoundChange) {
        match change {
            BoundChange::Upper(j, v) => self.upper[j] = self.upper[j].min(v),
            BoundChange::Lower(j, v) => self.lower[j] = self.lower[j].max(v),
        }
    }

    pub fn with_change(&self, change: BoundChange) -> LpProblem<'a> {
        let mut p = self.clone();
        p.apply(change);
        p
    }

    /// Some variable has `l > u`.
    pub fn trivially_infeasible(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }
}

/// Status of every structural and slack column plus the basic column of each
/// row. Carries the dense inverse when one is available, so a child solve
/// can skip refactorization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Basis {
    pub status: Vec<VarStatus>,
    pub basic: Vec<usize>,
    #[serde(skip)]
    pub(crate) factor: Option<Arc<Factor>>,
}

impl PartialEq for Basis {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status && self.basic == other.basic
    }
}

impl Basis {
    /// Drop the cached inverse (keeps the combinatorial basis only).
    pub fn without_factor(&self) -> Basis {
        Basis {
            status: self.status.clone(),
            basic: self.basic.clone(),
            factor: None,
        }
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values (length n).
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Option<Basis>,
    pub iterations: usize,
    /// Row duals `y = c_B^T B^{-1}` (length m).
    pub duals: Vec<f64>,
    /// Structural reduced costs `c_j - y^T A_j` (length n).
    pub reduced_costs: Vec<f64>,
    /// The warm start could not use the parent basis and fell back to a cold solve.
    pub warm_fallback: bool,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub(crate) fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        LpSolution {
            status,
            x: vec![0.0; n],
            objective: f64::INFINITY,
            basis: None,
            iterations,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            warm_fallback: false,
        }
    }

    /// Status from basis column statuses for structural variables.
    pub fn structural_status(&self, j: usize) -> Option<VarStatus> {
        self.basis.as_ref().map(|b| b.status[j])
    }
}

#[cfg(test)]
mod tests;

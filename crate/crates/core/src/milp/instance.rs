use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::MilpError;

/// Tolerance used to decide whether a value is integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Family {
    SetCovering,
    CombinatorialAuction,
    MaxIndependentSet,
    MultipleKnapsack,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::SetCovering,
        Family::CombinatorialAuction,
        Family::MaxIndependentSet,
        Family::MultipleKnapsack,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::SetCovering => "set-covering",
            Family::CombinatorialAuction => "combinatorial-auction",
            Family::MaxIndependentSet => "max-independent-set",
            Family::MultipleKnapsack => "multiple-knapsack",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Family::SetCovering => "sc",
            Family::CombinatorialAuction => "ca",
            Family::MaxIndependentSet => "mis",
            Family::MultipleKnapsack => "mk",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = MilpError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.short() == s)
            .ok_or_else(|| MilpError::Invalid(format!("unknown family {s:?}")))
    }
}

/// One `a^T x <= rhs` constraint with its nonzeros sorted by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `min c^T x  s.t.  A x <= b,  l <= x <= u,  x_j integer for j in I`.
///
/// Immutable after construction; [`MilpInstance::new`] enforces the
/// invariants (bounds ordered, integer set in range, no empty or non-finite
/// rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpInstance {
    name: String,
    family: Option<Family>,
    seed: Option<u64>,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integers: Vec<usize>,
    is_integer: Vec<bool>,
    rows: Vec<Row>,
    witness: Option<Vec<f64>>,
}

impl MilpInstance {
    pub fn new(
        objective: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        mut integers: Vec<usize>,
        mut rows: Vec<Row>,
    ) -> Result<Self, MilpError> {
        let n = objective.len();
        if lower.len() != n || upper.len() != n {
            return Err(MilpError::Invalid(format!(
                "bound vectors have length {}/{} but n = {n}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(j) = objective.iter().position(|c| !c.is_finite()) {
            return Err(MilpError::Invalid(format!("objective coefficient {j} is not finite")));
        }
        for j in 0..n {
            if lower[j].is_nan() || upper[j].is_nan() {
                return Err(MilpError::Invalid(format!("bound of variable {j} is NaN")));
            }
            if lower[j] > upper[j] {
                return Err(MilpError::Invalid(format!(
                    "variable {j} has l = {} > u = {}",
                    lower[j], upper[j]
                )));
            }
            if lower[j] == f64::INFINITY || upper[j] == f64::NEG_INFINITY {
                return Err(MilpError::Invalid(format!("variable {j} has an empty domain")));
            }
        }
        integers.sort_unstable();
        integers.dedup();
        if let Some(&j) = integers.iter().find(|&&j| j >= n) {
            return Err(MilpError::Invalid(format!("integer index {j} out of range (n = {n})")));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.entries.retain(|&(_, a)| a != 0.0);
            row.entries.sort_by_key(|&(j, _)| j);
            if row.entries.is_empty() {
                return Err(MilpError::Invalid(format!("constraint row {i} has no nonzeros")));
            }
            if !row.rhs.is_finite() {
                return Err(MilpError::Invalid(format!("constraint row {i} has non-finite rhs")));
            }
            for w in row.entries.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(MilpError::Invalid(format!(
                        "constraint row {i} repeats column {}",
                        w[0].0
                    )));
                }
            }
            for &(j, a) in &row.entries {
                if j >= n {
                    return Err(MilpError::Invalid(format!(
                        "constraint row {i} references column {j} (n = {n})"
                    )));
                }
                if !a.is_finite() {
                    return Err(MilpError::Invalid(format!("constraint row {i} has non-finite entry")));
                }
            }
        }
        let mut is_integer = vec![false; n];
        for &j in &integers {
            is_integer[j] = true;
        }
        Ok(MilpInstance {
            name: String::from("unnamed"),
            family: None,
            seed: None,
            objective,
            lower,
            upper,
            integers,
            is_integer,
            rows,
            witness: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = Some(family);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Attach a feasible point; rejected unless it satisfies every constraint.
    pub fn with_witness(mut self, witness: Vec<f64>) -> Result<Self, MilpError> {
        if !self.is_feasible(&witness, 1e-9) {
            return Err(MilpError::Invalid("witness is not integer feasible".into()));
        }
        self.witness = Some(witness);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.entries.len()).sum()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Option<Family> {
        self.family
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn integers(&self) -> &[usize] {
        &self.integers
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.is_integer[j]
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn witness(&self) -> Option<&[f64]> {
        self.witness.as_deref()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].entries.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Bounds, constraints (with relative slack `tol * (1 + |b|)`) and
    /// integrality within [`INTEGRALITY_TOL`].
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.n() {
            return false;
        }
        let bounds_ok = (0..self.n()).all(|j| x[j] >= self.lower[j] - tol && x[j] <= self.upper[j] + tol);
        let ints_ok = self
            .integers
            .iter()
            .all(|&j| (x[j] - x[j].round()).abs() <= INTEGRALITY_TOL);
        let rows_ok = (0..self.m()).all(|i| {
            let b = self.rows[i].rhs;
            self.row_activity(i, x) <= b + tol * (1.0 + b.abs())
        });
        bounds_ok && ints_ok && rows_ok
    }
}

/// Integer variables whose value is more than [`INTEGRALITY_TOL`] from the
/// nearest integer.
pub fn fractional_candidates(instance: &MilpInstance, x: &[f64]) -> Vec<usize> {
    instance
        .integers()
        .iter()
        .copied()
        .filter(|&j| (x[j] - x[j].round()).abs() > INTEGRALITY_TOL)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(entries: Vec<(usize, f64)>, rhs: f64) -> Row {
        Row { entries, rhs }
    }

    #[test]
    fn rejects_inverted_bounds() {
        let r = MilpInstance::new(vec![1.0], vec![2.0], vec![1.0], vec![], vec![row(vec![(0, 1.0)], 1.0)]);
        assert!(matches!(r, Err(MilpError::Invalid(_))));
    }

    #[test]
    fn rejects_empty_row() {
        let r = MilpInstance::new(vec![1.0], vec![0.0], vec![1.0], vec![], vec![row(vec![], 1.0)]);
        assert!(r.is_err());
        let r = MilpInstance::new(vec![1.0], vec![0.0], vec![1.0], vec![], vec![row(vec![(0, 0.0)], 1.0)]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_out_of_range_integer() {
        let r = MilpInstance::new(vec![1.0], vec![0.0], vec![1.0], vec![3], vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn candidates_are_fractional_integers_only() {
        let inst = MilpInstance::new(
            vec![0.0; 4],
            vec![0.0; 4],
            vec![1.0; 4],
            vec![0, 1, 2],
            vec![row(vec![(0, 1.0), (3, 1.0)], 2.0)],
        )
        .unwrap();
        let x = [0.5, 1.0 - 1e-7, 0.3, 0.5];
        assert_eq!(fractional_candidates(&inst, &x), vec![0, 2]);
    }

    #[test]
    fn family_names_parse() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
            assert_eq!(f.short().parse::<Family>().unwrap(), f);
        }
    }
}

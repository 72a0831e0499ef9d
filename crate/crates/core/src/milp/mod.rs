//! MILP instances `min c^T x  s.t.  A x <= b, l <= x <= u, x_j integer (j in I)`,
//! their file format, generators and the bipartite observation.

mod format;
mod generators;
mod instance;
mod observation;

use thiserror::Error;

pub use format::{instance_to_string, parse_instance, read_instance, write_instance};
pub use generators::{generate, independent_set, multiple_knapsack_from, random_binary_milp, FamilyParams, GeneratorConfig};
pub use instance::{fractional_candidates, Family, MilpInstance, Row, INTEGRALITY_TOL};
pub use observation::{extract_observation, BipartiteObservation, GraphStructure, NodeContext, CONS_FEATURES, EDGE_FEATURES, VAR_FEATURES};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MilpError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("observation requires a solved LP relaxation")]
    MissingLp,
}

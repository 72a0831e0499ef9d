pub mod bnb;
pub mod config;
pub mod eval;
pub mod milp;
pub mod model;
pub mod planner;
pub mod policy;
pub mod simplex;
pub mod tensor;
pub mod training;

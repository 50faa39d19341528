//! Distributionally robust, fairness-constrained task assignment.
//!
//! Tasks with uncertain service times are assigned to workers so that, for
//! every distribution with a known mean and support, all pairwise workload
//! differences stay within a threshold with high probability. The joint
//! chance constraint is replaced by a worst-case CVaR bound that is linear
//! programming representable; the resulting mixed-binary problem is solved by
//! alternating between the assignment and the constraint scaling.

pub mod dro;
pub mod error;
pub mod eval;
pub mod io;
pub mod lp;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use eval::{evaluate, run_experiment, EvaluationReport, ExperimentConfig, ExperimentSummary, Method};
pub use solver::{mean_value_solve, sequential_solve, RunTrace, SolverConfig};
pub use model::{
    build_constraint_rows, build_constraint_system, generate_instance, validate_instance,
    Assignment, ConstraintSystem, GeneratorParams, Instance, Matrix, ScalingPair, SupportSet,
};

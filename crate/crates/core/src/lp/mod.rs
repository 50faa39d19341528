//! Self-contained linear and mixed-binary programming.
//!
//! [`solve_lp`] runs a bounded-variable revised simplex; [`solve_milp`] wraps
//! it in best-bound branch and bound over the binary variables.

mod factor;
mod milp;
mod model;
mod simplex;
mod sparse;

pub use model::{
    Constraint, ConstraintId, ConstraintSense, LinearModel, Objective, ObjectiveSense, VarId,
    Variable,
};

use serde::{Deserialize, Serialize};
use simplex::{LpOutcome, Simplex, StandardForm, Tolerances};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("variable {var} has invalid bounds [{lower}, {upper}]")]
    InvalidBounds { var: usize, lower: f64, upper: f64 },
    #[error("binary variable {var} must have bounds within [0, 1]")]
    BinaryBounds { var: usize },
    #[error("reference to unknown variable {var}")]
    UnknownVariable { var: usize, row: Option<usize> },
    #[error("non-finite coefficient on variable {var}")]
    NonFiniteCoefficient { var: usize, row: Option<usize> },
    #[error("constraint {row} has a non-finite right-hand side")]
    NonFiniteRhs { row: usize },
}

/// Numerical tolerances and work budgets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub int_tol: f64,
    /// Relative optimality gap at which branch and bound stops.
    pub mip_gap: f64,
    pub max_pivots: usize,
    pub max_nodes: usize,
    /// Degenerate pivots tolerated before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            int_tol: 1e-6,
            mip_gap: 1e-6,
            max_pivots: 1_000_000,
            max_nodes: 100_000,
            bland_after: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NodeLimit,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Objective in the model's own sense, including its constant.
    pub objective: Option<f64>,
    /// Values of the structural variables (empty when no point is known).
    pub primal: Vec<f64>,
    /// One multiplier per constraint such that the objective equals
    /// `sum_i dual_i * rhs_i` plus reduced-cost bound terms. Empty for MILPs.
    pub dual: Vec<f64>,
    pub pivots: usize,
    pub nodes: usize,
    /// Proven bound on the optimum in the model's sense.
    pub best_bound: Option<f64>,
}

impl SolveResult {
    fn without_point(status: SolveStatus, pivots: usize, nodes: usize) -> Self {
        Self {
            status,
            objective: None,
            primal: Vec::new(),
            dual: Vec::new(),
            pivots,
            nodes,
            best_bound: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves the continuous relaxation of `model` (binaries relaxed to `[0, 1]`).
pub fn solve_lp(model: &LinearModel, options: &SolverOptions) -> Result<SolveResult, LpError> {
    model.validate()?;
    let sf = StandardForm::from_model(model);
    let mut simplex = Simplex::new(&sf, Tolerances::from(options));
    let outcome = simplex.primal();
    let status = match outcome {
        LpOutcome::Optimal => SolveStatus::Optimal,
        LpOutcome::Infeasible => SolveStatus::Infeasible,
        LpOutcome::Unbounded => SolveStatus::Unbounded,
        LpOutcome::IterationLimit => SolveStatus::IterationLimit,
    };
    if status != SolveStatus::Optimal {
        return Ok(SolveResult::without_point(status, simplex.pivots, 0));
    }
    let n = sf.n;
    let primal = simplex.x[..n].to_vec();
    let objective = model.objective_value(&primal);
    let dual = simplex
        .row_duals()
        .into_iter()
        .map(|y| sf.obj_sign * y)
        .collect();
    Ok(SolveResult {
        status,
        objective: Some(objective),
        primal,
        dual,
        pivots: simplex.pivots,
        nodes: 0,
        best_bound: Some(objective),
    })
}

/// Solves `model` to optimality over its binary variables.
pub fn solve_milp(model: &LinearModel, options: &SolverOptions) -> Result<SolveResult, LpError> {
    model.validate()?;
    if !model.has_binaries() {
        return solve_lp(model, options);
    }
    Ok(milp::branch_and_bound(model, options))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn small_lp_reaches_vertex() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let x = m.add_nonneg_var("x");
        let y = m.add_nonneg_var("y");
        m.add_constraint("a", vec![(x, 1.0), (y, 1.0)], ConstraintSense::Le, 4.0);
        m.add_constraint("b", vec![(x, 1.0), (y, 3.0)], ConstraintSense::Le, 6.0);
        m.set_objective(ObjectiveSense::Maximize, vec![(x, 3.0), (y, 2.0)]);
        let r = solve_lp(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 12.0).abs() < 1e-9);
        assert!((r.primal[0] - 4.0).abs() < 1e-9);
        assert!(r.primal[1].abs() < 1e-9);
        assert!((r.dual[0] - 3.0).abs() < 1e-9);
        assert!(r.dual[1].abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut m = LinearModel::new(ObjectiveSense::Minimize);
        let x = m.add_nonneg_var("x");
        m.add_constraint("", vec![(x, 1.0)], ConstraintSense::Le, -1.0);
        m.set_objective(ObjectiveSense::Minimize, vec![(x, 1.0)]);
        assert_eq!(solve_lp(&m, &opts()).unwrap().status, SolveStatus::Infeasible);

        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let x = m.add_nonneg_var("x");
        let y = m.add_free_var("y");
        m.add_constraint("", vec![(x, 1.0), (y, -1.0)], ConstraintSense::Le, 2.0);
        m.set_objective(ObjectiveSense::Maximize, vec![(x, 1.0)]);
        assert_eq!(solve_lp(&m, &opts()).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + 2y - z  s.t.  x + y + z = 3, x - y >= -1, 0 <= x <= 2, z <= 2, y free
        let mut m = LinearModel::new(ObjectiveSense::Minimize);
        let x = m.add_var("x", 0.0, 2.0);
        let y = m.add_free_var("y");
        let z = m.add_var("z", 0.0, 2.0);
        m.add_constraint("", vec![(x, 1.0), (y, 1.0), (z, 1.0)], ConstraintSense::Eq, 3.0);
        m.add_constraint("", vec![(x, 1.0), (y, -1.0)], ConstraintSense::Ge, -1.0);
        m.set_objective(ObjectiveSense::Minimize, vec![(x, 1.0), (y, 2.0), (z, -1.0)]);
        let r = solve_lp(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() + 2.0).abs() < 1e-9, "{:?}", r);
        assert!((r.primal[1] + 1.0).abs() < 1e-9);
        assert!(m.max_violation(&r.primal) < 1e-9);
    }

    #[test]
    fn knapsack_milp() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let w = [2.0, 3.0, 4.0, 5.0];
        let v = [3.0, 4.0, 5.0, 6.0];
        let xs: Vec<VarId> = (0..4).map(|i| m.add_binary(format!("x{i}"))).collect();
        m.add_constraint(
            "cap",
            xs.iter().zip(w).map(|(&x, w)| (x, w)),
            ConstraintSense::Le,
            5.0,
        );
        m.set_objective(ObjectiveSense::Maximize, xs.iter().zip(v).map(|(&x, v)| (x, v)));
        let r = solve_milp(&m, &opts()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 7.0).abs() < 1e-9);
        let mut m2 = m.clone();
        m2.set_objective(ObjectiveSense::Maximize, xs.iter().zip([10.0, 7.0, 8.0, 9.0]).map(|(&x, v)| (x, v)));
        let r2 = solve_milp(&m2, &opts()).unwrap();
        assert!((r2.objective.unwrap() - 17.0).abs() < 1e-9);
    }
}

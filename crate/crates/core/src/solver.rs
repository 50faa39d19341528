//! Alternating solution of the robust assignment problem, and the
//! mean-value baseline.
//!
//! The robust problem couples the assignment `x` and the scaling `(alpha,
//! beta)` bilinearly. With the scaling fixed it is a mixed-binary program in
//! `x`; with `x` fixed it is a linear program in the scaling. Alternating the
//! two never lowers the penalized reward `g_t = f(x_t) - M v_t`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dro::{add_cvar_block, worst_case_cvar_with, Affine, CvarOptions, SupportForm};
use crate::error::{Error, Result};
use crate::lp::{
    solve_lp, solve_milp, ConstraintSense, LinearModel, ObjectiveSense, SolveResult, SolveStatus,
    SolverOptions, VarId,
};
use crate::model::{validate_instance, Assignment, Instance, Matrix, ScalingPair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Maximum number of assignment solves.
    pub max_iters: usize,
    /// Relative change in `g_t` below which the iteration stops.
    pub tol: f64,
    /// Penalty on the constraint slack; `None` uses `100 * sum_i max_j r_ij`.
    pub big_m: Option<f64>,
    /// Lower bound on scaling entries; `None` uses `min(1e-4, 1/(2 J^2))`.
    pub scaling_floor: Option<f64>,
    pub force_generic_path: bool,
    pub lp: SolverOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 40,
            tol: 1e-4,
            big_m: None,
            scaling_floor: None,
            force_generic_path: false,
            lp: SolverOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn big_m_for(&self, inst: &Instance) -> f64 {
        self.big_m.unwrap_or_else(|| inst.default_big_m())
    }

    pub fn floor_for(&self, inst: &Instance) -> f64 {
        self.scaling_floor.unwrap_or_else(|| inst.default_floor())
    }

    fn check(&self, inst: &Instance) -> Result<()> {
        let j = inst.n_workers as f64;
        let floor = self.floor_for(inst);
        let mut problems = Vec::new();
        if self.max_iters == 0 {
            problems.push("max_iters must be at least 1".to_string());
        }
        if !(self.tol > 0.0) {
            problems.push("tol must be positive".to_string());
        }
        if !(self.big_m_for(inst) > 0.0) {
            problems.push("big_m must be positive".to_string());
        }
        if !(floor > 0.0 && floor <= 1.0 / (2.0 * j * j)) && inst.n_workers > 1 {
            problems.push("scaling_floor must lie in (0, 1/(2 n_workers^2)]".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    fn cvar_options(&self) -> CvarOptions {
        CvarOptions {
            force_generic: self.force_generic_path,
        }
    }
}

/// Optimal point of an assignment model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSolution {
    pub x: Assignment,
    /// Slack on the robust (or mean-value) constraint.
    pub v: f64,
    /// Objective `f(x) - M v`.
    pub g: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub g: f64,
    pub v: f64,
    /// Worst-case CVaR of `x_t` under the scaling used to compute it.
    pub cvar_value: f64,
    pub reward: f64,
    pub nodes: usize,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub final_assignment: Assignment,
    /// Scaling used for the last assignment solve.
    pub final_scaling: ScalingPair,
    /// Stopped by the relative-change test rather than the iteration cap.
    pub converged: bool,
    /// Terminal slack is zero, so the assignment satisfies the robust bound.
    pub feasible_for_dro: bool,
}

impl RunTrace {
    pub fn last(&self) -> &IterationRecord {
        self.iterations.last().expect("a trace has at least one iteration")
    }
}

/// Binary `x_ij` variables (task-major) with row sums fixed to 1 and the
/// instance's fixed and forbidden pairs applied.
fn add_assignment_vars(lp: &mut LinearModel, inst: &Instance) -> Vec<Vec<VarId>> {
    let x: Vec<Vec<VarId>> = (0..inst.n_tasks)
        .map(|i| (0..inst.n_workers).map(|j| lp.add_binary(format!("x_{i}_{j}"))).collect())
        .collect();
    for &(i, j) in &inst.forbidden {
        lp.set_bounds(x[i][j], 0.0, 0.0);
    }
    for &(i, j) in &inst.fixed {
        for (jj, &v) in x[i].iter().enumerate() {
            if jj == j {
                lp.set_bounds(v, 1.0, 1.0);
            } else {
                lp.set_bounds(v, 0.0, 0.0);
            }
        }
    }
    for (i, row) in x.iter().enumerate() {
        lp.add_constraint(format!("assign{i}"), row.iter().map(|&v| (v, 1.0)), ConstraintSense::Eq, 1.0);
    }
    x
}

fn penalized_objective(
    lp: &mut LinearModel,
    inst: &Instance,
    x: &[Vec<VarId>],
    v: VarId,
    big_m: f64,
) {
    let mut obj: Vec<(VarId, f64)> = Vec::with_capacity(inst.n_tasks * inst.n_workers + 1);
    for (i, row) in x.iter().enumerate() {
        for (j, &var) in row.iter().enumerate() {
            obj.push((var, inst.rewards.get(i, j)));
        }
    }
    obj.push((v, -big_m));
    lp.set_objective(ObjectiveSense::Maximize, obj);
}

fn read_assignment(r: &SolveResult, x: &[Vec<VarId>], n_workers: usize) -> Result<Assignment> {
    let worker_of = x
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| r.primal[a.1 .0].total_cmp(&r.primal[b.1 .0]))
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect();
    Assignment::new(n_workers, worker_of)
}

fn finish_milp(
    r: SolveResult,
    context: &str,
    x: &[Vec<VarId>],
    v: VarId,
    inst: &Instance,
) -> Result<AssignmentSolution> {
    match r.status {
        SolveStatus::Optimal => Ok(AssignmentSolution {
            x: read_assignment(&r, x, inst.n_workers)?,
            v: r.primal[v.0].max(0.0),
            g: r.objective.unwrap_or(f64::NAN),
            nodes: r.nodes,
        }),
        status => Err(Error::Solver {
            context: context.to_string(),
            status,
            incumbent: r.objective,
        }),
    }
}

/// Assignment model for fixed scaling: maximize `f(x) - M v` subject to the
/// worst-case CVaR bound `gamma + mu^T lambda <= v`.
pub fn assignment_model(s: &ScalingPair, inst: &Instance, cfg: &SolverConfig) -> (LinearModel, Vec<Vec<VarId>>, VarId) {
    let (n, jn) = (inst.n_tasks, inst.n_workers);
    let mut lp = LinearModel::new(ObjectiveSense::Maximize);
    let x = add_assignment_vars(&mut lp, inst);
    let v = lp.add_nonneg_var("v");
    let mut rows = Vec::with_capacity(2 * jn * jn);
    for (m, sign) in [(&s.alpha, 1.0), (&s.beta, -1.0)] {
        for j in 0..jn {
            for jp in 0..jn {
                let w = m.get(j, jp);
                let a = (0..n)
                    .map(|i| Affine {
                        terms: if j == jp {
                            Vec::new()
                        } else {
                            vec![(x[i][j], sign * w), (x[i][jp], -sign * w)]
                        },
                        constant: 0.0,
                    })
                    .collect();
                rows.push((a, Affine::constant(-w * inst.delta)));
            }
        }
    }
    let form = SupportForm::new(&inst.support, cfg.force_generic_path);
    let block = add_cvar_block(&mut lp, &form, inst.epsilon, &rows, n);
    let mut cap = block.value_terms(&inst.mu);
    cap.push((v, -1.0));
    lp.add_constraint("cvar_cap", cap, ConstraintSense::Le, 0.0);
    penalized_objective(&mut lp, inst, &x, v, cfg.big_m_for(inst));
    (lp, x, v)
}

/// Best assignment for a fixed scaling.
pub fn solve_assignment_subproblem(
    s: &ScalingPair,
    inst: &Instance,
    cfg: &SolverConfig,
) -> Result<AssignmentSolution> {
    ensure_valid(inst)?;
    cfg.check(inst)?;
    if s.n_workers() != inst.n_workers {
        return Err(Error::Dimension("scaling does not match the worker count".into()));
    }
    let (lp, x, v) = assignment_model(s, inst, cfg);
    let r = solve_milp(&lp, &cfg.lp)?;
    finish_milp(r, "assignment subproblem", &x, v, inst)
}

/// Scaling in the normalized set with entries at least the floor that
/// minimizes the worst-case CVaR of `x`, and that minimum.
pub fn solve_scaling_subproblem(
    x: &Assignment,
    inst: &Instance,
    cfg: &SolverConfig,
) -> Result<(ScalingPair, f64)> {
    ensure_valid(inst)?;
    cfg.check(inst)?;
    x.check_dims(inst)?;
    let (n, jn) = (inst.n_tasks, inst.n_workers);
    let floor = cfg.floor_for(inst);
    let mut lp = LinearModel::new(ObjectiveSense::Minimize);
    let mut blocks = Vec::with_capacity(2);
    for name in ["alpha", "beta"] {
        let vars: Vec<Vec<VarId>> = (0..jn)
            .map(|j| {
                (0..jn)
                    .map(|jp| lp.add_var(format!("{name}_{j}_{jp}"), floor, f64::INFINITY))
                    .collect()
            })
            .collect();
        lp.add_constraint(
            format!("{name}_sum"),
            vars.iter().flatten().map(|&v| (v, 1.0)),
            ConstraintSense::Eq,
            1.0,
        );
        blocks.push(vars);
    }
    let mut rows = Vec::with_capacity(2 * jn * jn);
    for (vars, sign) in [(&blocks[0], 1.0), (&blocks[1], -1.0)] {
        for j in 0..jn {
            for jp in 0..jn {
                let w = vars[j][jp];
                let a = (0..n)
                    .map(|i| {
                        let c = sign * (x.get(i, j) - x.get(i, jp));
                        Affine {
                            terms: if c == 0.0 { Vec::new() } else { vec![(w, c)] },
                            constant: 0.0,
                        }
                    })
                    .collect();
                rows.push((
                    a,
                    Affine {
                        terms: vec![(w, -inst.delta)],
                        constant: 0.0,
                    },
                ));
            }
        }
    }
    let form = SupportForm::new(&inst.support, cfg.force_generic_path);
    let block = add_cvar_block(&mut lp, &form, inst.epsilon, &rows, n);
    lp.set_objective(ObjectiveSense::Minimize, block.value_terms(&inst.mu));
    let r = solve_lp(&lp, &cfg.lp)?;
    if r.status != SolveStatus::Optimal {
        return Err(Error::solver("scaling subproblem", r.status));
    }
    let read = |vars: &Vec<Vec<VarId>>| {
        let mut m = Matrix::zeros(jn, jn);
        for j in 0..jn {
            for jp in 0..jn {
                m.set(j, jp, r.primal[vars[j][jp].0]);
            }
        }
        m
    };
    let s = ScalingPair {
        alpha: normalize(read(&blocks[0]), floor),
        beta: normalize(read(&blocks[1]), floor),
        floor,
    };
    Ok((s, r.objective.unwrap_or(f64::NAN)))
}

/// Clamps solver noise so the entries sum to exactly 1 and respect the floor.
fn normalize(mut m: Matrix, floor: f64) -> Matrix {
    let (r, c) = (m.rows(), m.cols());
    for j in 0..r {
        for jp in 0..c {
            m.set(j, jp, m.get(j, jp).max(floor));
        }
    }
    let total = m.sum();
    m.scale(1.0 / total)
}

fn ensure_valid(inst: &Instance) -> Result<()> {
    let problems = validate_instance(inst);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInstance(problems))
    }
}

/// Alternates assignment and scaling solves from the uniform scaling.
pub fn sequential_solve(inst: &Instance, cfg: &SolverConfig) -> Result<RunTrace> {
    ensure_valid(inst)?;
    cfg.check(inst)?;
    let mut s = ScalingPair::uniform(inst.n_workers, cfg.floor_for(inst));
    let mut iterations: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut last_x = None;
    for t in 1..=cfg.max_iters {
        let start = Instant::now();
        let sol = solve_assignment_subproblem(&s, inst, cfg).map_err(|e| at_iteration(e, t))?;
        let (cvar_value, _) =
            worst_case_cvar_with(&sol.x.to_matrix(), &s, inst, cfg.cvar_options())
                .map_err(|e| at_iteration(e, t))?;
        let stop = match iterations.last() {
            Some(prev) => (sol.g - prev.g).abs() / sol.g.abs().max(1.0) < cfg.tol,
            None => false,
        };
        let record = IterationRecord {
            t,
            g: sol.g,
            v: sol.v,
            cvar_value,
            reward: sol.x.reward(&inst.rewards),
            nodes: sol.nodes,
            wall_time_ms: 0.0,
        };
        iterations.push(record);
        if stop {
            converged = true;
        } else if t < cfg.max_iters {
            let (next, _) =
                solve_scaling_subproblem(&sol.x, inst, cfg).map_err(|e| at_iteration(e, t))?;
            s = next;
        }
        iterations.last_mut().unwrap().wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        last_x = Some(sol.x);
        if converged {
            break;
        }
    }
    let final_assignment = last_x.expect("max_iters >= 1");
    let v = iterations.last().map_or(0.0, |r| r.v);
    Ok(RunTrace {
        iterations,
        final_assignment,
        final_scaling: s,
        converged,
        feasible_for_dro: v <= cfg.lp.int_tol,
    })
}

fn at_iteration(e: Error, t: usize) -> Error {
    match e {
        Error::Solver {
            context,
            status,
            incumbent,
        } => Error::Solver {
            context: format!("iteration {t}: {context}"),
            status,
            incumbent,
        },
        other => other,
    }
}

/// Assignment that keeps the expected pairwise load differences within
/// `delta` (with penalized slack), ignoring uncertainty.
pub fn mean_value_solve(inst: &Instance, cfg: &SolverConfig) -> Result<AssignmentSolution> {
    ensure_valid(inst)?;
    cfg.check(inst)?;
    let (lp, x, v) = mean_value_model(inst, cfg);
    let r = solve_milp(&lp, &cfg.lp)?;
    finish_milp(r, "mean-value problem", &x, v, inst)
}

pub fn mean_value_model(inst: &Instance, cfg: &SolverConfig) -> (LinearModel, Vec<Vec<VarId>>, VarId) {
    let mut lp = LinearModel::new(ObjectiveSense::Maximize);
    let x = add_assignment_vars(&mut lp, inst);
    let v = lp.add_nonneg_var("v");
    for j in 0..inst.n_workers {
        for jp in (j + 1)..inst.n_workers {
            let diff: Vec<(VarId, f64)> = (0..inst.n_tasks)
                .flat_map(|i| [(x[i][j], inst.mu[i]), (x[i][jp], -inst.mu[i])])
                .collect();
            let mut hi = diff.clone();
            hi.push((v, -1.0));
            lp.add_constraint(format!("mean_hi_{j}_{jp}"), hi, ConstraintSense::Le, inst.delta);
            let mut lo = diff;
            lo.push((v, 1.0));
            lp.add_constraint(format!("mean_lo_{j}_{jp}"), lo, ConstraintSense::Ge, -inst.delta);
        }
    }
    penalized_objective(&mut lp, inst, &x, v, cfg.big_m_for(inst));
    (lp, x, v)
}

//! Solver-agnostic linear and mixed-binary models.

use std::fmt::Write as _;

use super::LpError;

/// Index of a variable inside a [`LinearModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

/// Index of a constraint inside a [`LinearModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub is_binary: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: ConstraintSense,
    pub rhs: f64,
}

impl Constraint {
    /// Activity bounds `(lo, hi)` implied by the sense and right-hand side.
    pub fn activity_bounds(&self) -> (f64, f64) {
        match self.sense {
            ConstraintSense::Le => (f64::NEG_INFINITY, self.rhs),
            ConstraintSense::Ge => (self.rhs, f64::INFINITY),
            ConstraintSense::Eq => (self.rhs, self.rhs),
        }
    }
}

/// A linear objective with an optional constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub sense: ObjectiveSense,
    pub coeffs: Vec<(VarId, f64)>,
    pub constant: f64,
}

/// Variables, bounds, linear rows, objective, and binary markers.
///
/// Models are built once and then treated as immutable by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Objective,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::new(ObjectiveSense::Minimize)
    }
}

impl LinearModel {
    pub fn new(sense: ObjectiveSense) -> Self {
        Self {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Objective {
                sense,
                coeffs: Vec::new(),
                constant: 0.0,
            },
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            is_binary: false,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_free_var(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_nonneg_var(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, f64::INFINITY)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            is_binary: true,
        });
        VarId(self.variables.len() - 1)
    }

    /// Adds a row; repeated variables are merged and zero coefficients dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
        sense: ConstraintSense,
        rhs: f64,
    ) -> ConstraintId {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs: merge_terms(coeffs),
            sense,
            rhs,
        });
        ConstraintId(self.constraints.len() - 1)
    }

    pub fn set_objective(
        &mut self,
        sense: ObjectiveSense,
        coeffs: impl IntoIterator<Item = (VarId, f64)>,
    ) {
        self.objective.sense = sense;
        self.objective.coeffs = merge_terms(coeffs);
    }

    pub fn set_objective_constant(&mut self, constant: f64) {
        self.objective.constant = constant;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.variables[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn has_binaries(&self) -> bool {
        self.variables.iter().any(|v| v.is_binary)
    }

    /// Evaluates the objective (including its constant) at `x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant
            + self
                .objective
                .coeffs
                .iter()
                .map(|&(v, c)| c * x[v.0])
                .sum::<f64>()
    }

    /// Row activities `a_i^T x` at `x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| c.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum())
            .collect()
    }

    /// Largest violation of any bound or row at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (v, &xv) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xv).max(xv - v.upper);
        }
        for (c, act) in self.constraints.iter().zip(self.activities(x)) {
            let (lo, hi) = c.activity_bounds();
            worst = worst.max(lo - act).max(act - hi);
        }
        worst
    }

    /// Checks that every reference resolves and every bound is coherent.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.variables.len();
        for (j, v) in self.variables.iter().enumerate() {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::InvalidBounds {
                    var: j,
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(LpError::InvalidBounds {
                    var: j,
                    lower: v.lower,
                    upper: v.upper,
                });
            }
            if v.is_binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(LpError::BinaryBounds { var: j });
            }
        }
        let check = |terms: &[(VarId, f64)], row: Option<usize>| -> Result<(), LpError> {
            for &(var, coeff) in terms {
                if var.0 >= n {
                    return Err(LpError::UnknownVariable { var: var.0, row });
                }
                if !coeff.is_finite() {
                    return Err(LpError::NonFiniteCoefficient { var: var.0, row });
                }
            }
            Ok(())
        };
        for (i, c) in self.constraints.iter().enumerate() {
            check(&c.coeffs, Some(i))?;
            if c.rhs.is_nan() || c.rhs.is_infinite() {
                return Err(LpError::NonFiniteRhs { row: i });
            }
        }
        check(&self.objective.coeffs, None)
    }

    /// Renders the model in CPLEX LP text format for cross-checking with
    /// external tools.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::new();
        let name = |v: VarId| lp_name(&self.variables[v.0].name, v.0);
        let write_terms = |out: &mut String, terms: &[(VarId, f64)]| {
            if terms.is_empty() {
                out.push_str(" 0");
            }
            for (k, &(v, c)) in terms.iter().enumerate() {
                let sign = if c < 0.0 { " -" } else if k == 0 { "" } else { " +" };
                let _ = write!(out, "{sign} {} {}", fmt_num(c.abs()), name(v));
            }
        };
        out.push_str(match self.objective.sense {
            ObjectiveSense::Minimize => "Minimize\n",
            ObjectiveSense::Maximize => "Maximize\n",
        });
        out.push_str(" obj:");
        write_terms(&mut out, &self.objective.coeffs);
        if self.objective.constant != 0.0 {
            let _ = write!(out, " + {}", fmt_num(self.objective.constant));
        }
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let label = if c.name.is_empty() { format!("c{i}") } else { lp_name(&c.name, i) };
            let _ = write!(out, " {label}:");
            write_terms(&mut out, &c.coeffs);
            let op = match c.sense {
                ConstraintSense::Le => "<=",
                ConstraintSense::Ge => ">=",
                ConstraintSense::Eq => "=",
            };
            let _ = writeln!(out, " {op} {}", fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for (j, v) in self.variables.iter().enumerate() {
            if v.is_binary {
                continue;
            }
            let nm = name(VarId(j));
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {nm} free");
                }
                (true, false) => {
                    if v.lower != 0.0 {
                        let _ = writeln!(out, " {nm} >= {}", fmt_num(v.lower));
                    }
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {nm} <= {}", fmt_num(v.upper));
                }
                (true, true) => {
                    let _ = writeln!(
                        out,
                        " {} <= {nm} <= {}",
                        fmt_num(v.lower),
                        fmt_num(v.upper)
                    );
                }
            }
        }
        let binaries: Vec<_> = (0..self.variables.len())
            .filter(|&j| self.variables[j].is_binary)
            .collect();
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for j in binaries {
                let _ = writeln!(out, " {}", name(VarId(j)));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn lp_name(name: &str, idx: usize) -> String {
    if name.is_empty() {
        format!("x{idx}")
    } else {
        name.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect()
    }
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn merge_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut out: Vec<(VarId, f64)> = terms.into_iter().collect();
    out.sort_by_key(|&(v, _)| v);
    let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(out.len());
    for (v, c) in out {
        match merged.last_mut() {
            Some((lv, lc)) if *lv == v => *lc += c,
            _ => merged.push((v, c)),
        }
    }
    merged.retain(|&(_, c)| c != 0.0);
    merged
}

//! Domain data: instances, support sets, assignments, scaling pairs, the
//! pairwise constraint map, and the synthetic instance generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, ConstraintSense, LinearModel, ObjectiveSense, SolveStatus, SolverOptions};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Support of the service-time vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SupportSet {
    /// `{xi : G xi <= h}`.
    Polytope { g: Matrix, h: Vec<f64> },
    /// `{xi : l <= xi <= u}`.
    Box { l: Vec<f64>, u: Vec<f64> },
}

impl SupportSet {
    pub fn dim(&self) -> usize {
        match self {
            Self::Polytope { g, .. } => g.cols(),
            Self::Box { l, .. } => l.len(),
        }
    }

    pub fn is_box(&self) -> bool {
        matches!(self, Self::Box { .. })
    }

    /// Polytope form; a box becomes `G = [I; -I]`, `h = (u; -l)`.
    pub fn to_polytope(&self) -> (Matrix, Vec<f64>) {
        match self {
            Self::Polytope { g, h } => (g.clone(), h.clone()),
            Self::Box { l, u } => {
                let n = l.len();
                let mut g = Matrix::zeros(2 * n, n);
                for i in 0..n {
                    g.set(i, i, 1.0);
                    g.set(n + i, i, -1.0);
                }
                let h = u.iter().copied().chain(l.iter().map(|v| -v)).collect();
                (g, h)
            }
        }
    }

    pub fn contains(&self, xi: &[f64]) -> bool {
        match self {
            Self::Box { l, u } => xi
                .iter()
                .zip(l.iter().zip(u))
                .all(|(x, (lo, hi))| lo <= x && x <= hi),
            Self::Polytope { g, h } => (0..g.rows()).all(|r| dot(g.row(r), xi) <= h[r]),
        }
    }
}

/// A problem instance. `fixed` and `forbidden` hold `(task, worker)` pairs
/// that must or must not be assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub n_tasks: usize,
    pub n_workers: usize,
    pub rewards: Matrix,
    pub mu: Vec<f64>,
    pub support: SupportSet,
    pub delta: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub fixed: Vec<(usize, usize)>,
    #[serde(default)]
    pub forbidden: Vec<(usize, usize)>,
}

impl Instance {
    /// Sum over tasks of the best reward, the unconstrained optimum.
    pub fn max_reward(&self) -> f64 {
        (0..self.n_tasks)
            .map(|i| self.rewards.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum()
    }

    pub fn default_big_m(&self) -> f64 {
        100.0 * self.max_reward().abs().max(1.0)
    }

    pub fn default_floor(&self) -> f64 {
        default_floor(self.n_workers)
    }
}

pub fn default_floor(n_workers: usize) -> f64 {
    1e-4_f64.min(1.0 / (2.0 * (n_workers * n_workers) as f64))
}

/// Every violated instance invariant, one message each.
pub fn validate_instance(inst: &Instance) -> Vec<String> {
    let mut out = Vec::new();
    let (n, m) = (inst.n_tasks, inst.n_workers);
    if n == 0 {
        out.push("n_tasks must be positive".to_string());
    }
    if m == 0 {
        out.push("n_workers must be positive".to_string());
    }
    if inst.rewards.rows() != n || inst.rewards.cols() != m {
        out.push(format!(
            "rewards is {}x{}, expected {n}x{m}",
            inst.rewards.rows(),
            inst.rewards.cols()
        ));
    } else if inst.rewards.as_slice().iter().any(|v| !v.is_finite()) {
        out.push("rewards must be finite".to_string());
    }
    if !(inst.delta >= 0.0 && inst.delta.is_finite()) {
        out.push("delta must be a finite nonnegative number".to_string());
    }
    if !(inst.epsilon > 0.0 && inst.epsilon < 1.0) {
        out.push("epsilon out of (0,1)".to_string());
    }
    let mu_ok = inst.mu.len() == n && inst.mu.iter().all(|v| v.is_finite());
    if inst.mu.len() != n {
        out.push(format!("mu has length {}, expected {n}", inst.mu.len()));
    } else if !mu_ok {
        out.push("mu must be finite".to_string());
    }
    match &inst.support {
        SupportSet::Box { l, u } => {
            if l.len() != n || u.len() != n {
                out.push(format!("box bounds must have length {n}"));
            } else if l.iter().zip(u).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                out.push("box requires finite l < u componentwise".to_string());
            } else if mu_ok && (0..n).any(|i| !(l[i] < inst.mu[i] && inst.mu[i] < u[i])) {
                out.push("mu not interior".to_string());
            }
        }
        SupportSet::Polytope { g, h } => {
            if g.cols() != n || g.rows() != h.len() {
                out.push(format!(
                    "polytope is {}x{} with {} right-hand sides, expected {n} columns",
                    g.rows(),
                    g.cols(),
                    h.len()
                ));
            } else if g.as_slice().iter().chain(h).any(|v| !v.is_finite()) {
                out.push("polytope data must be finite".to_string());
            } else {
                if mu_ok && (0..g.rows()).any(|r| dot(g.row(r), &inst.mu) >= h[r]) {
                    out.push("mu not interior".to_string());
                }
                if let Some(msg) = polytope_bounded(g, h) {
                    out.push(msg);
                }
            }
        }
    }
    for (name, list) in [("fixed", &inst.fixed), ("forbidden", &inst.forbidden)] {
        if list.iter().any(|&(i, j)| i >= n || j >= m) {
            out.push(format!("{name} assignment references an unknown task or worker"));
        }
    }
    let mut fixed_to = vec![None; n];
    for &(i, j) in &inst.fixed {
        if i < n {
            match fixed_to[i] {
                Some(prev) if prev != j => {
                    out.push(format!("task {i} is fixed to two workers"));
                }
                _ => fixed_to[i] = Some(j),
            }
        }
    }
    for i in 0..n {
        let blocked = inst.forbidden.iter().filter(|&&(t, _)| t == i).map(|&(_, j)| j);
        let mut allowed = vec![true; m];
        for j in blocked {
            if j < m {
                allowed[j] = false;
            }
        }
        if m > 0 && !allowed.iter().any(|&a| a) {
            out.push(format!("task {i} has every worker forbidden"));
        }
        if let Some(j) = fixed_to[i] {
            if j < m && !allowed[j] {
                out.push(format!("task {i} is fixed to a forbidden worker"));
            }
        }
    }
    out
}

impl Instance {
    pub fn validated(self) -> Result<Self> {
        let problems = validate_instance(&self);
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidInstance(problems))
        }
    }
}

/// Maximizes and minimizes each coordinate over `G xi <= h`.
fn polytope_bounded(g: &Matrix, h: &[f64]) -> Option<String> {
    let n = g.cols();
    let opts = SolverOptions::default();
    for i in 0..n {
        for sense in [ObjectiveSense::Maximize, ObjectiveSense::Minimize] {
            let mut lp = LinearModel::new(sense);
            let xs: Vec<_> = (0..n).map(|k| lp.add_free_var(format!("xi{k}"))).collect();
            for r in 0..g.rows() {
                lp.add_constraint(
                    "",
                    xs.iter().zip(g.row(r)).map(|(&v, &c)| (v, c)),
                    ConstraintSense::Le,
                    h[r],
                );
            }
            lp.set_objective(sense, [(xs[i], 1.0)]);
            match solve_lp(&lp, &opts).map(|r| r.status) {
                Ok(SolveStatus::Optimal) => {}
                Ok(SolveStatus::Unbounded) => return Some("support polytope is unbounded".into()),
                Ok(SolveStatus::Infeasible) => return Some("support polytope is empty".into()),
                Ok(s) => return Some(format!("support boundedness check failed: {s:?}")),
                Err(e) => return Some(format!("support boundedness check failed: {e}")),
            }
        }
    }
    None
}

/// Each task's worker. The 0/1 matrix view has exactly one 1 per row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    n_workers: usize,
    worker_of: Vec<usize>,
}

impl Assignment {
    pub fn new(n_workers: usize, worker_of: Vec<usize>) -> Result<Self> {
        if let Some(&j) = worker_of.iter().find(|&&j| j >= n_workers) {
            return Err(Error::Dimension(format!(
                "worker {j} out of range for {n_workers} workers"
            )));
        }
        Ok(Self {
            n_workers,
            worker_of,
        })
    }

    /// Reads a 0/1 matrix, rounding entries within `tol` of 0 or 1.
    pub fn from_matrix(x: &Matrix, tol: f64) -> Result<Self> {
        let mut worker_of = Vec::with_capacity(x.rows());
        for i in 0..x.rows() {
            let mut chosen = None;
            for j in 0..x.cols() {
                let v = x.get(i, j);
                if (v - 1.0).abs() <= tol {
                    if chosen.is_some() {
                        return Err(Error::InvalidInput(format!("task {i} assigned twice")));
                    }
                    chosen = Some(j);
                } else if v.abs() > tol {
                    return Err(Error::InvalidInput(format!("x[{i}][{j}] = {v} is not binary")));
                }
            }
            match chosen {
                Some(j) => worker_of.push(j),
                None => return Err(Error::InvalidInput(format!("task {i} is unassigned"))),
            }
        }
        Ok(Self {
            n_workers: x.cols(),
            worker_of,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.worker_of.len()
    }

    pub fn n_workers(&self) -> usize {
        self.n_workers
    }

    pub fn worker_of(&self) -> &[usize] {
        &self.worker_of
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.worker_of[i] == j {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut x = Matrix::zeros(self.n_tasks(), self.n_workers);
        for (i, &j) in self.worker_of.iter().enumerate() {
            x.set(i, j, 1.0);
        }
        x
    }

    pub fn reward(&self, rewards: &Matrix) -> f64 {
        self.worker_of
            .iter()
            .enumerate()
            .map(|(i, &j)| rewards.get(i, j))
            .sum()
    }

    /// Total time of each worker for service times `xi`.
    pub fn worker_loads(&self, xi: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.n_workers];
        for (i, &j) in self.worker_of.iter().enumerate() {
            t[j] += xi[i];
        }
        t
    }

    /// `max_j T_j - min_j T_j`.
    pub fn spread(&self, xi: &[f64]) -> f64 {
        spread_of(&self.worker_loads(xi))
    }

    pub(crate) fn check_dims(&self, inst: &Instance) -> Result<()> {
        if self.n_tasks() != inst.n_tasks || self.n_workers != inst.n_workers {
            return Err(Error::Dimension(format!(
                "assignment is {}x{}, instance is {}x{}",
                self.n_tasks(),
                self.n_workers,
                inst.n_tasks,
                inst.n_workers
            )));
        }
        Ok(())
    }
}

pub(crate) fn spread_of(loads: &[f64]) -> f64 {
    let hi = loads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = loads.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Scaling matrices `(alpha, beta)`, each `J x J`, positive, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPair {
    pub alpha: Matrix,
    pub beta: Matrix,
    pub floor: f64,
}

impl ScalingPair {
    /// All entries `1 / J^2`.
    pub fn uniform(n_workers: usize, floor: f64) -> Self {
        let v = 1.0 / (n_workers * n_workers) as f64;
        Self {
            alpha: Matrix::filled(n_workers, n_workers, v),
            beta: Matrix::filled(n_workers, n_workers, v),
            floor,
        }
    }

    pub fn n_workers(&self) -> usize {
        self.alpha.rows()
    }

    /// Multiplies both matrices by `c` (leaving the normalized set).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            alpha: self.alpha.scale(c),
            beta: self.beta.scale(c),
            floor: self.floor * c,
        }
    }

    /// Violations of the floor, normalization, and shape invariants.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let j = self.alpha.rows();
        for (name, m) in [("alpha", &self.alpha), ("beta", &self.beta)] {
            if m.rows() != j || m.cols() != j {
                out.push(format!("{name} must be {j}x{j}"));
                continue;
            }
            if m.as_slice().iter().any(|&v| !(v >= self.floor)) {
                out.push(format!("{name} has an entry below the floor"));
            }
            if (m.sum() - 1.0).abs() > 1e-9 {
                out.push(format!("{name} entries sum to {}, expected 1", m.sum()));
            }
        }
        if !(self.floor > 0.0) {
            out.push("floor must be positive".into());
        }
        if j > 0 && self.floor > 1.0 / (j * j) as f64 {
            out.push("floor exceeds 1 / n_workers^2".into());
        }
        out
    }
}

/// The `K = 2 J^2` affine rows `xi^T a_k + b_k <= 0` whose joint satisfaction
/// means every pairwise load difference is within `delta`.
///
/// Row `k` (0-based) with `k < J^2` is the `alpha` block for the pair
/// `(k / J, k % J)`; row `J^2 + k` is the `beta` block for the same pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub n_workers: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ConstraintSystem {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// `(is_beta_block, j, j')` for a 0-based row index.
    pub fn pair_of(&self, k: usize) -> (bool, usize, usize) {
        let jj = self.n_workers * self.n_workers;
        let r = k % jj;
        (k >= jj, r / self.n_workers, r % self.n_workers)
    }

    /// `max_k xi^T a_k + b_k`.
    pub fn max_row(&self, xi: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| dot(a, xi) + b)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn build_constraint_system(
    x: &Assignment,
    s: &ScalingPair,
    delta: f64,
) -> Result<ConstraintSystem> {
    build_constraint_rows(&x.to_matrix(), s, delta)
}

/// As [`build_constraint_system`] for any real allocation matrix.
pub fn build_constraint_rows(x: &Matrix, s: &ScalingPair, delta: f64) -> Result<ConstraintSystem> {
    let (n, jn) = (x.rows(), x.cols());
    if s.alpha.rows() != jn || s.alpha.cols() != jn || s.beta.rows() != jn || s.beta.cols() != jn {
        return Err(Error::Dimension(format!(
            "scaling matrices must be {jn}x{jn} for {jn} workers"
        )));
    }
    let k = 2 * jn * jn;
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for (m, sign) in [(&s.alpha, 1.0), (&s.beta, -1.0)] {
        for j in 0..jn {
            for jp in 0..jn {
                let w = m.get(j, jp);
                a.push((0..n).map(|i| sign * w * (x.get(i, j) - x.get(i, jp))).collect());
                b.push(-w * delta);
            }
        }
    }
    Ok(ConstraintSystem { n_workers: jn, a, b })
}

/// Settings for [`generate_instance`]; ranges are `(low, high)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_tasks: usize,
    pub n_workers: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub mu_range: (f64, f64),
    pub halfwidth_range: (f64, f64),
    pub reward_range: (f64, f64),
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            n_tasks: 20,
            n_workers: 5,
            delta: 5.0,
            epsilon: 0.05,
            mu_range: (0.0, 100.0),
            halfwidth_range: (0.0, 3.0),
            reward_range: (0.0, 100.0),
        }
    }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a box instance symmetric about `mu`: `mu_i ~ U(mu_range)`,
/// half-width `min(mu_i, r'_i)` with `r'_i ~ U(halfwidth_range)`, and
/// rewards `~ U(reward_range)`. Zero-width coordinates are redrawn.
pub fn generate_instance(seed: u64, p: &GeneratorParams) -> Result<Instance> {
    if p.n_tasks == 0 || p.n_workers == 0 {
        return Err(Error::InvalidInput("n_tasks and n_workers must be positive".into()));
    }
    for (name, (lo, hi)) in [
        ("mu_range", p.mu_range),
        ("halfwidth_range", p.halfwidth_range),
        ("reward_range", p.reward_range),
    ] {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("{name} must satisfy low < high")));
        }
    }
    if !(p.mu_range.0 >= 0.0 && p.halfwidth_range.0 >= 0.0 && p.halfwidth_range.1 > 0.0) {
        return Err(Error::InvalidInput("mu and half-width ranges must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu = Vec::with_capacity(p.n_tasks);
    let mut half = Vec::with_capacity(p.n_tasks);
    for _ in 0..p.n_tasks {
        loop {
            let m = uniform(&mut rng, p.mu_range);
            let r = uniform(&mut rng, p.halfwidth_range).min(m);
            if r > 0.0 {
                mu.push(m);
                half.push(r);
                break;
            }
        }
    }
    let mut rewards = Matrix::zeros(p.n_tasks, p.n_workers);
    for i in 0..p.n_tasks {
        for j in 0..p.n_workers {
            rewards.set(i, j, uniform(&mut rng, p.reward_range));
        }
    }
    let l = mu.iter().zip(&half).map(|(m, r)| m - r).collect();
    let u = mu.iter().zip(&half).map(|(m, r)| m + r).collect();
    Instance {
        n_tasks: p.n_tasks,
        n_workers: p.n_workers,
        rewards,
        mu,
        support: SupportSet::Box { l, u },
        delta: p.delta,
        epsilon: p.epsilon,
        fixed: Vec::new(),
        forbidden: Vec::new(),
    }
    .validated()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Bounded-variable revised simplex (primal and dual) over a product-form
//! basis inverse.
//!
//! Every row `i` of `A x (sense) b` gets a logical variable `s_i` with column
//! `e_i`, so the working system is `A x + s = 0` with all constraint data
//! moved into variable bounds: `s_i in [-hi_i, -lo_i]`.

use super::factor::{factorize, Factor};
use super::model::{LinearModel, ObjectiveSense};
use super::sparse::{CscMatrix, CsrMatrix};
use super::SolverOptions;

const PIV_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 80;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Column-oriented standard form of a [`LinearModel`] (minimization).
#[derive(Debug, Clone)]
pub(crate) struct StandardForm {
    pub n: usize,
    pub m: usize,
    pub a: CscMatrix,
    pub rows: CsrMatrix,
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `+1` for minimization, `-1` for maximization.
    pub obj_sign: f64,
}

impl StandardForm {
    pub fn from_model(model: &LinearModel) -> Self {
        let n = model.num_vars();
        let m = model.num_constraints();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in model.constraints().iter().enumerate() {
            for &(v, a) in &c.coeffs {
                cols[v.0].push((i, a));
            }
        }
        let a = CscMatrix::from_columns(m, &cols);
        let rows = a.to_csr();
        let obj_sign = match model.objective().sense {
            ObjectiveSense::Minimize => 1.0,
            ObjectiveSense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n + m];
        for &(v, c) in &model.objective().coeffs {
            cost[v.0] += obj_sign * c;
        }
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for v in model.variables() {
            lower.push(v.lower);
            upper.push(v.upper);
        }
        for c in model.constraints() {
            let (lo, hi) = c.activity_bounds();
            lower.push(-hi);
            upper.push(-lo);
        }
        Self {
            n,
            m,
            a,
            rows,
            cost,
            lower,
            upper,
            obj_sign,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Tolerances {
    pub primal: f64,
    pub dual: f64,
    pub max_pivots: usize,
    pub bland_after: usize,
}

impl From<&SolverOptions> for Tolerances {
    fn from(o: &SolverOptions) -> Self {
        Self {
            primal: o.feas_tol,
            dual: o.feas_tol,
            max_pivots: o.max_pivots,
            bland_after: o.bland_after,
        }
    }
}

pub(crate) struct Simplex<'a> {
    sf: &'a StandardForm,
    tol: Tolerances,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub x: Vec<f64>,
    pub state: Vec<VarState>,
    pub basis: Vec<usize>,
    factor: Factor,
    pub pivots: usize,
    degenerate: usize,
    bland: bool,
    cb: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    w: Vec<f64>,
    rho: Vec<f64>,
    alpha: Vec<f64>,
    alpha_mark: Vec<bool>,
    alpha_nz: Vec<usize>,
    candidates: Vec<(usize, f64, f64)>,
}

/// Basis, factor, and point of a [`Simplex`], for cheap sibling restarts.
#[derive(Clone)]
pub(crate) struct Snapshot {
    state: Vec<VarState>,
    basis: Vec<usize>,
    factor: Factor,
    x: Vec<f64>,
}

enum PrimalStep {
    Flip,
    Pivot { row: usize, to_upper: bool },
}

impl<'a> Simplex<'a> {
    /// Starts from the all-logical basis with structurals at a finite bound.
    pub fn new(sf: &'a StandardForm, tol: Tolerances) -> Self {
        let n = sf.n;
        let m = sf.m;
        let mut state = Vec::with_capacity(n + m);
        for j in 0..n {
            state.push(resting_state(sf.lower[j], sf.upper[j]));
        }
        state.extend(std::iter::repeat_n(VarState::Basic, m));
        let basis: Vec<usize> = (n..n + m).collect();
        let fz = factorize(&sf.a, &basis);
        let mut s = Self {
            sf,
            tol,
            lower: sf.lower.clone(),
            upper: sf.upper.clone(),
            x: vec![0.0; n + m],
            state,
            basis: fz.basis,
            factor: fz.factor,
            pivots: 0,
            degenerate: 0,
            bland: false,
            cb: vec![0.0; m],
            y: vec![0.0; m],
            d: vec![0.0; n + m],
            w: vec![0.0; m],
            rho: vec![0.0; m],
            alpha: vec![0.0; n + m],
            alpha_mark: vec![false; n + m],
            alpha_nz: Vec::new(),
            candidates: Vec::new(),
        };
        s.place_nonbasics();
        s.compute_xb();
        s
    }

    pub fn n(&self) -> usize {
        self.sf.n
    }

    /// Minimization objective at the current point.
    pub fn objective(&self) -> f64 {
        self.sf
            .cost
            .iter()
            .zip(&self.x)
            .map(|(c, x)| c * x)
            .sum()
    }

    /// Changes the working bounds of `j`, moving it if it is nonbasic.
    /// Call [`Simplex::compute_xb`] after a batch of changes.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.state[j] != VarState::Basic {
            let st = match self.state[j] {
                VarState::Lower if lower.is_finite() => VarState::Lower,
                VarState::Upper if upper.is_finite() => VarState::Upper,
                _ => resting_state(lower, upper),
            };
            self.state[j] = st;
            self.x[j] = self.nonbasic_value(j);
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.state.clone(),
            basis: self.basis.clone(),
            factor: self.factor.clone(),
            x: self.x.clone(),
        }
    }

    /// Reinstates a snapshot taken under the same bounds.
    pub fn load(&mut self, snap: &Snapshot) {
        self.state.clone_from(&snap.state);
        self.basis.clone_from(&snap.basis);
        self.factor.clone_from(&snap.factor);
        self.x.clone_from(&snap.x);
    }

    /// Installs a previously saved basis status and refactorizes.
    pub fn restore(&mut self, state: &[VarState]) {
        self.state.copy_from_slice(state);
        let basic: Vec<usize> = (0..self.state.len())
            .filter(|&j| self.state[j] == VarState::Basic)
            .collect();
        self.install_basis(&basic);
    }

    fn install_basis(&mut self, basic: &[usize]) {
        let fz = factorize(&self.sf.a, basic);
        for &v in &fz.rejected {
            self.state[v] = resting_state(self.lower[v], self.upper[v]);
        }
        for &v in &fz.basis {
            self.state[v] = VarState::Basic;
        }
        self.basis = fz.basis;
        self.factor = fz.factor;
        self.place_nonbasics();
        self.compute_xb();
    }

    fn refactor(&mut self) {
        let basic = self.basis.clone();
        self.install_basis(&basic);
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::Lower => self.lower[j],
            VarState::Upper => self.upper[j],
            VarState::Zero | VarState::Basic => 0.0,
        }
    }

    fn place_nonbasics(&mut self) {
        for j in 0..self.state.len() {
            if self.state[j] != VarState::Basic {
                let st = match self.state[j] {
                    VarState::Lower if self.lower[j].is_finite() => VarState::Lower,
                    VarState::Upper if self.upper[j].is_finite() => VarState::Upper,
                    _ => resting_state(self.lower[j], self.upper[j]),
                };
                self.state[j] = st;
                self.x[j] = self.nonbasic_value(j);
            }
        }
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = -B^{-1} N x_N`.
    pub fn compute_xb(&mut self) {
        let n = self.sf.n;
        self.w.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.state.len() {
            if self.state[j] == VarState::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj == 0.0 {
                continue;
            }
            if j < n {
                for (r, a) in self.sf.a.col_iter(j) {
                    self.w[r] -= a * xj;
                }
            } else {
                self.w[j - n] -= xj;
            }
        }
        self.factor.ftran(&mut self.w);
        for r in 0..self.sf.m {
            self.x[self.basis[r]] = self.w[r];
        }
    }

    fn load_column(&mut self, j: usize) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        if j < self.sf.n {
            self.sf.a.scatter(j, &mut self.w);
        } else {
            self.w[j - self.sf.n] = 1.0;
        }
        self.factor.ftran(&mut self.w);
    }

    /// Duals `y` and reduced costs `d` for the cost vector held in `cb`.
    fn compute_duals(&mut self, phase_one: bool) {
        let n = self.sf.n;
        self.y.copy_from_slice(&self.cb);
        self.factor.btran(&mut self.y);
        for j in 0..self.state.len() {
            if self.state[j] == VarState::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let c = if phase_one { 0.0 } else { self.sf.cost[j] };
            self.d[j] = if j < n {
                c - self.sf.a.col_dot(j, &self.y)
            } else {
                c - self.y[j - n]
            };
        }
    }

    fn phase_two_costs(&mut self) {
        for r in 0..self.sf.m {
            self.cb[r] = self.sf.cost[self.basis[r]];
        }
    }

    /// Sum of basic bound violations; fills `cb` with phase-one costs.
    fn phase_one_costs(&mut self) -> f64 {
        let mut total = 0.0;
        for r in 0..self.sf.m {
            let j = self.basis[r];
            let xj = self.x[j];
            self.cb[r] = if xj < self.lower[j] - self.tol.primal {
                total += self.lower[j] - xj;
                -1.0
            } else if xj > self.upper[j] + self.tol.primal {
                total += xj - self.upper[j];
                1.0
            } else {
                0.0
            };
        }
        total
    }

    /// Largest dual-sign violation for the phase-two costs.
    pub fn dual_infeasibility(&mut self) -> f64 {
        self.phase_two_costs();
        self.compute_duals(false);
        self.max_dual_violation()
    }

    fn max_dual_violation(&self) -> f64 {
        let mut worst = 0.0_f64;
        for j in 0..self.state.len() {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            worst = worst.max(match self.state[j] {
                VarState::Basic => 0.0,
                VarState::Lower => -dj,
                VarState::Upper => dj,
                VarState::Zero => dj.abs(),
            });
        }
        worst
    }

    /// Solves from the current basis, choosing dual simplex when the basis is
    /// dual feasible and primal simplex otherwise.
    pub fn reoptimize(&mut self) -> LpOutcome {
        if self.dual_infeasibility() <= self.tol.dual {
            match self.dual() {
                Some(outcome) => return outcome,
                None => {}
            }
        }
        self.primal()
    }

    fn note_step(&mut self, step: f64) {
        self.pivots += 1;
        if step.abs() < DEGENERATE_STEP {
            self.degenerate += 1;
            if self.degenerate > self.tol.bland_after {
                self.bland = true;
            }
        }
    }

    fn maybe_refactor(&mut self) -> bool {
        if self.factor.updates() >= REFACTOR_EVERY
            || self.factor.update_nnz() > 4 * self.factor.factor_nnz() + 20 * self.sf.m
        {
            self.refactor();
            return true;
        }
        false
    }

    /// Composite phase-one / phase-two primal simplex.
    pub fn primal(&mut self) -> LpOutcome {
        let mut retried_unbounded = false;
        loop {
            if self.pivots >= self.tol.max_pivots {
                return LpOutcome::IterationLimit;
            }
            self.maybe_refactor();
            let infeasibility = self.phase_one_costs();
            let phase_one = infeasibility > 0.0;
            if !phase_one {
                self.phase_two_costs();
            }
            self.compute_duals(phase_one);

            let Some((q, dir)) = self.price_primal() else {
                if phase_one {
                    if self.factor.updates() > 0 {
                        self.refactor();
                        if self.phase_one_costs() == 0.0 {
                            continue;
                        }
                        self.compute_duals(true);
                        if self.price_primal().is_some() {
                            continue;
                        }
                    }
                    return LpOutcome::Infeasible;
                }
                return LpOutcome::Optimal;
            };
            self.load_column(q);
            let (theta, step) = self.primal_ratio(q, dir, phase_one);
            let Some(step) = step else {
                if !retried_unbounded && self.factor.updates() > 0 {
                    retried_unbounded = true;
                    self.refactor();
                    continue;
                }
                return if phase_one {
                    LpOutcome::Infeasible
                } else {
                    LpOutcome::Unbounded
                };
            };
            retried_unbounded = false;
            self.apply_primal_step(q, dir, theta, step);
        }
    }

    fn price_primal(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = self.tol.dual;
        for j in 0..self.state.len() {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = match self.state[j] {
                VarState::Basic => continue,
                VarState::Lower if dj < -self.tol.dual => 1.0,
                VarState::Upper if dj > self.tol.dual => -1.0,
                VarState::Zero if dj.abs() > self.tol.dual => -dj.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Harris two-pass ratio test. Returns the step length and what blocks it;
    /// `None` means the direction is unbounded.
    fn primal_ratio(&self, q: usize, dir: f64, phase_one: bool) -> (f64, Option<PrimalStep>) {
        let tol = self.tol.primal;
        let range = self.upper[q] - self.lower[q];
        // (exact limit bound, relaxed limit bound) for a basic moving at `rate`.
        let limit = |j: usize, rate: f64| -> Option<(f64, f64, bool)> {
            let xj = self.x[j];
            let (l, u) = (self.lower[j], self.upper[j]);
            if rate > 0.0 {
                if phase_one && xj < l - tol {
                    Some((l, l, false))
                } else if xj > u + tol || u == f64::INFINITY {
                    None
                } else {
                    Some((u, u + tol, true))
                }
            } else if phase_one && xj > u + tol {
                Some((u, u, true))
            } else if xj < l - tol || l == f64::NEG_INFINITY {
                None
            } else {
                Some((l, l - tol, false))
            }
        };

        if self.bland {
            let mut best: Option<(f64, usize, usize, bool)> = None;
            for r in 0..self.sf.m {
                let wr = self.w[r];
                if wr.abs() < PIV_TOL {
                    continue;
                }
                let rate = -dir * wr;
                let j = self.basis[r];
                if let Some((b, _, up)) = limit(j, rate) {
                    let ratio = ((b - self.x[j]) / rate).max(0.0);
                    let better = match best {
                        None => true,
                        Some((t, _, bj, _)) => ratio < t - 1e-12 || (ratio <= t + 1e-12 && j < bj),
                    };
                    if better {
                        best = Some((ratio, r, j, up));
                    }
                }
            }
            return match best {
                Some((t, r, _, up)) if t < range => (t, Some(PrimalStep::Pivot { row: r, to_upper: up })),
                _ if range.is_finite() => (range, Some(PrimalStep::Flip)),
                _ => (f64::INFINITY, None),
            };
        }

        let mut theta_max = f64::INFINITY;
        for r in 0..self.sf.m {
            let wr = self.w[r];
            if wr.abs() < PIV_TOL {
                continue;
            }
            let rate = -dir * wr;
            let j = self.basis[r];
            if let Some((_, relaxed, _)) = limit(j, rate) {
                let t = ((relaxed - self.x[j]) / rate).max(0.0);
                if t < theta_max {
                    theta_max = t;
                }
            }
        }
        if range.is_finite() && range <= theta_max {
            return (range, Some(PrimalStep::Flip));
        }
        if theta_max == f64::INFINITY {
            return (f64::INFINITY, None);
        }
        let mut chosen: Option<(usize, f64, bool)> = None;
        let mut best_piv = 0.0;
        for r in 0..self.sf.m {
            let wr = self.w[r];
            if wr.abs() < PIV_TOL {
                continue;
            }
            let rate = -dir * wr;
            let j = self.basis[r];
            if let Some((b, _, up)) = limit(j, rate) {
                let t = ((b - self.x[j]) / rate).max(0.0);
                if t <= theta_max && wr.abs() > best_piv {
                    best_piv = wr.abs();
                    chosen = Some((r, t, up));
                }
            }
        }
        match chosen {
            Some((r, t, up)) => (t, Some(PrimalStep::Pivot { row: r, to_upper: up })),
            None => (f64::INFINITY, None),
        }
    }

    fn apply_primal_step(&mut self, q: usize, dir: f64, theta: f64, step: PrimalStep) {
        let delta = dir * theta;
        if delta != 0.0 {
            self.x[q] += delta;
            for r in 0..self.sf.m {
                let wr = self.w[r];
                if wr != 0.0 {
                    self.x[self.basis[r]] -= delta * wr;
                }
            }
        }
        match step {
            PrimalStep::Flip => {
                let to_upper = dir > 0.0;
                self.state[q] = if to_upper { VarState::Upper } else { VarState::Lower };
                self.x[q] = if to_upper { self.upper[q] } else { self.lower[q] };
            }
            PrimalStep::Pivot { row, to_upper } => {
                let leaving = self.basis[row];
                self.state[leaving] = if to_upper { VarState::Upper } else { VarState::Lower };
                self.x[leaving] = if to_upper {
                    self.upper[leaving]
                } else {
                    self.lower[leaving]
                };
                self.basis[row] = q;
                self.state[q] = VarState::Basic;
                self.factor.push(row, &self.w);
            }
        }
        self.note_step(theta);
    }

    /// Dual simplex from a dual-feasible basis. Returns `None` if dual
    /// feasibility is lost and primal simplex must take over.
    pub fn dual(&mut self) -> Option<LpOutcome> {
        let n = self.sf.n;
        let mut retried = false;
        // Reduced costs are updated along each pivot and recomputed from
        // scratch after every refactorization.
        let mut stale = true;
        loop {
            if self.pivots >= self.tol.max_pivots {
                return Some(LpOutcome::IterationLimit);
            }
            stale |= self.maybe_refactor();
            if stale {
                self.phase_two_costs();
                self.compute_duals(false);
                if self.max_dual_violation() > 10.0 * self.tol.dual {
                    return None;
                }
                stale = false;
            }

            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = self.tol.primal;
            for r in 0..self.sf.m {
                let j = self.basis[r];
                let xj = self.x[j];
                let (viol, target) = if xj < self.lower[j] - self.tol.primal {
                    (self.lower[j] - xj, self.lower[j])
                } else if xj > self.upper[j] + self.tol.primal {
                    (xj - self.upper[j], self.upper[j])
                } else {
                    continue;
                };
                if self.bland {
                    let better = match leave {
                        None => true,
                        Some((r0, _)) => j < self.basis[r0],
                    };
                    if better {
                        leave = Some((r, target));
                    }
                } else if viol > worst {
                    worst = viol;
                    leave = Some((r, target));
                }
            }
            let Some((r, target)) = leave else {
                return Some(LpOutcome::Optimal);
            };
            let leaving = self.basis[r];
            let increase = target == self.lower[leaving] && self.x[leaving] < target;

            // Pivot row alpha_j = rho^T a_j, kept sparse.
            self.rho.iter_mut().for_each(|v| *v = 0.0);
            self.rho[r] = 1.0;
            self.factor.btran(&mut self.rho);
            for &j in &self.alpha_nz {
                self.alpha[j] = 0.0;
                self.alpha_mark[j] = false;
            }
            self.alpha_nz.clear();
            for i in 0..self.sf.m {
                let ri = self.rho[i];
                if ri == 0.0 {
                    continue;
                }
                for (c, a) in self.sf.rows.row_iter(i) {
                    self.alpha[c] += ri * a;
                    if !self.alpha_mark[c] {
                        self.alpha_mark[c] = true;
                        self.alpha_nz.push(c);
                    }
                }
                self.alpha[n + i] = ri;
                self.alpha_mark[n + i] = true;
                self.alpha_nz.push(n + i);
            }
            self.alpha_nz.sort_unstable();

            // Entering candidates (j, ratio, |alpha_j|). x_r moves by
            // -alpha_j * dx_j and must move toward `target`.
            self.candidates.clear();
            for &j in &self.alpha_nz {
                let a = self.alpha[j];
                if a.abs() < PIV_TOL || self.state[j] == VarState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let want_up = if increase { a < 0.0 } else { a > 0.0 };
                let dj = self.d[j];
                let slack = match self.state[j] {
                    VarState::Lower if want_up => dj.max(0.0),
                    VarState::Upper if !want_up => (-dj).max(0.0),
                    VarState::Zero => 0.0,
                    _ => continue,
                };
                self.candidates.push((j, slack / a.abs(), a.abs()));
            }

            let mut q: Option<usize> = None;
            if self.bland {
                let mut best = f64::INFINITY;
                for &(j, t, _) in &self.candidates {
                    if t < best - 1e-12 {
                        best = t;
                        q = Some(j);
                    }
                }
            } else {
                let bound = self
                    .candidates
                    .iter()
                    .map(|&(_, t, a)| t + self.tol.dual / a)
                    .fold(f64::INFINITY, f64::min);
                let mut best_piv = 0.0;
                for &(j, t, a) in &self.candidates {
                    if t <= bound && a > best_piv {
                        best_piv = a;
                        q = Some(j);
                    }
                }
            }
            let Some(q) = q else {
                if !retried && self.factor.updates() > 0 {
                    retried = true;
                    self.refactor();
                    stale = true;
                    continue;
                }
                return Some(LpOutcome::Infeasible);
            };
            retried = false;

            self.load_column(q);
            let wr = self.w[r];
            if wr.abs() < PIV_TOL {
                self.refactor();
                stale = true;
                continue;
            }
            let dq = self.d[q];
            let theta_d = dq / self.alpha[q];
            if theta_d != 0.0 {
                for &j in &self.alpha_nz {
                    self.d[j] -= theta_d * self.alpha[j];
                }
            }
            self.d[leaving] = -theta_d;
            self.d[q] = 0.0;
            let step = (self.x[leaving] - target) / wr;
            self.x[q] += step;
            for i in 0..self.sf.m {
                let wi = self.w[i];
                if wi != 0.0 {
                    self.x[self.basis[i]] -= step * wi;
                }
            }
            self.x[leaving] = target;
            self.state[leaving] = if target == self.lower[leaving] {
                VarState::Lower
            } else {
                VarState::Upper
            };
            self.basis[r] = q;
            self.state[q] = VarState::Basic;
            self.factor.push(r, &self.w);
            self.note_step(theta_d);
        }
    }

    /// Row duals `y` for the phase-two costs (minimization form).
    pub fn row_duals(&mut self) -> Vec<f64> {
        self.phase_two_costs();
        self.compute_duals(false);
        self.y.clone()
    }
}

fn resting_state(lower: f64, upper: f64) -> VarState {
    if lower.is_finite() {
        VarState::Lower
    } else if upper.is_finite() {
        VarState::Upper
    } else {
        VarState::Zero
    }
}

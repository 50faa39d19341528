//! Worst-case expectation and worst-case CVaR over the moment ambiguity set
//! (all distributions with mean `mu` supported on the support set), their
//! linear programming duals, and brute-force primal oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{
    solve_lp, ConstraintSense, LinearModel, ObjectiveSense, SolveStatus, SolverOptions, VarId,
};
use crate::model::{
    build_constraint_rows, dot, Assignment, ConstraintSystem, Instance, Matrix, ScalingPair,
    SupportSet,
};

/// Vertex enumeration is limited to `2^12` points.
pub const ORACLE_MAX_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub c: Vec<f64>,
    pub d: f64,
}

/// `l(xi) = max_k c_k^T xi + d_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineLoss {
    pub pieces: Vec<AffinePiece>,
}

impl PiecewiseAffineLoss {
    pub fn new(pieces: Vec<AffinePiece>) -> Result<Self> {
        let n = pieces.first().map(|p| p.c.len());
        match n {
            None => Err(Error::InvalidInput("a loss needs at least one piece".into())),
            Some(n) if pieces.iter().any(|p| p.c.len() != n) => {
                Err(Error::Dimension("loss pieces have different lengths".into()))
            }
            Some(_) => Ok(Self { pieces }),
        }
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].c.len()
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| dot(&p.c, xi) + p.d)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pieces of `tau + (1/eps) max(L - tau, 0)` for `L = max_k a_k^T xi + b_k`:
    /// piece 0 is the constant `tau`, piece `k` is
    /// `a_k / eps` with offset `b_k / eps + (1 - 1/eps) tau`.
    pub fn cvar_pieces(cs: &ConstraintSystem, eps: f64, tau: f64) -> Self {
        let n = cs.a.first().map_or(0, Vec::len);
        let mut pieces = Vec::with_capacity(cs.len() + 1);
        pieces.push(AffinePiece {
            c: vec![0.0; n],
            d: tau,
        });
        for (a, &b) in cs.a.iter().zip(&cs.b) {
            pieces.push(AffinePiece {
                c: a.iter().map(|v| v / eps).collect(),
                d: b / eps + (1.0 - 1.0 / eps) * tau,
            });
        }
        Self { pieces }
    }
}

/// Dual solution of the worst-case expectation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCertificate {
    pub gamma: f64,
    pub lambda: Vec<f64>,
    /// One multiplier vector per piece, over the polytope rows of the support.
    pub eta: Vec<Vec<f64>>,
    pub value: f64,
}

/// Dual solution of the worst-case CVaR problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvarCertificate {
    pub gamma: f64,
    pub tau: f64,
    pub lambda: Vec<f64>,
    /// `eta[0]` for the constant piece, `eta[k]` for row `k` of the
    /// constraint system; each over the polytope rows of the support
    /// (for a box, upper-bound rows then lower-bound rows).
    pub eta: Vec<Vec<f64>>,
    pub value: f64,
}

impl CvarCertificate {
    /// Largest violation of the dual constraints (sign, inequality, and
    /// equality residuals) for the given rows.
    pub fn max_residual(&self, cs: &ConstraintSystem, inst: &Instance) -> f64 {
        let (g, h) = inst.support.to_polytope();
        let eps = inst.epsilon;
        let n = inst.n_tasks;
        let gt = |eta: &[f64], i: usize| (0..g.rows()).map(|r| g.get(r, i) * eta[r]).sum::<f64>();
        let mut worst = 0.0_f64;
        for eta in &self.eta {
            for &e in eta {
                worst = worst.max(-e);
            }
        }
        let e0 = &self.eta[0];
        worst = worst.max(self.tau - (self.gamma - dot(&h, e0)));
        for i in 0..n {
            worst = worst.max((gt(e0, i) + self.lambda[i]).abs());
        }
        for k in 0..cs.len() {
            let ek = &self.eta[k + 1];
            let lhs = cs.b[k] - (1.0 - eps) * self.tau;
            worst = worst.max(lhs - eps * (self.gamma - dot(&h, ek)));
            for i in 0..n {
                worst = worst.max((eps * (gt(ek, i) + self.lambda[i]) - cs.a[k][i]).abs());
            }
        }
        worst.max((self.gamma + dot(&inst.mu, &self.lambda) - self.value).abs())
    }
}

/// An affine expression in model variables.
#[derive(Debug, Clone, Default)]
pub(crate) struct Affine {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }
}

/// Multipliers for the support constraints of one loss piece, giving
/// `h^T eta` and `(G^T eta)_i` as linear expressions.
pub(crate) enum SupportDual {
    Box { up: Vec<VarId>, lo: Vec<VarId> },
    Polytope(Vec<VarId>),
}

/// How the support enters a dual model.
pub(crate) enum SupportForm<'a> {
    Box { l: &'a [f64], u: &'a [f64] },
    Polytope { g: Matrix, h: Vec<f64> },
}

impl<'a> SupportForm<'a> {
    pub fn new(support: &'a SupportSet, force_generic: bool) -> Self {
        match support {
            SupportSet::Box { l, u } if !force_generic => Self::Box { l, u },
            other => {
                let (g, h) = other.to_polytope();
                Self::Polytope { g, h }
            }
        }
    }

    fn add_dual(&self, lp: &mut LinearModel, tag: &str) -> SupportDual {
        match self {
            Self::Box { l, .. } => {
                let up = (0..l.len()).map(|i| lp.add_nonneg_var(format!("{tag}_u{i}"))).collect();
                let lo = (0..l.len()).map(|i| lp.add_nonneg_var(format!("{tag}_l{i}"))).collect();
                SupportDual::Box { up, lo }
            }
            Self::Polytope { g, .. } => SupportDual::Polytope(
                (0..g.rows()).map(|r| lp.add_nonneg_var(format!("{tag}_{r}"))).collect(),
            ),
        }
    }

    /// `scale * h^T eta` as terms.
    fn h_terms(&self, eta: &SupportDual, scale: f64) -> Vec<(VarId, f64)> {
        match (self, eta) {
            (Self::Box { l, u }, SupportDual::Box { up, lo }) => up
                .iter()
                .zip(*u)
                .map(|(&v, &ui)| (v, scale * ui))
                .chain(lo.iter().zip(*l).map(|(&v, &li)| (v, -scale * li)))
                .collect(),
            (Self::Polytope { h, .. }, SupportDual::Polytope(eta)) => {
                eta.iter().zip(h).map(|(&v, &hr)| (v, scale * hr)).collect()
            }
            _ => unreachable!("support dual built from a different form"),
        }
    }

    /// `scale * (G^T eta)_i` as terms.
    fn gt_terms(&self, eta: &SupportDual, i: usize, scale: f64) -> Vec<(VarId, f64)> {
        match (self, eta) {
            (Self::Box { .. }, SupportDual::Box { up, lo }) => {
                vec![(up[i], scale), (lo[i], -scale)]
            }
            (Self::Polytope { g, .. }, SupportDual::Polytope(eta)) => (0..g.rows())
                .filter(|&r| g.get(r, i) != 0.0)
                .map(|r| (eta[r], scale * g.get(r, i)))
                .collect(),
            _ => unreachable!("support dual built from a different form"),
        }
    }

    /// Values of `eta` in polytope row order.
    fn eta_values(eta: &SupportDual, x: &[f64]) -> Vec<f64> {
        match eta {
            SupportDual::Box { up, lo } => up.iter().chain(lo).map(|v| x[v.0]).collect(),
            SupportDual::Polytope(eta) => eta.iter().map(|v| x[v.0]).collect(),
        }
    }
}

/// Variables of a worst-case CVaR block inside a larger model.
pub(crate) struct CvarBlock {
    pub gamma: VarId,
    pub tau: VarId,
    pub lambda: Vec<VarId>,
    pub eta: Vec<SupportDual>,
}

impl CvarBlock {
    /// `gamma + mu^T lambda`.
    pub fn value_terms(&self, mu: &[f64]) -> Vec<(VarId, f64)> {
        std::iter::once((self.gamma, 1.0))
            .chain(self.lambda.iter().zip(mu).map(|(&v, &m)| (v, m)))
            .collect()
    }

    pub fn certificate(&self, x: &[f64], mu: &[f64]) -> CvarCertificate {
        let gamma = x[self.gamma.0];
        let lambda: Vec<f64> = self.lambda.iter().map(|v| x[v.0]).collect();
        CvarCertificate {
            gamma,
            tau: x[self.tau.0],
            value: gamma + dot(mu, &lambda),
            lambda,
            eta: self.eta.iter().map(|e| SupportForm::eta_values(e, x)).collect(),
        }
    }
}

/// Adds the dual constraints certifying `gamma + mu^T lambda` as an upper
/// bound on the worst-case CVaR at level `eps` of `max_k a_k^T xi + b_k`,
/// where each `a_k` (per coordinate) and `b_k` is affine in other variables.
pub(crate) fn add_cvar_block(
    lp: &mut LinearModel,
    support: &SupportForm,
    eps: f64,
    rows: &[(Vec<Affine>, Affine)],
    n: usize,
) -> CvarBlock {
    let gamma = lp.add_free_var("gamma");
    let tau = lp.add_free_var("tau");
    let lambda: Vec<VarId> = (0..n).map(|i| lp.add_free_var(format!("lambda{i}"))).collect();
    let mut etas = Vec::with_capacity(rows.len() + 1);

    let eta0 = support.add_dual(lp, "eta0");
    let mut row: Vec<(VarId, f64)> = vec![(gamma, 1.0), (tau, -1.0)];
    row.extend(support.h_terms(&eta0, -1.0));
    lp.add_constraint("cvar0", row, ConstraintSense::Ge, 0.0);
    for i in 0..n {
        let mut row = support.gt_terms(&eta0, i, 1.0);
        row.push((lambda[i], 1.0));
        lp.add_constraint(format!("cvar0_{i}"), row, ConstraintSense::Eq, 0.0);
    }
    etas.push(eta0);

    for (k, (a, b)) in rows.iter().enumerate() {
        let eta = support.add_dual(lp, &format!("eta{}", k + 1));
        // eps*gamma - eps*h^T eta + (1 - eps) tau - b_k >= 0
        let mut row: Vec<(VarId, f64)> = vec![(gamma, eps), (tau, 1.0 - eps)];
        row.extend(support.h_terms(&eta, -eps));
        row.extend(b.terms.iter().map(|&(v, c)| (v, -c)));
        lp.add_constraint(format!("cvar{}", k + 1), row, ConstraintSense::Ge, b.constant);
        // eps*(G^T eta)_i + eps*lambda_i - a_ki = 0
        for i in 0..n {
            let mut row = support.gt_terms(&eta, i, eps);
            row.push((lambda[i], eps));
            row.extend(a[i].terms.iter().map(|&(v, c)| (v, -c)));
            lp.add_constraint(
                format!("cvar{}_{i}", k + 1),
                row,
                ConstraintSense::Eq,
                a[i].constant,
            );
        }
        etas.push(eta);
    }
    CvarBlock {
        gamma,
        tau,
        lambda,
        eta: etas,
    }
}

fn check_mean(mu: &[f64], support: &SupportSet) -> Result<()> {
    if mu.len() != support.dim() {
        return Err(Error::Dimension(format!(
            "mean has length {}, support has dimension {}",
            mu.len(),
            support.dim()
        )));
    }
    Ok(())
}

fn optimal(model: &LinearModel, what: &str) -> Result<crate::lp::SolveResult> {
    let r = solve_lp(model, &SolverOptions::default())?;
    if r.status != SolveStatus::Optimal {
        return Err(Error::solver(what, r.status));
    }
    Ok(r)
}

/// `sup E[l(xi)]` over distributions with mean `mu` on `support`, computed
/// through its dual linear program.
pub fn worst_case_expectation(
    loss: &PiecewiseAffineLoss,
    mu: &[f64],
    support: &SupportSet,
) -> Result<(f64, ExpectationCertificate)> {
    check_mean(mu, support)?;
    if loss.dim() != mu.len() {
        return Err(Error::Dimension("loss and mean differ in length".into()));
    }
    let n = mu.len();
    let form = SupportForm::new(support, false);
    let mut lp = LinearModel::new(ObjectiveSense::Minimize);
    let gamma = lp.add_free_var("gamma");
    let lambda: Vec<VarId> = (0..n).map(|i| lp.add_free_var(format!("lambda{i}"))).collect();
    let mut etas = Vec::with_capacity(loss.pieces.len());
    for (k, p) in loss.pieces.iter().enumerate() {
        let eta = form.add_dual(&mut lp, &format!("eta{k}"));
        // h^T eta - gamma <= -d_k
        let mut row = form.h_terms(&eta, 1.0);
        row.push((gamma, -1.0));
        lp.add_constraint(format!("piece{k}"), row, ConstraintSense::Le, -p.d);
        // (G^T eta)_i + lambda_i = c_ki
        for i in 0..n {
            let mut row = form.gt_terms(&eta, i, 1.0);
            row.push((lambda[i], 1.0));
            lp.add_constraint(format!("piece{k}_{i}"), row, ConstraintSense::Eq, p.c[i]);
        }
        etas.push(eta);
    }
    lp.set_objective(
        ObjectiveSense::Minimize,
        std::iter::once((gamma, 1.0)).chain(lambda.iter().zip(mu).map(|(&v, &m)| (v, m))),
    );
    let r = optimal(&lp, "worst-case expectation")?;
    let x = &r.primal;
    let lam: Vec<f64> = lambda.iter().map(|v| x[v.0]).collect();
    let cert = ExpectationCertificate {
        gamma: x[gamma.0],
        value: x[gamma.0] + dot(mu, &lam),
        lambda: lam,
        eta: etas.iter().map(|e| SupportForm::eta_values(e, x)).collect(),
    };
    Ok((cert.value, cert))
}

/// Options for [`worst_case_cvar_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CvarOptions {
    /// Build the general polytope model even for box supports.
    pub force_generic: bool,
}

/// Worst-case CVaR at level `epsilon` of `max_k a_k(x)^T xi + b_k`.
pub fn worst_case_cvar(
    x: &Assignment,
    s: &ScalingPair,
    inst: &Instance,
) -> Result<(f64, CvarCertificate)> {
    x.check_dims(inst)?;
    worst_case_cvar_with(&x.to_matrix(), s, inst, CvarOptions::default())
}

/// As [`worst_case_cvar`] for any real allocation matrix.
pub fn worst_case_cvar_with(
    x: &Matrix,
    s: &ScalingPair,
    inst: &Instance,
    opts: CvarOptions,
) -> Result<(f64, CvarCertificate)> {
    if x.rows() != inst.n_tasks || x.cols() != inst.n_workers {
        return Err(Error::Dimension("allocation does not match instance".into()));
    }
    let cs = build_constraint_rows(x, s, inst.delta)?;
    worst_case_cvar_of_rows(&cs, inst, opts)
}

/// Worst-case CVaR of the loss given by an explicit constraint system.
pub fn worst_case_cvar_of_rows(
    cs: &ConstraintSystem,
    inst: &Instance,
    opts: CvarOptions,
) -> Result<(f64, CvarCertificate)> {
    check_mean(&inst.mu, &inst.support)?;
    let n = inst.n_tasks;
    let form = SupportForm::new(&inst.support, opts.force_generic);
    let rows: Vec<(Vec<Affine>, Affine)> = cs
        .a
        .iter()
        .zip(&cs.b)
        .map(|(a, &b)| (a.iter().map(|&v| Affine::constant(v)).collect(), Affine::constant(b)))
        .collect();
    let mut lp = LinearModel::new(ObjectiveSense::Minimize);
    let block = add_cvar_block(&mut lp, &form, inst.epsilon, &rows, n);
    lp.set_objective(ObjectiveSense::Minimize, block.value_terms(&inst.mu));
    let r = optimal(&lp, "worst-case CVaR")?;
    let cert = block.certificate(&r.primal, &inst.mu);
    Ok((cert.value, cert))
}

fn box_of(support: &SupportSet) -> Result<(&[f64], &[f64])> {
    match support {
        SupportSet::Box { l, u } => Ok((l, u)),
        SupportSet::Polytope { .. } => {
            Err(Error::Unsupported("the oracle requires a box support".into()))
        }
    }
}

/// The `2^n` vertices of a box, vertex `s` taking `u_i` where bit `i` is set.
pub fn box_vertices(l: &[f64], u: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = l.len();
    if n > ORACLE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "vertex enumeration limited to {ORACLE_MAX_DIM} dimensions, got {n}"
        )));
    }
    Ok((0..1usize << n)
        .map(|s| (0..n).map(|i| if s >> i & 1 == 1 { u[i] } else { l[i] }).collect())
        .collect())
}

/// `max sum_s p_s w_s` over weights `p >= 0` on `atoms` with total mass 1 and
/// mean `mu`.
pub(crate) fn max_mean_constrained(atoms: &[Vec<f64>], w: &[f64], mu: &[f64]) -> Result<f64> {
    let mut lp = LinearModel::new(ObjectiveSense::Maximize);
    let p: Vec<VarId> = (0..atoms.len()).map(|s| lp.add_nonneg_var(format!("p{s}"))).collect();
    lp.add_constraint("mass", p.iter().map(|&v| (v, 1.0)), ConstraintSense::Eq, 1.0);
    for (i, &m) in mu.iter().enumerate() {
        lp.add_constraint(
            format!("mean{i}"),
            p.iter().zip(atoms).map(|(&v, a)| (v, a[i])),
            ConstraintSense::Eq,
            m,
        );
    }
    lp.set_objective(ObjectiveSense::Maximize, p.iter().zip(w).map(|(&v, &c)| (v, c)));
    Ok(optimal(&lp, "moment oracle")?.objective.unwrap_or(f64::NAN))
}

/// The primal moment problem restricted to box vertices. For a convex loss
/// every distribution can be moved onto the vertices without lowering the
/// expectation or changing the mean, so this equals the true supremum.
pub fn oracle_worst_case_expectation(
    loss: &PiecewiseAffineLoss,
    mu: &[f64],
    support: &SupportSet,
) -> Result<f64> {
    check_mean(mu, support)?;
    let (l, u) = box_of(support)?;
    let verts = box_vertices(l, u)?;
    let w: Vec<f64> = verts.iter().map(|v| loss.eval(v)).collect();
    max_mean_constrained(&verts, &w, mu)
}

/// A uniform grid of `tau` candidates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl TauGrid {
    /// `[-B, B]` with `B` one unit beyond the largest absolute loss value
    /// attainable on the box, so it contains every value-at-risk level.
    pub fn covering(cs: &ConstraintSystem, l: &[f64], u: &[f64], step: f64) -> Self {
        let reach: Vec<f64> = l.iter().zip(u).map(|(a, b)| a.abs().max(b.abs())).collect();
        let b = cs
            .a
            .iter()
            .zip(&cs.b)
            .map(|(a, b)| b.abs() + a.iter().zip(&reach).map(|(x, r)| x.abs() * r).sum::<f64>())
            .fold(0.0, f64::max)
            + 1.0;
        Self {
            lo: -b,
            hi: b,
            step,
        }
    }

    fn len(&self) -> usize {
        ((self.hi - self.lo) / self.step).floor() as usize + 1
    }

    fn at(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.step
    }
}

/// `min_tau tau + (1/eps) sup E[(L - tau)^+]` over the grid, with the inner
/// supremum from the vertex oracle. The objective is convex in `tau`, so a
/// ternary search over grid indices finds the grid minimum.
pub fn oracle_worst_case_cvar(
    x: &Matrix,
    s: &ScalingPair,
    inst: &Instance,
    grid: Option<TauGrid>,
) -> Result<f64> {
    let (l, u) = box_of(&inst.support)?;
    let verts = box_vertices(l, u)?;
    let cs = build_constraint_rows(x, s, inst.delta)?;
    let grid = grid.unwrap_or_else(|| TauGrid::covering(&cs, l, u, 1e-4));
    let eps = inst.epsilon;
    let row_max: Vec<f64> = verts.iter().map(|v| cs.max_row(v)).collect();
    let phi = |k: usize| -> Result<f64> {
        let tau = grid.at(k);
        let w: Vec<f64> = row_max
            .iter()
            .map(|&m| tau + (m - tau).max(0.0) / eps)
            .collect();
        max_mean_constrained(&verts, &w, &inst.mu)
    };
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    while hi - lo > 2 {
        let m1 = lo + (hi - lo) / 3;
        let m2 = hi - (hi - lo) / 3;
        if phi(m1)? <= phi(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let mut best = f64::INFINITY;
    for k in lo..=hi {
        best = best.min(phi(k)?);
    }
    Ok(best)
}

/// Largest probability of a spread above `delta` over distributions with
/// mean `mu` supported on a `per_axis`-point grid of the box.
pub fn worst_case_violation_on_grid(
    x: &Assignment,
    inst: &Instance,
    per_axis: usize,
) -> Result<f64> {
    x.check_dims(inst)?;
    let (l, u) = box_of(&inst.support)?;
    let n = l.len();
    if per_axis < 2 {
        return Err(Error::InvalidInput("grid needs at least two points per axis".into()));
    }
    let count = (per_axis as f64).powi(n as i32);
    if count > 1e5 {
        return Err(Error::Unsupported(format!("grid of {count} atoms is too large")));
    }
    let count = count as usize;
    let mut atoms = Vec::with_capacity(count);
    for s in 0..count {
        let mut rest = s;
        let atom: Vec<f64> = (0..n)
            .map(|i| {
                let t = rest % per_axis;
                rest /= per_axis;
                l[i] + (u[i] - l[i]) * t as f64 / (per_axis - 1) as f64
            })
            .collect();
        atoms.push(atom);
    }
    let w: Vec<f64> = atoms
        .iter()
        .map(|a| if x.spread(a) > inst.delta { 1.0 } else { 0.0 })
        .collect();
    max_mean_constrained(&atoms, &w, &inst.mu)
}

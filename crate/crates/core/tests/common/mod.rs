//! Independent oracles and random-input helpers shared by the integration
//! tests and the acceptance report.
#![allow(dead_code)]

use fairsched::lp::{ConstraintSense, LinearModel, ObjectiveSense, VarId};
use fairsched::{Assignment, Instance, Matrix, ScalingPair, SupportSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box instance with `mu` strictly inside and small integer-ish rewards.
pub fn random_box_instance(r: &mut ChaCha8Rng, n: usize, j: usize, delta: f64, eps: f64) -> Instance {
    let mu: Vec<f64> = (0..n).map(|_| r.random_range(1.0..10.0)).collect();
    let lo: Vec<f64> = mu.iter().map(|m| m - r.random_range(0.1..2.0)).collect();
    let hi: Vec<f64> = mu.iter().map(|m| m + r.random_range(0.1..2.0)).collect();
    let rewards = Matrix::from_row_major(n, j, (0..n * j).map(|_| r.random_range(0.0..10.0)).collect()).unwrap();
    Instance {
        n_tasks: n,
        n_workers: j,
        rewards,
        mu,
        support: SupportSet::Box { l: lo, u: hi },
        delta,
        epsilon: eps,
        fixed: Vec::new(),
        forbidden: Vec::new(),
    }
}

/// Positive matrices normalized to sum 1, entries at least `floor`.
pub fn random_scaling(r: &mut ChaCha8Rng, j: usize, floor: f64) -> ScalingPair {
    let mut draw = || {
        let raw: Vec<f64> = (0..j * j).map(|_| r.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Matrix::from_row_major(j, j, raw.iter().map(|v| v / total).collect()).unwrap()
    };
    ScalingPair {
        alpha: draw(),
        beta: draw(),
        floor,
    }
}

pub fn random_assignment(r: &mut ChaCha8Rng, n: usize, j: usize) -> Assignment {
    Assignment::new(j, (0..n).map(|_| r.random_range(0..j)).collect()).unwrap()
}

/// Every assignment of `n` tasks to `j` workers.
pub fn all_assignments(n: usize, j: usize) -> Vec<Assignment> {
    let total = j.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let w = (0..n)
                .map(|_| {
                    let v = code % j;
                    code /= j;
                    v
                })
                .collect();
            Assignment::new(j, w).unwrap()
        })
        .collect()
}

/// Largest spread `max_{j,j'} |T_j - T_j'|` over the support box, in closed
/// form: each pair's difference is linear in `xi`, so its extreme is
/// `|mid^T d| + half^T |d|`.
pub fn robust_spread(x: &Assignment, inst: &Instance) -> f64 {
    let SupportSet::Box { l, u } = &inst.support else {
        panic!("box support required")
    };
    let mut worst: f64 = 0.0;
    for j in 0..inst.n_workers {
        for jp in 0..inst.n_workers {
            let mut center = 0.0;
            let mut reach = 0.0;
            for i in 0..inst.n_tasks {
                let d = x.get(i, j) - x.get(i, jp);
                center += 0.5 * (l[i] + u[i]) * d;
                reach += 0.5 * (u[i] - l[i]) * d.abs();
            }
            worst = worst.max(center.abs() + reach);
        }
    }
    worst
}

/// Monte Carlo violation frequency written out with plain loops over the
/// 0/1 matrix, independent of the library's evaluator.
pub fn straight_line_violation(x: &Assignment, inst: &Instance, n_samples: usize, seed: u64) -> f64 {
    let SupportSet::Box { l, u } = &inst.support else {
        panic!("box support required")
    };
    let xm = x.to_matrix();
    let mut r = rng(seed);
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let xi: Vec<f64> = (0..inst.n_tasks).map(|i| r.random_range(l[i]..u[i])).collect();
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for j in 0..inst.n_workers {
            let mut t = 0.0;
            for i in 0..inst.n_tasks {
                t += xi[i] * xm.get(i, j);
            }
            hi = hi.max(t);
            lo = lo.min(t);
        }
        if hi - lo > inst.delta {
            hits += 1;
        }
    }
    hits as f64 / n_samples as f64
}

/// A small dense LP `max c^T x s.t. A x <= b, 0 <= x <= ub`.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub ub: f64,
}

impl DenseLp {
    pub fn random(r: &mut ChaCha8Rng, n: usize, m: usize) -> Self {
        Self {
            c: (0..n).map(|_| r.random_range(-2.0..5.0)).collect(),
            a: (0..m).map(|_| (0..n).map(|_| r.random_range(-1.0..4.0)).collect()).collect(),
            b: (0..m).map(|_| r.random_range(1.0..10.0)).collect(),
            ub: 10.0,
        }
    }

    /// Upper bounds as explicit rows so the dual is `b^T y` over all rows.
    pub fn model(&self, binary: bool) -> (LinearModel, Vec<VarId>) {
        let mut lp = LinearModel::new(ObjectiveSense::Maximize);
        let n = self.c.len();
        let xs: Vec<VarId> = (0..n)
            .map(|i| {
                if binary {
                    lp.add_binary(format!("x{i}"))
                } else {
                    lp.add_nonneg_var(format!("x{i}"))
                }
            })
            .collect();
        for (k, (row, &rhs)) in self.a.iter().zip(&self.b).enumerate() {
            lp.add_constraint(
                format!("r{k}"),
                xs.iter().zip(row).map(|(&v, &c)| (v, c)),
                ConstraintSense::Le,
                rhs,
            );
        }
        if !binary {
            for (i, &v) in xs.iter().enumerate() {
                lp.add_constraint(format!("ub{i}"), [(v, 1.0)], ConstraintSense::Le, self.ub);
            }
        }
        lp.set_objective(ObjectiveSense::Maximize, xs.iter().zip(&self.c).map(|(&v, &c)| (v, c)));
        (lp, xs)
    }

    /// All rows `G x <= h` including bounds: `A`, `x <= ub`, `-x <= 0`.
    fn all_rows(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = self.c.len();
        let mut g = self.a.clone();
        let mut h = self.b.clone();
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            g.push(e.clone());
            h.push(self.ub);
            e[i] = -1.0;
            g.push(e);
            h.push(0.0);
        }
        (g, h)
    }

    /// Best vertex over every choice of `n` tight rows. `None` when no
    /// vertex is feasible.
    pub fn vertex_optimum(&self) -> Option<f64> {
        let n = self.c.len();
        let (g, h) = self.all_rows();
        let mut best: Option<f64> = None;
        for subset in combinations(g.len(), n) {
            let m: Vec<Vec<f64>> = subset.iter().map(|&k| g[k].clone()).collect();
            let rhs: Vec<f64> = subset.iter().map(|&k| h[k]).collect();
            let Some(x) = solve_square(m, rhs) else { continue };
            let feasible = g
                .iter()
                .zip(&h)
                .all(|(row, &hk)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= hk + 1e-9);
            if feasible {
                let v: f64 = self.c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }

    /// Best 0/1 point, by enumeration.
    pub fn binary_optimum(&self) -> Option<f64> {
        let n = self.c.len();
        let mut best: Option<f64> = None;
        for code in 0..1usize << n {
            let x: Vec<f64> = (0..n).map(|i| (code >> i & 1) as f64).collect();
            let ok = self
                .a
                .iter()
                .zip(&self.b)
                .all(|(row, &bk)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() <= bk + 1e-12);
            if ok {
                let v: f64 = self.c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        best
    }
}

pub fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[p][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

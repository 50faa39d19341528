//! Product-form representation of a basis inverse.
//!
//! The basis inverse is stored as a sequence of elementary column
//! transformations (etas). A fresh factorization first takes the logical
//! columns, then repeatedly pivots on structural columns that have a single
//! nonzero among the rows not yet pivoted (these produce no fill), and
//! finally eliminates the remaining nucleus with partial pivoting. Basis
//! changes append one eta each.

use super::sparse::CscMatrix;

const SINGULAR_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    prow: Vec<u32>,
    piv: Vec<f64>,
    start: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
    factor_etas: usize,
    factor_nnz: usize,
}

/// Result of factorizing a candidate set of basic columns.
pub(crate) struct Factorization {
    pub factor: Factor,
    /// `basis[r]` is the variable pivoted on row `r`.
    pub basis: Vec<usize>,
    /// Candidate columns rejected as (numerically) dependent.
    pub rejected: Vec<usize>,
}

impl Factor {
    fn empty(m: usize) -> Self {
        Self {
            m,
            prow: Vec::new(),
            piv: Vec::new(),
            start: vec![0],
            idx: Vec::new(),
            val: Vec::new(),
            factor_etas: 0,
            factor_nnz: 0,
        }
    }

    /// Number of etas appended since the last full factorization.
    pub fn updates(&self) -> usize {
        self.prow.len() - self.factor_etas
    }

    pub fn update_nnz(&self) -> usize {
        self.idx.len() - self.factor_nnz
    }

    pub fn factor_nnz(&self) -> usize {
        self.factor_nnz
    }

    /// Appends the eta for pivoting the transformed column `w` on row `r`.
    pub fn push(&mut self, r: usize, w: &[f64]) {
        debug_assert_eq!(w.len(), self.m);
        self.prow.push(r as u32);
        self.piv.push(w[r]);
        for (i, &v) in w.iter().enumerate() {
            if i != r && v.abs() > DROP_TOL {
                self.idx.push(i as u32);
                self.val.push(v);
            }
        }
        self.start.push(self.idx.len());
    }

    /// Solves `B w = a` in place.
    pub fn ftran(&self, w: &mut [f64]) {
        for k in 0..self.prow.len() {
            let p = self.prow[k] as usize;
            let wp = w[p];
            if wp == 0.0 {
                continue;
            }
            let t = wp / self.piv[k];
            w[p] = t;
            for e in self.start[k]..self.start[k + 1] {
                w[self.idx[e] as usize] -= self.val[e] * t;
            }
        }
    }

    /// Solves `y^T B = c^T` in place.
    pub fn btran(&self, y: &mut [f64]) {
        for k in (0..self.prow.len()).rev() {
            let p = self.prow[k] as usize;
            let mut s = y[p];
            for e in self.start[k]..self.start[k + 1] {
                s -= self.val[e] * y[self.idx[e] as usize];
            }
            y[p] = s / self.piv[k];
        }
    }
}

/// Factorizes the basis formed by `basic` (variable indices: `< n` are
/// structural columns of `a`, `n + i` is the logical column `e_i`).
///
/// Rows left uncovered by rejected columns are filled with their logicals.
pub(crate) fn factorize(a: &CscMatrix, basic: &[usize]) -> Factorization {
    let m = a.nrows;
    let n = a.ncols;
    let mut factor = Factor::empty(m);
    let mut basis = vec![usize::MAX; m];
    let mut taken = vec![false; m];
    let mut rejected = Vec::new();
    let mut structs: Vec<usize> = Vec::with_capacity(basic.len());

    for &v in basic {
        if v >= n {
            let r = v - n;
            if taken[r] {
                rejected.push(v);
            } else {
                taken[r] = true;
                basis[r] = v;
            }
        } else {
            structs.push(v);
        }
    }

    // Active-row counts per candidate column and the row -> candidates map.
    let mut count = vec![0usize; structs.len()];
    let mut row_start = vec![0usize; m + 1];
    for &c in &structs {
        for &r in a.col_rows(c) {
            row_start[r as usize + 1] += 1;
        }
    }
    for r in 0..m {
        row_start[r + 1] += row_start[r];
    }
    let mut fill = row_start.clone();
    let mut row_cols = vec![0u32; row_start[m]];
    for (k, &c) in structs.iter().enumerate() {
        for &r in a.col_rows(c) {
            let r = r as usize;
            row_cols[fill[r]] = k as u32;
            fill[r] += 1;
            if !taken[r] {
                count[k] += 1;
            }
        }
    }

    let mut done = vec![false; structs.len()];
    let mut stack: Vec<usize> = (0..structs.len()).rev().filter(|&k| count[k] == 1).collect();
    let mut w = vec![0.0; m];

    while let Some(k) = stack.pop() {
        if done[k] || count[k] != 1 {
            continue;
        }
        let c = structs[k];
        let r = match a.col_rows(c).iter().map(|&r| r as usize).find(|&r| !taken[r]) {
            Some(r) => r,
            None => continue,
        };
        a.scatter(c, &mut w);
        factor.ftran(&mut w);
        if w[r].abs() < SINGULAR_TOL {
            w.iter_mut().for_each(|x| *x = 0.0);
            continue;
        }
        factor.push(r, &w);
        w.iter_mut().for_each(|x| *x = 0.0);
        taken[r] = true;
        basis[r] = c;
        done[k] = true;
        for &k2 in &row_cols[row_start[r]..row_start[r + 1]] {
            let k2 = k2 as usize;
            if !done[k2] {
                count[k2] -= 1;
                if count[k2] == 1 {
                    stack.push(k2);
                }
            }
        }
    }

    // Nucleus: remaining columns, sparsest first.
    let mut rest: Vec<usize> = (0..structs.len()).filter(|&k| !done[k]).collect();
    rest.sort_by_key(|&k| (count[k], structs[k]));
    for k in rest {
        let c = structs[k];
        a.scatter(c, &mut w);
        factor.ftran(&mut w);
        let mut best = usize::MAX;
        let mut best_abs = SINGULAR_TOL;
        for r in 0..m {
            if !taken[r] && w[r].abs() > best_abs {
                best_abs = w[r].abs();
                best = r;
            }
        }
        if best == usize::MAX {
            rejected.push(c);
        } else {
            factor.push(best, &w);
            taken[best] = true;
            basis[best] = c;
        }
        w.iter_mut().for_each(|x| *x = 0.0);
    }

    for r in 0..m {
        if !taken[r] {
            basis[r] = n + r;
        }
    }
    factor.factor_etas = factor.prow.len();
    factor.factor_nnz = factor.idx.len();
    Factorization {
        factor,
        basis,
        rejected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(a: &CscMatrix, basis: &[usize], w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.nrows];
        for (r, &v) in basis.iter().enumerate() {
            if v >= a.ncols {
                out[v - a.ncols] += w[r];
            } else {
                for (i, x) in a.col_iter(v) {
                    out[i] += x * w[r];
                }
            }
        }
        out
    }

    #[test]
    fn ftran_btran_invert_mixed_basis() {
        // 4x5 matrix with a coupled nucleus.
        let cols = vec![
            vec![(0, 2.0), (1, 1.0)],
            vec![(1, 3.0), (2, 1.0), (3, 1.0)],
            vec![(0, 1.0), (2, 4.0)],
            vec![(3, 5.0)],
            vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)],
        ];
        let a = CscMatrix::from_columns(4, &cols);
        let basic = [0, 1, 2, 4];
        let f = factorize(&a, &basic);
        assert!(f.rejected.is_empty());
        let rhs = [1.0, -2.0, 0.5, 3.0];
        let mut w = rhs.to_vec();
        f.factor.ftran(&mut w);
        let back = dense_mul(&a, &f.basis, &w);
        for (x, y) in back.iter().zip(rhs) {
            assert!((x - y).abs() < 1e-12);
        }
        // y^T B = c^T  <=>  y . B[:, r] = c_r
        let c = [0.3, 1.0, -1.0, 2.0];
        let mut y = c.to_vec();
        f.factor.btran(&mut y);
        for (r, &v) in f.basis.iter().enumerate() {
            let dot: f64 = if v >= a.ncols {
                y[v - a.ncols]
            } else {
                a.col_iter(v).map(|(i, x)| x * y[i]).sum()
            };
            assert!((dot - c[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn dependent_columns_are_replaced_by_logicals() {
        let cols = vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 2.0), (1, 2.0)]];
        let a = CscMatrix::from_columns(2, &cols);
        let f = factorize(&a, &[0, 1]);
        assert_eq!(f.rejected, vec![1]);
        assert!(f.basis.contains(&0));
        assert!(f.basis.iter().any(|&v| v >= 2));
    }
}

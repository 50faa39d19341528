/// Compressed sparse column storage.
#[derive(Debug, Clone)]
pub(crate) struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    start: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

impl CscMatrix {
    pub fn from_columns(nrows: usize, cols: &[Vec<(usize, f64)>]) -> Self {
        let mut start = Vec::with_capacity(cols.len() + 1);
        let mut rows = Vec::new();
        let mut vals = Vec::new();
        start.push(0);
        for col in cols {
            for &(r, v) in col {
                debug_assert!(r < nrows);
                rows.push(r as u32);
                vals.push(v);
            }
            start.push(rows.len());
        }
        Self {
            nrows,
            ncols: cols.len(),
            start,
            rows,
            vals,
        }
    }

    pub fn col_rows(&self, c: usize) -> &[u32] {
        &self.rows[self.start[c]..self.start[c + 1]]
    }

    pub fn col_vals(&self, c: usize) -> &[f64] {
        &self.vals[self.start[c]..self.start[c + 1]]
    }

    pub fn col_iter(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_rows(c)
            .iter()
            .zip(self.col_vals(c))
            .map(|(&r, &v)| (r as usize, v))
    }

    /// Writes column `c` into the zeroed dense vector `w`.
    pub fn scatter(&self, c: usize, w: &mut [f64]) {
        for (r, v) in self.col_iter(c) {
            w[r] = v;
        }
    }

    pub fn col_dot(&self, c: usize, y: &[f64]) -> f64 {
        self.col_iter(c).map(|(r, v)| v * y[r]).sum()
    }

    /// Row-major copy of the same matrix.
    pub fn to_csr(&self) -> CsrMatrix {
        let mut start = vec![0usize; self.nrows + 1];
        for &r in &self.rows {
            start[r as usize + 1] += 1;
        }
        for r in 0..self.nrows {
            start[r + 1] += start[r];
        }
        let mut fill = start.clone();
        let mut cols = vec![0u32; self.rows.len()];
        let mut vals = vec![0.0; self.rows.len()];
        for c in 0..self.ncols {
            for (r, v) in self.col_iter(c) {
                cols[fill[r]] = c as u32;
                vals[fill[r]] = v;
                fill[r] += 1;
            }
        }
        CsrMatrix { start, cols, vals }
    }
}

/// Compressed sparse row storage (used for pivot-row computations).
#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix {
    start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn row_iter(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.start[r];
        let e = self.start[r + 1];
        self.cols[s..e]
            .iter()
            .zip(&self.vals[s..e])
            .map(|(&c, &v)| (c as usize, v))
    }
}

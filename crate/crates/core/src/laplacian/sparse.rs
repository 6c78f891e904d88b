use std::io::Write;

use rayon::prelude::*;

use crate::error::{MatteError, Result};

const PAR_ROWS: usize = 4096;

/// Symmetric sparse matrix in compressed-row form.
///
/// Both triangles are stored and column indices are strictly increasing
/// within every row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from raw CSR arrays, checking structure and symmetry within `1e-12`.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseSymMatrix::from_csr_unchecked(n, row_offsets, col_indices, values)?;
        if !m.is_symmetric(1e-12) {
            return Err(MatteError::Validation("matrix is not symmetric".into()));
        }
        Ok(m)
    }

    /// Structural checks only; symmetry is the caller's responsibility.
    pub(crate) fn from_csr_unchecked(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1
            || row_offsets[0] != 0
            || row_offsets[n] != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(MatteError::Validation("inconsistent CSR arrays".into()));
        }
        for p in 0..n {
            let (a, b) = (row_offsets[p], row_offsets[p + 1]);
            if a > b {
                return Err(MatteError::Validation(format!("row {p} has negative length")));
            }
            let cols = &col_indices[a..b];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.last().is_some_and(|&c| c >= n) {
                return Err(MatteError::Validation(format!(
                    "row {p} columns not strictly increasing or out of range"
                )));
            }
        }
        Ok(SparseSymMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles from per-row `(column, value)` lists already sorted by column.
    pub(crate) fn from_sorted_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in rows {
            for (c, v) in row {
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        SparseSymMatrix::from_csr_unchecked(n, row_offsets, col_indices, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, p: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_offsets[p], self.row_offsets[p + 1]);
        (&self.col_indices[a..b], &self.values[a..b])
    }

    /// Entry `(p, q)`, zero when not stored.
    pub fn get(&self, p: usize, q: usize) -> f64 {
        let (cols, vals) = self.row(p);
        cols.binary_search(&q).map_or(0.0, |k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|p| self.get(p, p)).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|p| {
            let (cols, vals) = self.row(p);
            cols.iter()
                .zip(vals)
                .all(|(&q, &v)| (v - self.get(q, p)).abs() <= tol)
        })
    }

    /// Largest absolute row sum.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|p| self.row(p).1.iter().sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(MatteError::Shape(format!(
                "vector of length {len} for a {}x{} matrix",
                self.n, self.n
            )));
        }
        Ok(())
    }

    #[inline]
    fn row_dot(&self, p: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(p);
        cols.iter().zip(vals).map(|(&q, &v)| v * x[q]).sum()
    }

    /// `y = M x`. Each row is reduced sequentially, so the result does not
    /// depend on the number of worker threads.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len())?;
        self.check_len(y.len())?;
        if self.n >= PAR_ROWS {
            y.par_iter_mut()
                .enumerate()
                .for_each(|(p, yp)| *yp = self.row_dot(p, x));
        } else {
            for (p, yp) in y.iter_mut().enumerate() {
                *yp = self.row_dot(p, x);
            }
        }
        Ok(())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (p, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(p);
            for (&q, &v) in cols.iter().zip(vals) {
                row[q] = v;
            }
        }
        d
    }

    /// Writes one `p q value` line per stored entry.
    pub fn write_triplets(&self, mut w: impl Write) -> std::io::Result<()> {
        for p in 0..self.n {
            let (cols, vals) = self.row(p);
            for (&q, &v) in cols.iter().zip(vals) {
                writeln!(w, "{p} {q} {v:e}")?;
            }
        }
        Ok(())
    }
}

/// `xᵀ M x`.
pub fn quad_form(m: &SparseSymMatrix, x: &[f64]) -> Result<f64> {
    m.check_len(x.len())?;
    Ok((0..m.n).map(|p| x[p] * m.row_dot(p, x)).sum())
}

use crate::error::{Error, Result};

/// Dense row-major matrix of f64, the feature-matrix currency between modules.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Matrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_cols {
                return Err(Error::LengthMismatch {
                    context: "matrix row",
                    got: r.len(),
                    expected: n_cols,
                });
            }
            let _ = i;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            n_rows,
            n_cols,
            data,
        })
    }

    /// Columns must all share the same length.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let n_cols = columns.len();
        let n_rows = columns.first().map_or(0, |c| c.len());
        for c in columns {
            if c.len() != n_rows {
                return Err(Error::LengthMismatch {
                    context: "matrix column",
                    got: c.len(),
                    expected: n_rows,
                });
            }
        }
        let mut m = Matrix::zeros(n_rows, n_cols);
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                m.data[i * n_cols + j] = *v;
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.n_cols + col] = v;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    /// New matrix holding the given rows, in the given order.
    pub fn take_rows(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.n_cols);
        for (out, &i) in indices.iter().enumerate() {
            let src = self.row(i);
            m.data[out * self.n_cols..(out + 1) * self.n_cols].copy_from_slice(src);
        }
        m
    }

    /// Concatenates two row slices into one query row: [left | right].
    pub fn concat_row(left: &[f64], right: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(left.len() + right.len());
        v.extend_from_slice(left);
        v.extend_from_slice(right);
        v
    }
}

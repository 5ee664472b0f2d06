//! Dense row-major matrix used between preprocessing and the learners.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl NumericMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "row-major data has wrong length");
        Self { n_rows, n_cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            assert_eq!(row.len(), n_cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { n_rows, n_cols, data }
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(n_rows: usize, columns: &[Vec<f64>]) -> Self {
        let n_cols = columns.len();
        let mut m = Self::zeros(n_rows, n_cols);
        for (j, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n_rows, "column length mismatch");
            for (i, &v) in col.iter().enumerate() {
                m.data[i * n_cols + j] = v;
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.n_cols + col] = value;
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Selects a subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Concatenates matrices side by side. All inputs must share a row count.
    pub fn hstack(n_rows: usize, blocks: &[NumericMatrix]) -> Self {
        let n_cols: usize = blocks.iter().map(|b| b.n_cols).sum();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for b in blocks {
                assert_eq!(b.n_rows, n_rows, "hstack row mismatch");
                data.extend_from_slice(b.row(i));
            }
        }
        Self { n_rows, n_cols, data }
    }
}

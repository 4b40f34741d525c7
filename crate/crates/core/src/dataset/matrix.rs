//! Dense row-major matrix used throughout the crate.
//!
//! Deliberately minimal: the fitting code needs row slices, column
//! extraction, and row subsetting, nothing more. Heavy linear algebra
//! (QR, eigendecomposition) converts to `nalgebra` at the call site.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    /// Build from row-major data. Panics if the length does not match.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_rows * n_cols, "matrix shape mismatch");
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    /// Build from column vectors, all of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Self {
        let n_cols = cols.len();
        let n_rows = cols.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n_rows, n_cols);
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), n_rows, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m.set(i, j, v);
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn rows_subset(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.n_cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data[r * self.n_cols..(r + 1) * self.n_cols].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn columns_subset(&self, cols: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.n_rows, cols.len());
        for i in 0..self.n_rows {
            for (c, &j) in cols.iter().enumerate() {
                out.set(i, c, self.get(i, j));
            }
        }
        out
    }

    /// Append a column on the right.
    pub fn hstack_column(&self, col: &[f64]) -> Matrix {
        assert_eq!(col.len(), self.n_rows);
        let mut out = Matrix::zeros(self.n_rows, self.n_cols + 1);
        for i in 0..self.n_rows {
            out.data[i * (self.n_cols + 1)..i * (self.n_cols + 1) + self.n_cols]
                .copy_from_slice(self.row(i));
            out.set(i, self.n_cols, col[i]);
        }
        out
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n_rows, self.n_cols, &self.data)
    }
}

/// A matrix with named columns, the input to partition-definition replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, values: Matrix) -> Self {
        assert_eq!(names.len(), values.n_cols(), "name/column count mismatch");
        Self { names, values }
    }

    pub fn n_rows(&self) -> usize {
        self.values.n_rows()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn rows_subset(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            values: self.values.rows_subset(idx),
        }
    }
}

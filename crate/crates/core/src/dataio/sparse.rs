use serde::{Deserialize, Serialize};

use crate::numkit::DenseMatrix;
use crate::Scalar;

/// Compressed sparse row matrix with 0-based column indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn empty(n_cols: usize) -> Self {
        Self {
            n_rows: 0,
            n_cols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row; `indices` must be strictly increasing and below `n_cols`.
    pub fn push_row(&mut self, indices: &[usize], values: &[T]) {
        debug_assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().map_or(true, |&i| i < self.n_cols));
        self.indices.extend_from_slice(indices);
        self.values.extend_from_slice(values);
        self.indptr.push(self.indices.len());
        self.n_rows += 1;
    }

    pub fn from_dense_rows(n_cols: usize, rows: &[Vec<T>]) -> Self {
        let mut m = Self::empty(n_cols);
        for row in rows {
            let (idx, val): (Vec<usize>, Vec<T>) = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != T::zero())
                .map(|(i, &v)| (i, v))
                .unzip();
            m.push_row(&idx, &val);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub(crate) fn set_n_cols(&mut self, n_cols: usize) {
        debug_assert!(self.indices.iter().all(|&i| i < n_cols));
        self.n_cols = n_cols;
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_dot(&self, i: usize, x: &[T]) -> T {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum()
    }

    /// `out += alpha * row_i`
    pub fn row_axpy(&self, i: usize, alpha: T, out: &mut [T]) {
        let (idx, val) = self.row(i);
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = out[j] + alpha * v;
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n_rows).map(|i| self.row_dot(i, x)).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut m = Self::empty(self.n_cols);
        for &r in rows {
            let (idx, val) = self.row(r);
            m.push_row(idx, val);
        }
        m
    }

    pub fn cast<U: Scalar>(&self) -> CsrMatrix<U> {
        CsrMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }
}

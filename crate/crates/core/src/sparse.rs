//! Minimal compressed-sparse-row matrix used for the normalized graph operators.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Square or rectangular sparse matrix in CSR layout with `f64` values.
///
/// Column indices within each row are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays. Panics if the arrays are inconsistent.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(indptr.len(), nrows + 1, "indptr length");
        assert_eq!(indices.len(), values.len(), "indices/values length");
        assert_eq!(*indptr.last().unwrap(), indices.len(), "indptr tail");
        debug_assert!(indices.iter().all(|&j| j < ncols));
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    /// `y = A x` written into `out`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(out.len(), self.nrows);
        for (i, y) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *y = cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows);
        self.mul_vec_into(x.as_slice(), out.as_mut_slice());
        out
    }

    /// Sparse-dense product `A X`, computed column by column in parallel.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.ncols, "inner dimensions");
        let mut out = DMatrix::zeros(self.nrows, x.ncols());
        if self.nrows == 0 || x.ncols() == 0 {
            return out;
        }
        let ncols_in = self.ncols;
        out.as_mut_slice()
            .par_chunks_mut(self.nrows)
            .enumerate()
            .for_each(|(c, col_out)| {
                let col_in = &x.as_slice()[c * ncols_in..(c + 1) * ncols_in];
                self.mul_vec_into(col_in, col_out);
            });
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                m[(i, j)] = a;
            }
        }
        m
    }
}

//! Minimal compressed-sparse-row matrix used by the collocation assembly.
//!
//! The solver only needs row-wise construction, matrix–vector products and a
//! few row reductions, so this stays deliberately small. Column indices are
//! `u32` to keep the operator of large clouds compact.

use crate::scalar::Real;
use rayon::prelude::*;
use std::io::{self, Write};

#[derive(Clone, Debug)]
pub struct CsrMatrix<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Build from per-row (column, value) lists. Each row is sorted by column
    /// and duplicate entries are summed.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(u32, T)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0usize);
        let nnz_upper: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz_upper);
        let mut vals = Vec::with_capacity(nnz_upper);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut it = row.into_iter();
            if let Some((mut c, mut v)) = it.next() {
                for (c2, v2) in it {
                    if c2 == c {
                        v += v2;
                    } else {
                        cols.push(c);
                        vals.push(v);
                        c = c2;
                        v = v2;
                    }
                }
                cols.push(c);
                vals.push(v);
            }
            indptr.push(cols.len());
        }
        CsrMatrix { nrows, ncols, indptr, cols, vals }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, indptr: vec![0; nrows + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        (&self.cols[lo..hi], &self.vals[lo..hi])
    }

    /// Replace the values of row `i`. The new values must match the stored
    /// sparsity pattern of the row.
    pub fn set_row_values(&mut self, i: usize, new_vals: &[T]) {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        assert_eq!(hi - lo, new_vals.len(), "row {i}: pattern length mismatch");
        self.vals[lo..hi].copy_from_slice(new_vals);
    }

    /// `y = A x`, rows computed in parallel.
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        let indptr = &self.indptr;
        let cols = &self.cols;
        let vals = &self.vals;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = T::zero();
            for k in indptr[i]..indptr[i + 1] {
                acc += vals[k] * x[cols[k] as usize];
            }
            *yi = acc;
        });
    }

    /// Largest absolute row sum (the ∞-norm).
    pub fn max_abs_row_sum(&self) -> T {
        let mut best = T::zero();
        for i in 0..self.nrows {
            let (_, vals) = self.row(i);
            let s: T = vals.iter().map(|v| v.abs()).sum();
            if s > best {
                best = s;
            }
        }
        best
    }

    /// Signed row sums, one per row.
    pub fn row_sums(&self) -> Vec<T> {
        (0..self.nrows).map(|i| self.row(i).1.iter().copied().sum()).collect()
    }

    /// Dump in `row col value` coordinate text format, one entry per line.
    pub fn write_coo<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {}", i, c, v.to64())?;
            }
        }
        Ok(())
    }
}

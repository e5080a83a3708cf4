//! Compressed sparse row storage.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from raw parts. Columns within a row must be strictly increasing.
    pub fn from_parts(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        values: Vec<f64>,
    ) -> Self {
        assert_eq!(row_ptr.len(), nrows + 1);
        assert_eq!(col_idx.len(), values.len());
        assert_eq!(*row_ptr.last().unwrap(), values.len());
        debug_assert!((0..nrows).all(|r| {
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            cols.windows(2).all(|w| w[0] < w[1]) && cols.iter().all(|&c| (c as usize) < ncols)
        }));
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Duplicates are summed in input order, so the result is deterministic.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut builder = CsrBuilder::new(nrows, ncols);
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        builder.append_sorted(&sorted, nrows);
        builder.finish()
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts(n, n, (0..=n).collect(), (0..n as u32).collect(), vec![1.0; n])
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y += alpha * A x`
    pub fn mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let range = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut s = 0.0;
            for (&c, &v) in self.col_idx[range.clone()].iter().zip(&self.values[range]) {
                s += v * x[c as usize];
            }
            *yr += alpha * s;
        }
    }

    /// `y += alpha * A^T x`
    pub fn tr_mul_vec_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for (r, &xr) in x.iter().enumerate() {
            let ax = alpha * xr;
            if ax == 0.0 {
                continue;
            }
            let range = self.row_ptr[r]..self.row_ptr[r + 1];
            for (&c, &v) in self.col_idx[range.clone()].iter().zip(&self.values[range]) {
                y[c as usize] += v * ax;
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_add(1.0, x, &mut y);
        y
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c as usize];
                next[c as usize] += 1;
                col_idx[slot] = r as u32;
                values[slot] = v;
            }
        }
        Self::from_parts(self.ncols, self.nrows, row_ptr, col_idx, values)
    }

    /// `A B` via row-wise accumulation.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut builder = CsrBuilder::new(self.nrows, other.ncols);
        let mut acc = vec![0.0; other.ncols];
        let mut marked = vec![false; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut row = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k as usize);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    let c = c as usize;
                    if !marked[c] {
                        marked[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            touched.sort_unstable();
            row.clear();
            for &c in &touched {
                row.push((r, c, acc[c]));
                acc[c] = 0.0;
                marked[c] = false;
            }
            touched.clear();
            builder.append_sorted(&row, r + 1);
        }
        builder.finish()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c as usize] = v;
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`, comparing sparsity patterns entrywise.
    pub fn frobenius_distance(&self, other: &CsrMatrix) -> Result<f64> {
        if (self.nrows, self.ncols) != (other.nrows, other.ncols) {
            return Err(Error::ShapeMismatch {
                expected: self.nrows * self.ncols,
                got: other.nrows * other.ncols,
            });
        }
        let mut sum = 0.0;
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let d = match (ca.get(i), cb.get(j)) {
                    (Some(&a), Some(&b)) if a == b => {
                        i += 1;
                        j += 1;
                        va[i - 1] - vb[j - 1]
                    }
                    (Some(&a), Some(&b)) if a < b => {
                        i += 1;
                        va[i - 1]
                    }
                    (Some(_), None) => {
                        i += 1;
                        va[i - 1]
                    }
                    _ => {
                        j += 1;
                        vb[j - 1]
                    }
                };
                sum += d * d;
            }
        }
        Ok(sum.sqrt())
    }

    /// Writes the matrix in Matrix Market coordinate format.
    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Bytes held by the index and value arrays.
    pub fn memory_bytes(&self) -> usize {
        self.row_ptr.len() * std::mem::size_of::<usize>()
            + self.col_idx.len() * std::mem::size_of::<u32>()
            + self.values.len() * std::mem::size_of::<f64>()
    }
}

/// Appends rows in increasing order; used to build large matrices strip by strip.
pub(crate) struct CsrBuilder {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub(crate) fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0], col_idx: Vec::new(), values: Vec::new() }
    }

    /// Rows done so far.
    pub(crate) fn rows_done(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Consumes triplets sorted by (row, col) whose rows are all below `upto`
    /// and at or above `rows_done`, summing duplicates in order, and closes
    /// every row below `upto`.
    pub(crate) fn append_sorted(&mut self, sorted: &[(usize, usize, f64)], upto: usize) {
        let mut k = 0;
        while self.rows_done() < upto {
            let r = self.rows_done();
            while k < sorted.len() && sorted[k].0 == r {
                let (_, c, v) = sorted[k];
                debug_assert!(c < self.ncols);
                let row_start = *self.row_ptr.last().unwrap();
                if self.col_idx.len() > row_start && *self.col_idx.last().unwrap() as usize == c {
                    *self.values.last_mut().unwrap() += v;
                } else {
                    self.col_idx.push(c as u32);
                    self.values.push(v);
                }
                k += 1;
            }
            self.row_ptr.push(self.col_idx.len());
        }
        debug_assert_eq!(k, sorted.len(), "triplet outside the flushed row range");
    }

    pub(crate) fn finish(mut self) -> CsrMatrix {
        let n = self.nrows;
        if self.rows_done() < n {
            self.append_sorted(&[], n);
        }
        self.col_idx.shrink_to_fit();
        self.values.shrink_to_fit();
        CsrMatrix::from_parts(n, self.ncols, self.row_ptr, self.col_idx, self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            4,
            &[(0, 1, 2.0), (2, 3, 1.0), (0, 1, 0.5), (1, 0, -1.0), (2, 0, 4.0)],
        )
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = sample();
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 1), 2.5);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(
            a.to_dense(),
            vec![
                vec![0.0, 2.5, 0.0, 0.0],
                vec![-1.0, 0.0, 0.0, 0.0],
                vec![4.0, 0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn products_and_transpose() {
        let a = sample();
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(a.mul_vec(&x), vec![5.0, -1.0, 8.0]);
        let mut y = vec![0.0; 4];
        a.tr_mul_vec_add(1.0, &[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 2.5, 0.0, 1.0]);
        let t = a.transpose();
        assert_eq!(t.mul_vec(&[1.0, 1.0, 1.0]), y);
        assert_eq!(t.transpose(), a);
        let ata = t.matmul(&a);
        assert_eq!(ata.get(0, 0), 17.0);
        assert_eq!(ata.get(0, 3), 4.0);
        assert_eq!(ata.get(1, 1), 6.25);
    }

    #[test]
    fn frobenius_distance_handles_patterns() {
        let a = sample();
        let b = CsrMatrix::from_triplets(3, 4, &[(0, 1, 2.5), (1, 2, 3.0)]);
        let d = a.frobenius_distance(&b).unwrap();
        assert!((d - (1.0f64 + 16.0 + 1.0 + 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        a.write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("%%MatrixMarket"));
        assert_eq!(lines.next().unwrap(), "3 4 4");
        let triplets: Vec<(usize, usize, f64)> = lines
            .map(|l| {
                let p: Vec<&str> = l.split_whitespace().collect();
                (p[0].parse::<usize>().unwrap() - 1, p[1].parse::<usize>().unwrap() - 1, p[2].parse().unwrap())
            })
            .collect();
        assert_eq!(CsrMatrix::from_triplets(3, 4, &triplets), a);
    }
}

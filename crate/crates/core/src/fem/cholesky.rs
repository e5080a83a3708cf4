//! Sparse Cholesky factorisation with geometric nested-dissection ordering.
//!
//! Up-looking left-to-right factorisation: the nonzero pattern of row `k` of
//! `L` is the reach of the entries of column `k` of the upper triangle in the
//! elimination tree.

use super::sparse::CsrMatrix;
use crate::{Error, Result};

/// `P A P^T = L L^T`, with `L` stored by columns, diagonal entry first.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    n: usize,
    /// `perm[k]` is the original index eliminated k-th.
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

/// Nested-dissection elimination order for nodes on an integer lattice.
///
/// Separators are lattice lines whose coordinate is a multiple of `stride`;
/// for Q1 every vertex line separates (stride 1), for broken Q2 on the
/// half-cell lattice only vertex lines do (stride 2).
pub fn nested_dissection(coords: &[(u32, u32)], stride: u32) -> Vec<usize> {
    let mut order = Vec::with_capacity(coords.len());
    let nodes: Vec<usize> = (0..coords.len()).collect();
    dissect(coords, stride, nodes, &mut order);
    order
}

fn dissect(coords: &[(u32, u32)], stride: u32, nodes: Vec<usize>, order: &mut Vec<usize>) {
    const LEAF: usize = 16;
    if nodes.len() <= LEAF {
        order.extend(nodes);
        return;
    }
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (u32::MAX, 0, u32::MAX, 0);
    for &i in &nodes {
        let (x, y) = coords[i];
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let pick = |lo: u32, hi: u32| -> Option<u32> {
        let mid = lo + (hi - lo) / 2;
        let s = (mid / stride) * stride;
        let s = if s <= lo { s + stride } else { s };
        (s > lo && s < hi).then_some(s)
    };
    let split = if xmax - xmin >= ymax - ymin {
        pick(xmin, xmax).map(|s| (0, s)).or_else(|| pick(ymin, ymax).map(|s| (1, s)))
    } else {
        pick(ymin, ymax).map(|s| (1, s)).or_else(|| pick(xmin, xmax).map(|s| (0, s)))
    };
    let Some((axis, s)) = split else {
        order.extend(nodes);
        return;
    };
    let key = |i: usize| if axis == 0 { coords[i].0 } else { coords[i].1 };
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut sep = Vec::new();
    for i in nodes {
        match key(i).cmp(&s) {
            std::cmp::Ordering::Less => left.push(i),
            std::cmp::Ordering::Greater => right.push(i),
            std::cmp::Ordering::Equal => sep.push(i),
        }
    }
    dissect(coords, stride, left, order);
    dissect(coords, stride, right, order);
    order.extend(sep);
}

impl SparseCholesky {
    /// Factorises a symmetric positive definite matrix given in full (both
    /// triangles) CSR storage, eliminating in the order `perm`.
    pub fn factor(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(a.ncols(), n, "Cholesky needs a square matrix");
        assert_eq!(perm.len(), n);
        let mut pinv = vec![usize::MAX; n];
        for (k, &p) in perm.iter().enumerate() {
            pinv[p] = k;
        }
        debug_assert!(pinv.iter().all(|&k| k != usize::MAX), "perm must be a permutation");

        // upper triangle of P A P^T by columns
        let mut counts = vec![0usize; n + 1];
        for o in 0..n {
            let (cols, _) = a.row(o);
            for &c in cols {
                let (i, j) = (pinv[c as usize], pinv[o]);
                if i <= j {
                    counts[j + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let cp = counts.clone();
        let mut next = counts;
        let mut ci = vec![0u32; cp[n]];
        let mut cx = vec![0.0; cp[n]];
        for o in 0..n {
            let (cols, vals) = a.row(o);
            for (&c, &v) in cols.iter().zip(vals) {
                let (i, j) = (pinv[c as usize], pinv[o]);
                if i <= j {
                    ci[next[j]] = i as u32;
                    cx[next[j]] = v;
                    next[j] += 1;
                }
            }
        }

        let parent = etree(n, &cp, &ci);

        // column counts of L from the row patterns
        let mut mark = vec![usize::MAX; n];
        let mut stack = vec![0usize; n];
        let mut colcount = vec![1usize; n];
        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut mark, &mut stack);
            for &i in &stack[top..n] {
                colcount[i] += 1;
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            col_ptr[j + 1] = col_ptr[j] + colcount[j];
        }
        let nnz = col_ptr[n];
        let mut row_idx = vec![0u32; nnz];
        let mut values = vec![0.0; nnz];
        let mut fill = col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = usize::MAX);

        for k in 0..n {
            let top = ereach(k, &cp, &ci, &parent, &mut mark, &mut stack);
            for p in cp[k]..cp[k + 1] {
                x[ci[p] as usize] = cx[p];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / values[col_ptr[i]];
                x[i] = 0.0;
                for p in col_ptr[i] + 1..fill[i] {
                    x[row_idx[p] as usize] -= values[p] * lki;
                }
                d -= lki * lki;
                row_idx[fill[i]] = k as u32;
                values[fill[i]] = lki;
                fill[i] += 1;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: perm[k], pivot: d });
            }
            row_idx[fill[k]] = k as u32;
            values[fill[k]] = d.sqrt();
            fill[k] += 1;
        }
        Ok(Self { n, perm, col_ptr, row_idx, values })
    }

    /// Factorises with the natural order.
    pub fn factor_natural(a: &CsrMatrix) -> Result<Self> {
        Self::factor(a, (0..a.nrows()).collect())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros of the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..self.n {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let yj = y[j] / self.values[s];
            y[j] = yj;
            for p in s + 1..e {
                y[self.row_idx[p] as usize] -= self.values[p] * yj;
            }
        }
        for j in (0..self.n).rev() {
            let (s, e) = (self.col_ptr[j], self.col_ptr[j + 1]);
            let mut t = y[j];
            for p in s + 1..e {
                t -= self.values[p] * y[self.row_idx[p] as usize];
            }
            y[j] = t / self.values[s];
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

fn etree(n: usize, cp: &[usize], ci: &[u32]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &i in &ci[cp[k]..cp[k + 1]] {
            let mut i = i as usize;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` (off-diagonal) in `stack[top..n]`, topologically ordered.
fn ereach(
    k: usize,
    cp: &[usize],
    ci: &[u32],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &i in &ci[cp[k]..cp[k + 1]] {
        let mut i = i as usize;
        if i > k {
            continue;
        }
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

//! Compressed sparse row storage for complex matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::BTreeMap;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn from_diagonal(d: &[C64]) -> Self {
        let n = d.len();
        Self { nrows: n, ncols: n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), vals: d.to_vec() }
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        Self::from_diagonal(&d.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    /// Duplicates are summed. Explicit zeros are kept so structure stays visible.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut rows: Vec<BTreeMap<usize, C64>> = vec![BTreeMap::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            *rows[i].entry(j).or_insert(C64::new(0.0, 0.0)) += v;
        }
        Self::from_rows(nrows, ncols, rows)
    }

    fn from_rows(nrows: usize, ncols: usize, rows: Vec<BTreeMap<usize, C64>>) -> Self {
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in rows {
            for (j, v) in r {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows, ncols, row_ptr, col_idx, vals }
    }

    pub fn from_dense(m: &DMatrix<C64>, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].norm() > drop_tol {
                    t.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.vals[a..b].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.vals[a + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut t: Vec<(usize, usize, C64)> = self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect();
        t.sort_by_key(|&(i, j, _)| (i, j));
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Self, s: C64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, v * s)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows);
        let mut rows = vec![BTreeMap::new(); self.nrows];
        for (i, row) in rows.iter_mut().enumerate() {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    *row.entry(j).or_insert(C64::new(0.0, 0.0)) += a * b;
                }
            }
        }
        Self::from_rows(self.nrows, other.ncols, rows)
    }

    /// `D1 * self * D2` for diagonal scalings.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] *= left[i] * right[self.col_idx[k]];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    /// Keep entries with both indices in the given sets.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut cmap = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            cmap[old] = new;
        }
        let mut t = Vec::new();
        for (ni, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if cmap[j] != usize::MAX {
                    t.push((ni, cmap[j], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), &t)
    }
}

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn ci(im: f64) -> C64 {
    C64::new(0.0, im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_dense() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, c(1.0)), (0, 2, ci(2.0)), (1, 1, c(-3.0))]);
        let b = CsrMatrix::from_triplets(3, 2, &[(0, 1, c(4.0)), (2, 0, c(1.0)), (1, 0, ci(1.0))]);
        let d = a.to_dense() * b.to_dense();
        assert_eq!(a.matmul(&b).to_dense(), d);
    }

    #[test]
    fn duplicates_sum() {
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, c(1.0)), (0, 0, c(2.5))]);
        assert_eq!(a.get(0, 0), c(3.5));
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn adjoint_conjugates() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, C64::new(1.0, 2.0))]);
        assert_eq!(a.adjoint().get(1, 0), C64::new(1.0, -2.0));
    }
}

//! Compressed-row sparse matrices.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from a square pattern given as sorted, duplicate-free column
    /// lists per row; all values start at zero.
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]));
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self { n, row_ptr, col_idx, values }
    }

    /// Sums duplicate triplets. Order of summation is the sorted `(row, col)`
    /// order followed by insertion order, independent of thread count.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, _) in &triplets {
            ensure!(i < n && j < n, "triplet ({i},{j}) outside {n}x{n}");
        }
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n = a.len();
        let trip = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| a[i][j] != 0.0).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, a[i][j]))
            .collect();
        Self::from_triplets(n, trip).expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn row_values_mut(&mut self, i: usize) -> (&[usize], &mut [f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &mut self.values[r])
    }

    /// Mutable access to a contiguous band of rows `rows` with their column
    /// indices, used to fill disjoint row blocks in parallel.
    pub fn split_rows_mut(&mut self, bounds: &[usize]) -> Vec<RowBlockMut<'_>> {
        let mut out = Vec::with_capacity(bounds.len().saturating_sub(1));
        let mut rest: &mut [f64] = &mut self.values;
        let mut consumed = 0;
        for w in bounds.windows(2) {
            let (start, end) = (self.row_ptr[w[0]], self.row_ptr[w[1]]);
            let (_, tail) = rest.split_at_mut(start - consumed);
            let (block, tail) = tail.split_at_mut(end - start);
            rest = tail;
            consumed = end;
            out.push(RowBlockMut {
                first_row: w[0],
                row_ptr: &self.row_ptr[w[0]..=w[1]],
                col_idx: &self.col_idx,
                values: block,
            });
        }
        out
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `y = A x`, rows in parallel; each row's sum is sequential so the
    /// result does not depend on the thread count.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
            for (k, yi) in chunk.iter_mut().enumerate() {
                let i = c * 1024 + k;
                let (cols, vals) = self.row(i);
                let mut acc = 0.0;
                for (j, v) in cols.iter().zip(vals) {
                    acc += v * x[*j];
                }
                *yi = acc;
            }
        });
    }

    /// Bitwise symmetry of values and pattern.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| {
                let (cj, vj) = self.row(j);
                matches!(cj.binary_search(&i), Ok(k) if vj[k] == v)
            })
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (j, v) in cols.iter().zip(vals) {
                row[*j] = *v;
            }
        }
        a
    }

    /// MatrixMarket coordinate format, symmetric storage (lower triangle).
    pub fn to_matrix_market(&self) -> String {
        let lower: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .filter(move |(j, _)| **j <= i)
                    .map(move |(j, v)| (i, *j, *v))
            })
            .collect();
        let mut s = String::from("%%MatrixMarket matrix coordinate real symmetric\n");
        let _ = writeln!(s, "{} {} {}", self.n, self.n, lower.len());
        for (i, j, v) in lower {
            let _ = writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v);
        }
        s
    }
}

pub struct RowBlockMut<'a> {
    first_row: usize,
    row_ptr: &'a [usize],
    col_idx: &'a [usize],
    values: &'a mut [f64],
}

impl RowBlockMut<'_> {
    pub fn first_row(&self) -> usize {
        self.first_row
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let li = i - self.first_row;
        let (s, e) = (self.row_ptr[li], self.row_ptr[li + 1]);
        let base = self.row_ptr[0];
        let k = self.col_idx[s..e].binary_search(&j).expect("entry outside sparsity pattern");
        self.values[s - base + k] += v;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

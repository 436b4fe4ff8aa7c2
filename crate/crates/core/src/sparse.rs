//! Compressed sparse row matrices and a direct LU wrapper.

use std::fmt::Write as _;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, indptr: vec![0; nrows + 1], indices: vec![], values: vec![] }
    }

    /// Builds a matrix from `(row, col, value)` entries, summing duplicates
    /// in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; nrows + 1];
        for &(r, _, _) in entries {
            count[r + 1] += 1;
        }
        for i in 0..nrows {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        for &(r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..nrows {
            row.clear();
            row.extend((count[r]..count[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            for &(c, v) in &row {
                if indices.len() > indptr[r] && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self { nrows, ncols, indptr, indices, values }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { nrows: n, ncols: n, indptr: (0..=n).collect(), indices: (0..n).collect(), values: d.to_vec() }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let s = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match s.binary_search(&j) {
            Ok(k) => self.values[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    /// `selfᵀ x`.
    pub fn tmul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// `alpha * self + beta * other`.
    pub fn add(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| (i, j, alpha * v)).collect();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, beta * v)));
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `diag(left) · self · diag(right)`.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] *= left[i] * right[self.indices[k]];
            }
        }
        out
    }

    /// Principal submatrix on the given indices (in that order).
    pub fn restrict(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut t = Vec::new();
        for (ni, &oi) in keep.iter().enumerate() {
            for (j, v) in self.row(oi) {
                if map[j] != usize::MAX {
                    t.push((ni, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &t)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(1.0, other, -1.0).values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Coordinate text: one `row col value` line per stored entry.
    pub fn to_triplet_text(&self) -> String {
        let mut s = format!("% {} {} {}\n", self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.triplets() {
            let _ = writeln!(s, "{i} {j} {v:.17e}");
        }
        s
    }

    pub fn lu(&self) -> Result<SparseLu> {
        SparseLu::new(self)
    }
}

/// Sparse LU factorization with partial pivoting.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Solver(format!("LU of non-square {}x{} matrix", a.nrows, a.ncols)));
        }
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("matrix has non-finite entries".into()));
        }
        let t: Vec<Triplet<usize, usize, f64>> =
            a.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &t)
            .map_err(|e| Error::Solver(format!("sparse matrix construction: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::SingularSystem(format!("LU factorization: {e:?}")))?;
        Ok(Self { n: a.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn run(&self, b: &[f64], transpose: bool) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        if transpose {
            self.lu.solve_transpose_in_place(rhs.as_mut());
        } else {
            self.lu.solve_in_place(rhs.as_mut());
        }
        let x: Vec<f64> = (0..self.n).map(|i| rhs[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("solve produced non-finite values".into()));
        }
        Ok(x)
    }

    /// Solves `A X = B` for several right-hand sides at once.
    pub fn solve_many(&self, bs: &[Vec<f64>], transpose: bool) -> Result<Vec<Vec<f64>>> {
        let mut rhs = Mat::from_fn(self.n, bs.len(), |i, j| bs[j][i]);
        if transpose {
            self.lu.solve_transpose_in_place(rhs.as_mut());
        } else {
            self.lu.solve_in_place(rhs.as_mut());
        }
        let out: Vec<Vec<f64>> = (0..bs.len()).map(|j| (0..self.n).map(|i| rhs[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("solve produced non-finite values".into()));
        }
        Ok(out)
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, false)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.run(b, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, -2.0), (1, 1, 5.0), (1, 2, 1.0), (2, 1, 3.0), (2, 2, 6.0), (0, 0, 1.0)],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.get(0, 0), 5.0);
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.get(2, 0), 0.0);
    }

    #[test]
    fn products_and_transpose() {
        let a = sample();
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a.mul_vec(&x), vec![7.0, 11.0, 24.0]);
        assert_eq!(a.tmul_vec(&x), a.transpose().mul_vec(&x));
    }

    #[test]
    fn lu_solves_both_ways() {
        let a = sample();
        let lu = a.lu().unwrap();
        let b = [1.0, -1.0, 2.0];
        let x = lu.solve(&b).unwrap();
        let r = a.mul_vec(&x);
        let y = lu.solve_transpose(&b).unwrap();
        let s = a.tmul_vec(&y);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-13);
            assert!((s[i] - b[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn restrict_and_scale() {
        let a = sample();
        let r = a.restrict(&[2, 1]);
        assert_eq!(r.get(0, 0), 6.0);
        assert_eq!(r.get(0, 1), 3.0);
        assert_eq!(r.get(1, 0), 1.0);
        let s = a.scale_rows_cols(&[1.0, 2.0, 3.0], &[1.0, 1.0, 0.5]);
        assert_eq!(s.get(2, 2), 9.0);
        assert_eq!(s.get(1, 0), -4.0);
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(a.lu().and_then(|l| l.solve(&[1.0, 1.0])).is_err());
    }
}

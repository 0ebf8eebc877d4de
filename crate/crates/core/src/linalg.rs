//! Sparse matrices and the linear-solver seam used by every Newton iteration.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Mat, MatMut};

use crate::error::{Error, Result};

/// Compressed sparse column matrix with sorted, duplicate-free row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros are kept so the pattern does not depend on values.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].1, triplets[k].0));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        CscMatrix {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn same_pattern(&self, other: &CscMatrix) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.col_ptr == other.col_ptr
            && self.row_idx == other.row_idx
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(k) => self.values[self.col_ptr[c] + k],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// y = Aᵀ x
    pub fn tr_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ncols)
            .map(|c| {
                (self.col_ptr[c]..self.col_ptr[c + 1])
                    .map(|k| self.values[k] * x[self.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                d[self.row_idx[k]][c] += self.values[k];
            }
        }
        d
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                out.push((self.row_idx[k], c, self.values[k]));
            }
        }
        out
    }
}

/// Solves square systems A x = b. Implementations may cache symbolic work
/// between calls that share a sparsity pattern.
pub trait LinearSolver: Send {
    fn solve(&mut self, a: &CscMatrix, rhs: &[f64]) -> Result<Vec<f64>>;
}

/// Sparse LU with fill-reducing ordering and partial pivoting (faer backend).
#[derive(Default)]
pub struct SparseLu {
    cached: Option<(SymbolicSparseColMat<usize>, SymbolicLu<usize>)>,
}

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl LinearSolver for SparseLu {
    fn solve(&mut self, a: &CscMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(a.nrows, a.ncols, "square system expected");
        assert_eq!(rhs.len(), a.nrows);
        let reuse = matches!(&self.cached, Some((pattern, _))
            if pattern.col_ptr() == a.col_ptr.as_slice() && pattern.row_idx() == a.row_idx.as_slice());
        if !reuse {
            let pattern = SymbolicSparseColMat::new_checked(
                a.nrows,
                a.ncols,
                a.col_ptr.clone(),
                None,
                a.row_idx.clone(),
            );
            let symbolic =
                SymbolicLu::try_new(pattern.as_ref()).map_err(|_| Error::SingularSystem)?;
            self.cached = Some((pattern, symbolic));
        }
        let (pattern, symbolic) = self.cached.as_ref().unwrap();
        let mat = SparseColMatRef::new(pattern.as_ref(), &a.values);
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat)
            .map_err(|_| Error::SingularSystem)?;
        let mut x = rhs.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, a.nrows, 1));
        finite_or_singular(x)
    }
}

/// Dense LU with partial pivoting; for small systems and cross-checks.
#[derive(Default)]
pub struct DenseLu;

impl LinearSolver for DenseLu {
    fn solve(&mut self, a: &CscMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(a.nrows, a.ncols, "square system expected");
        let n = a.nrows;
        let mut m = Mat::<f64>::zeros(n, n);
        for c in 0..n {
            for k in a.col_ptr[c]..a.col_ptr[c + 1] {
                m[(a.row_idx[k], c)] += a.values[k];
            }
        }
        let lu = m.partial_piv_lu();
        let mut x = rhs.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        finite_or_singular(x)
    }
}

fn finite_or_singular(x: Vec<f64>) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem)
    }
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

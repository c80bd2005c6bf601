//! Sparse symmetric positive definite matrices and their Cholesky factors.
//!
//! Only the lower triangle is stored. A [`SparsePattern`] owns the symbolic
//! factorization, so matrices that share a pattern (same grid, sector and
//! Dirichlet mask) reuse it across numeric refactorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, MatMut, Side};
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("dense eigendecomposition failed")]
    DenseEigen,
}

#[derive(Debug)]
struct PatternInner {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    diag_pos: Vec<usize>,
    slots: Vec<usize>,
    symbolic: OnceLock<Result<SymbolicLlt<usize>, String>>,
}

/// Lower-triangular CSC sparsity pattern plus the slot of every assembly entry.
#[derive(Debug, Clone)]
pub struct SparsePattern(Arc<PatternInner>);

impl SparsePattern {
    /// Builds a pattern from `(row, col)` assembly entries. Entries above the
    /// diagonal are mirrored; repeated entries share a slot. Every diagonal
    /// position must appear at least once.
    pub fn from_entries(n: usize, entries: &[(usize, usize)]) -> Self {
        let lower: Vec<(usize, usize)> =
            entries.iter().map(|&(r, c)| if r >= c { (r, c) } else { (c, r) }).collect();
        let mut order: Vec<usize> = (0..lower.len()).collect();
        order.sort_by_key(|&k| (lower[k].1, lower[k].0));
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lower.len());
        let mut slots = vec![0usize; lower.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c) = lower[k];
            if last != Some((r, c)) {
                row_idx.push(r);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
            slots[k] = row_idx.len() - 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }
        let diag_pos = (0..n)
            .map(|c| {
                (col_ptr[c]..col_ptr[c + 1])
                    .find(|&p| row_idx[p] == c)
                    .expect("every diagonal entry must be present")
            })
            .collect();
        SparsePattern(Arc::new(PatternInner {
            n,
            col_ptr,
            row_idx,
            diag_pos,
            slots,
            symbolic: OnceLock::new(),
        }))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn nnz(&self) -> usize {
        self.0.row_idx.len()
    }

    /// Sums assembly values (in entry order) into a matrix on this pattern.
    pub fn assemble(&self, entry_values: &[f64]) -> SpdMatrix {
        assert_eq!(entry_values.len(), self.0.slots.len());
        let mut values = vec![0.0; self.nnz()];
        for (&slot, &v) in self.0.slots.iter().zip(entry_values) {
            values[slot] += v;
        }
        SpdMatrix { pattern: self.clone(), values }
    }

    fn symbolic_ref(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.0.n, self.0.n, &self.0.col_ptr, None, &self.0.row_idx)
    }

    fn symbolic(&self) -> Result<SymbolicLlt<usize>, LinalgError> {
        self.0
            .symbolic
            .get_or_init(|| SymbolicLlt::try_new(self.symbolic_ref(), Side::Lower).map_err(|e| format!("{e:?}")))
            .clone()
            .map_err(LinalgError::Factorization)
    }
}

/// Symmetric matrix stored by its lower triangle.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    pattern: SparsePattern,
    values: Vec<f64>,
}

impl SpdMatrix {
    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.pattern.0.diag_pos.iter().map(|&p| self.values[p]).collect()
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (&p, &v) in self.pattern.0.diag_pos.iter().zip(d) {
            self.values[p] += v;
        }
    }

    /// `self + c·diag(d)` as a new matrix.
    pub fn shifted(&self, c: f64, d: &[f64]) -> SpdMatrix {
        let mut out = self.clone();
        for (&p, &v) in out.pattern.0.diag_pos.iter().zip(d) {
            out.values[p] += c * v;
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern.0;
        let mut y = vec![0.0; p.n];
        for c in 0..p.n {
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                let r = p.row_idx[k];
                let v = self.values[k];
                y[r] += v * x[c];
                if r != c {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    pub fn factor(&self) -> Result<SpdFactor, LinalgError> {
        let symbolic = self.pattern.symbolic()?;
        let mat = SparseColMatRef::new(self.pattern.symbolic_ref(), &self.values);
        match Llt::try_new_with_symbolic(symbolic, mat, Side::Lower) {
            Ok(llt) => Ok(SpdFactor { llt, n: self.n() }),
            Err(faer::sparse::linalg::LltError::Numeric(_)) => Err(LinalgError::NotPositiveDefinite),
            Err(e) => Err(LinalgError::Factorization(format!("{e:?}"))),
        }
    }
}

/// Numeric sparse Cholesky factor.
pub struct SpdFactor {
    llt: Llt<usize, f64>,
    n: usize,
}

impl SpdFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        self.llt.solve_in_place(b.as_mut());
        (0..self.n).map(|i| b[(i, 0)]).collect()
    }

    pub fn solve_block(&self, rhs: MatMut<'_, f64>) {
        self.llt.solve_in_place(rhs);
    }
}

/// Eigenpairs of a small dense symmetric matrix, ascending.
pub fn dense_symmetric_eigen(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), LinalgError> {
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| LinalgError::DenseEigen)?;
    let s = evd.S().column_vector();
    let vals = (0..a.nrows()).map(|i| s[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SpdMatrix {
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            vals.push(2.0);
            if i + 1 < n {
                entries.push((i, i + 1));
                vals.push(-1.0);
                entries.push((i + 1, i));
                vals.push(-1.0);
            }
        }
        SparsePattern::from_entries(n, &entries).assemble(&vals)
    }

    #[test]
    fn duplicates_are_summed_and_mirrored() {
        let a = laplacian_1d(5);
        // (i, i+1) and (i+1, i) land in the same lower slot, so off-diagonals are -2.
        let y = a.mul_vec(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(y, vec![2.0, -2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cholesky_solves_and_refactors() {
        let n = 50;
        let mut entries = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            entries.push((i, i));
            vals.push(2.0);
            if i + 1 < n {
                entries.push((i + 1, i));
                vals.push(-1.0);
            }
        }
        let pattern = SparsePattern::from_entries(n, &entries);
        let a = pattern.assemble(&vals);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x);
        let sol = a.factor().unwrap().solve(&b);
        for (s, t) in sol.iter().zip(&x) {
            assert!((s - t).abs() < 1e-10);
        }
        let shifted = a.shifted(1.0, &vec![0.5; n]);
        let b = shifted.mul_vec(&x);
        let sol = shifted.factor().unwrap().solve(&b);
        for (s, t) in sol.iter().zip(&x) {
            assert!((s - t).abs() < 1e-10);
        }
        let indefinite = a.shifted(-1.0, &vec![5.0; n]);
        assert_eq!(indefinite.factor().err(), Some(LinalgError::NotPositiveDefinite));
    }

    #[test]
    fn dense_eigen_sorted() {
        let a = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let (vals, _) = dense_symmetric_eigen(&a).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }
}

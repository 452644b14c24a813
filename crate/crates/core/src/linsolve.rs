//! Sparse direct solves (LU with fill-reducing ordering, and Cholesky for
//! SPD blocks) plus the bookkeeping that removes constrained unknowns from a
//! system before factorization.

use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::linalg::solvers::Solve;
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Relative backward-error bound every accepted solve must meet:
/// `|K x - b| <= SOLVE_RTOL * (|K| |x| + |b|)` in the infinity norm.
pub const SOLVE_RTOL: f64 = 1e-10;

const MAX_REFINEMENT_STEPS: usize = 3;

fn csc_mul(n: usize, col_ptr: &[usize], row_idx: &[usize], values: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for c in 0..n {
        let xc = x[c];
        for k in col_ptr[c]..col_ptr[c + 1] {
            y[row_idx[k]] += values[k] * xc;
        }
    }
    y
}

fn csc_norm_inf(n: usize, col_ptr: &[usize], row_idx: &[usize], values: &[f64]) -> f64 {
    let mut rows = vec![0.0; n];
    for c in 0..n {
        for k in col_ptr[c]..col_ptr[c + 1] {
            rows[row_idx[k]] += values[k].abs();
        }
    }
    rows.into_iter().fold(0.0, f64::max)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// LU solver that keeps the symbolic factorization of the last pattern it
/// saw, so repeated solves with a fixed sparsity pattern only refactor
/// numerically.
#[derive(Default)]
pub struct DirectSolver {
    cached: Option<CachedSymbolic>,
}

struct CachedSymbolic {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicLu<usize>,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves a square system stored column-compressed.
    pub fn solve_csc(
        &mut self,
        n: usize,
        col_ptr: &[usize],
        row_idx: &[usize],
        values: &[f64],
        rhs: &[f64],
    ) -> Result<Vec<f64>> {
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let sym = SymbolicSparseColMatRef::new_checked(n, n, col_ptr, None, row_idx);
        let reuse = matches!(&self.cached, Some(c) if c.col_ptr == col_ptr && c.row_idx == row_idx);
        if !reuse {
            let symbolic = SymbolicLu::try_new(sym)
                .map_err(|e| Error::Singular(format!("symbolic LU failed: {e:?}")))?;
            self.cached = Some(CachedSymbolic {
                col_ptr: col_ptr.to_vec(),
                row_idx: row_idx.to_vec(),
                symbolic,
            });
        }
        let symbolic = self.cached.as_ref().unwrap().symbolic.clone();
        let mat = SparseColMatRef::new(sym, values);
        let lu = Lu::try_new_with_symbolic(symbolic, mat)
            .map_err(|e| Error::Singular(format!("LU factorization failed: {e:?}")))?;

        let mut x = rhs.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("LU solve produced non-finite values".into()));
        }

        let k_norm = csc_norm_inf(n, col_ptr, row_idx, values);
        let b_norm = norm_inf(rhs);
        for _ in 0..MAX_REFINEMENT_STEPS {
            let kx = csc_mul(n, col_ptr, row_idx, values, &x);
            let mut r: Vec<f64> = rhs.iter().zip(&kx).map(|(b, y)| b - y).collect();
            if norm_inf(&r) <= SOLVE_RTOL * (k_norm * norm_inf(&x) + b_norm) {
                return Ok(x);
            }
            lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, n, 1));
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        let kx = csc_mul(n, col_ptr, row_idx, values, &x);
        let r = norm_inf(&rhs.iter().zip(&kx).map(|(b, y)| b - y).collect::<Vec<_>>());
        if r <= SOLVE_RTOL * (k_norm * norm_inf(&x) + b_norm) {
            Ok(x)
        } else {
            Err(Error::Singular(format!(
                "near-singular system: backward error {:.3e} after refinement",
                r / (k_norm * norm_inf(&x) + b_norm)
            )))
        }
    }

    pub fn solve(&mut self, system: &SparseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
        if system.nrows() != system.ncols() {
            return Err(Error::InvalidArgument("linear_solve needs a square system".into()));
        }
        let (col_ptr, row_idx, values) = system.to_csc();
        self.solve_csc(system.nrows(), &col_ptr, &row_idx, &values, rhs)
    }
}

/// One-shot sparse LU solve of `system x = rhs`.
pub fn linear_solve(system: &SparseOperator, rhs: &[f64]) -> Result<Vec<f64>> {
    DirectSolver::new().solve(system, rhs)
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdFactor {
    n: usize,
    llt: Llt<usize, f64>,
}

impl SpdFactor {
    pub fn new(matrix: &SparseOperator) -> Result<Self> {
        let n = matrix.nrows();
        if n != matrix.ncols() {
            return Err(Error::InvalidArgument("Cholesky needs a square matrix".into()));
        }
        faer::set_global_parallelism(faer::Par::Seq);
        let (col_ptr, row_idx, values) = matrix.to_csc();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &col_ptr, None, &row_idx);
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower)
            .map_err(|e| Error::Singular(format!("symbolic Cholesky failed: {e:?}")))?;
        let llt = Llt::try_new_with_symbolic(symbolic, SparseColMatRef::new(sym, &values), Side::Lower)
            .map_err(|e| Error::Singular(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self { n, llt })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let mut x = rhs.to_vec();
        if self.n > 0 {
            self.llt
                .solve_in_place(MatMut::from_column_major_slice_mut(&mut x, self.n, 1));
        }
        x
    }
}

/// Maps a full system onto its free unknowns.
///
/// Rows of fixed unknowns are dropped and their columns are moved to the
/// right-hand side, which is the same linear algebra as replacing those rows
/// by identity rows and eliminating the columns symmetrically.
#[derive(Clone, Debug)]
pub struct Elimination {
    n_full: usize,
    free: Vec<usize>,
    full_to_free: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// For each slot of the full CSR pattern: destination slot in the reduced
    /// CSC values, or `usize::MAX`.
    slot_map: Vec<usize>,
    /// `(free row, full slot, fixed column)` couplings moved to the rhs.
    couplings: Vec<(usize, usize, usize)>,
}

impl Elimination {
    pub fn new(pattern: &SparseOperator, fixed: &[bool]) -> Self {
        let n = pattern.nrows();
        assert_eq!(n, pattern.ncols());
        assert_eq!(fixed.len(), n);
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let mut full_to_free = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            full_to_free[i] = k;
        }
        let nf = free.len();

        let mut counts = vec![0usize; nf + 1];
        let mut couplings = Vec::new();
        for &r in &free {
            for k in pattern.row_ptr()[r]..pattern.row_ptr()[r + 1] {
                let c = pattern.col_idx()[k];
                if fixed[c] {
                    couplings.push((full_to_free[r], k, c));
                } else {
                    counts[full_to_free[c] + 1] += 1;
                }
            }
        }
        for i in 0..nf {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut row_idx = vec![0usize; counts[nf]];
        let mut slot_map = vec![usize::MAX; pattern.nnz()];
        // rows are visited in increasing order, so row indices within each
        // column come out sorted
        for &r in &free {
            let fr = full_to_free[r];
            for k in pattern.row_ptr()[r]..pattern.row_ptr()[r + 1] {
                let c = pattern.col_idx()[k];
                if !fixed[c] {
                    let fc = full_to_free[c];
                    row_idx[next[fc]] = fr;
                    slot_map[k] = next[fc];
                    next[fc] += 1;
                }
            }
        }
        Self {
            n_full: n,
            free,
            full_to_free,
            col_ptr: counts,
            row_idx,
            slot_map,
            couplings,
        }
    }

    pub fn n_full(&self) -> usize {
        self.n_full
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn is_fixed(&self, i: usize) -> bool {
        self.full_to_free[i] == usize::MAX
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    /// Reduced CSC values and right-hand side for full values on the
    /// elimination's pattern; `prescribed` holds the fixed values
    /// (full-length, entries at free positions ignored).
    pub fn reduce(&self, values: &[f64], rhs: &[f64], prescribed: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(values.len(), self.slot_map.len());
        let mut reduced = vec![0.0; self.row_idx.len()];
        for (k, &dst) in self.slot_map.iter().enumerate() {
            if dst != usize::MAX {
                reduced[dst] = values[k];
            }
        }
        let mut b: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        for &(fr, k, c) in &self.couplings {
            b[fr] -= values[k] * prescribed[c];
        }
        (reduced, b)
    }

    /// Full vector from the free solution and the prescribed values; fixed
    /// entries are copied verbatim.
    pub fn expand(&self, x_free: &[f64], prescribed: &[f64]) -> Vec<f64> {
        let mut x = prescribed.to_vec();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = x_free[k];
        }
        x
    }

    /// The reduced matrix as a CSR operator (free rows, free columns).
    pub fn reduced_operator(&self, csc_values: &[f64]) -> SparseOperator {
        // CSC of A is CSR of A^T
        let nf = self.n_free();
        SparseOperator::from_csr(nf, nf, self.col_ptr.clone(), self.row_idx.clone(), csc_values.to_vec())
            .expect("elimination pattern is sorted")
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let x = linear_solve(&SparseOperator::identity(5), &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn saddle_point_with_zero_diagonal() {
        // [2 0 1; 0 2 1; 1 1 0]
        let k = SparseOperator::from_triplets(
            3,
            3,
            &[(0, 0, 2.0), (1, 1, 2.0), (0, 2, 1.0), (1, 2, 1.0), (2, 0, 1.0), (2, 1, 1.0)],
        );
        let x = linear_solve(&k, &[3.0, 1.0, 0.0]).unwrap();
        let r = k.mul_vec(&x);
        for (a, b) in r.iter().zip([3.0, 1.0, 0.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_is_reported() {
        let k = SparseOperator::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(linear_solve(&k, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0 + i as f64 * 0.01));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.3));
            }
        }
        let k = SparseOperator::from_triplets(n, n, &t);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut solver = DirectSolver::new();
        let x1 = solver.solve(&k, &b).unwrap();
        let x2 = solver.solve(&k, &b).unwrap();
        let x3 = linear_solve(&k, &b).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(x1, x3);
    }

    #[test]
    fn elimination_matches_identity_rows() {
        // 3x3 SPD system with x1 fixed to 2
        let k = SparseOperator::from_triplets(
            3,
            3,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 1, 1.0), (2, 2, 5.0)],
        );
        let fixed = [false, true, false];
        let e = Elimination::new(&k, &fixed);
        let prescribed = [0.0, 2.0, 0.0];
        let (vals, b) = e.reduce(k.values(), &[1.0, 0.0, 1.0], &prescribed);
        let mut solver = DirectSolver::new();
        let xf = solver.solve_csc(2, e.col_ptr(), e.row_idx(), &vals, &b).unwrap();
        let x = e.expand(&xf, &prescribed);
        assert_eq!(x[1], 2.0);
        assert!((4.0 * x[0] + 2.0 - 1.0).abs() < 1e-14);
        assert!((5.0 * x[2] + 2.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_solves() {
        let k = SparseOperator::from_triplets(2, 2, &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]);
        let f = SpdFactor::new(&k).unwrap();
        let x = f.solve(&[1.0, 2.0]);
        let r = k.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14);
        let bad = SparseOperator::from_triplets(2, 2, &[(0, 0, -1.0), (1, 1, 1.0)]);
        assert!(SpdFactor::new(&bad).is_err());
    }
}

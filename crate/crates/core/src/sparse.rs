//! Symmetric sparse matrices on a shared sparsity pattern and SPD solvers.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::pattern::SparsityPattern;
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};

/// Systems above this size are solved iteratively.
pub const DIRECT_SOLVER_LIMIT: usize = 50_000;
/// Relative residual target for all linear solves.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// Symmetric matrix in CSR layout. All operators of one finite element
/// space share a pattern, so linear combinations act on value arrays.
#[derive(Debug, Clone)]
pub struct SparseSpd {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseSpd {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let nnz = pattern.nnz();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    pub fn from_parts(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Self {
        assert_eq!(
            pattern.nnz(),
            values.len(),
            "value count does not match pattern"
        );
        Self { pattern, values }
    }

    pub fn dim(&self) -> usize {
        self.pattern.major_dim()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Position of `(row, col)` in the value array, if structurally present.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let offsets = self.pattern.major_offsets();
        let cols = &self.pattern.minor_indices()[offsets[row]..offsets[row + 1]];
        cols.binary_search(&col).ok().map(|i| offsets[row] + i)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |p| self.values[p])
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let offsets = self.pattern.major_offsets();
        let cols = self.pattern.minor_indices();
        (0..self.dim()).flat_map(move |r| {
            (offsets[r]..offsets[r + 1]).map(move |p| (r, cols[p], self.values[p]))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let offsets = self.pattern.major_offsets();
        let cols = self.pattern.minor_indices();
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in offsets[r]..offsets[r + 1] {
                s += self.values[p] * x[cols[p]];
            }
            *yr = s;
        }
    }

    /// `a * self + b * other` on the shared pattern.
    pub fn lincomb(&self, a: f64, other: &SparseSpd, b: f64) -> SparseSpd {
        assert!(
            Arc::ptr_eq(&self.pattern, &other.pattern) || *self.pattern == *other.pattern,
            "matrices live on different patterns"
        );
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        SparseSpd {
            pattern: self.pattern.clone(),
            values,
        }
    }

    pub fn scaled(&self, a: f64) -> SparseSpd {
        SparseSpd {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// `self += a * other`.
    pub fn add_scaled(&mut self, a: f64, other: &SparseSpd) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn symmetry_defect(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
            / scale
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    /// Coordinate text format: a `rows cols nnz` header then one-based
    /// `i j value` lines.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.dim(), self.dim(), self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v);
        }
        out
    }

    /// Factorizes the matrix for repeated solves.
    pub fn factor(&self) -> Result<SpdSolver> {
        SpdSolver::new(self)
    }
}

/// Solver for an SPD system: sparse Cholesky for moderate sizes and
/// Jacobi-preconditioned conjugate gradients above [`DIRECT_SOLVER_LIMIT`].
pub enum SpdSolver {
    Empty,
    Direct(CscCholesky<f64>),
    Iterative {
        matrix: SparseSpd,
        inv_diag: Vec<f64>,
    },
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdSolver::Empty => write!(f, "SpdSolver::Empty"),
            SpdSolver::Direct(_) => write!(f, "SpdSolver::Direct"),
            SpdSolver::Iterative { matrix, .. } => {
                write!(f, "SpdSolver::Iterative(n={})", matrix.dim())
            }
        }
    }
}

impl SpdSolver {
    pub fn new(matrix: &SparseSpd) -> Result<Self> {
        Self::with_limit(matrix, DIRECT_SOLVER_LIMIT)
    }

    /// Chooses the direct path when `matrix.dim() <= limit`.
    pub fn with_limit(matrix: &SparseSpd, limit: usize) -> Result<Self> {
        let n = matrix.dim();
        if n == 0 {
            return Ok(SpdSolver::Empty);
        }
        if n <= limit {
            // A symmetric CSR matrix is its own CSC representation.
            let csc = CscMatrix::try_from_pattern_and_values(
                (*matrix.pattern).clone(),
                matrix.values.clone(),
            )
            .map_err(|e| Error::Internal(format!("pattern conversion: {e}")))?;
            let chol = CscCholesky::factor(&csc).map_err(|e| Error::NumericFailure {
                message: format!("Cholesky factorization failed: {e}"),
                residual: f64::NAN,
            })?;
            Ok(SpdSolver::Direct(chol))
        } else {
            let inv_diag = (0..n)
                .map(|i| {
                    let d = matrix.get(i, i);
                    if d > 0.0 {
                        Ok(1.0 / d)
                    } else {
                        Err(Error::NumericFailure {
                            message: format!("non-positive diagonal entry at {i}"),
                            residual: f64::NAN,
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SpdSolver::Iterative {
                matrix: matrix.clone(),
                inv_diag,
            })
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Empty => Ok(Vec::new()),
            SpdSolver::Direct(chol) => {
                let mut b = DVector::from_column_slice(rhs);
                chol.solve_mut(&mut b);
                Ok(b.data.into())
            }
            SpdSolver::Iterative { matrix, inv_diag } => pcg(matrix, inv_diag, rhs),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg(a: &SparseSpd, inv_diag: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= SOLVER_TOLERANCE * bnorm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NumericFailure {
        message: "conjugate gradients did not converge".into(),
        residual: dot(&r, &r).sqrt() / bnorm,
    })
}

/// Relative residual `|A x - b| / |b|` (0 when `b = 0` and `x` solves).
pub fn relative_residual(a: &SparseSpd, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q).powi(2))
        .sum::<f64>()
        .sqrt();
    let bn = dot(b, b).sqrt();
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}

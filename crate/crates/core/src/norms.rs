//! Discrete L2, H1 and H^{-1} geometries on a finite element space, operator
//! chains built from mass-weighted factors, and operator norms by Lanczos
//! iteration.

use std::sync::Arc;

use crate::assembly::{assemble_laplacian, assemble_mass};
use crate::error::{Error, Result};
use crate::fem::FeSpace;
use crate::problem::dot;
use crate::sparse::{SparseSpd, SpdSolver};

/// Relative residual of the leading Ritz pair at which Lanczos stops.
pub const NORM_TOLERANCE: f64 = 1e-13;
/// Iteration cap for Lanczos.
pub const LANCZOS_MAX_ITER: usize = 400;

/// Norm on coefficient vectors of the discrete space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// `(v^T M v)^{1/2}`.
    L2,
    /// `(v^T (K0 + M) v)^{1/2}` with `K0` the Dirichlet Laplacian.
    H1,
    /// Dual of [`NormKind::H1`] through the L2 pairing: `((Mv)^T (K0 + M)^{-1} Mv)^{1/2}`.
    Hm1,
}

/// Gram matrices of the three norms with their factorizations.
pub struct Geometry {
    mass: Arc<SparseSpd>,
    mass_solver: Arc<SpdSolver>,
    h1: SparseSpd,
    h1_solver: SpdSolver,
}

impl Geometry {
    pub fn new(space: &FeSpace) -> Result<Self> {
        let mass = assemble_mass(space);
        let mass_solver = mass.factor()?;
        Self::with_mass(space, Arc::new(mass), Arc::new(mass_solver))
    }

    /// Reuses an already assembled mass matrix.
    pub fn with_mass(
        space: &FeSpace,
        mass: Arc<SparseSpd>,
        mass_solver: Arc<SpdSolver>,
    ) -> Result<Self> {
        let h1 = assemble_laplacian(space).lincomb(1.0, &mass, 1.0);
        let h1_solver = h1.factor()?;
        Ok(Self {
            mass,
            mass_solver,
            h1,
            h1_solver,
        })
    }

    pub fn mass(&self) -> &Arc<SparseSpd> {
        &self.mass
    }

    pub fn mass_solver(&self) -> &Arc<SpdSolver> {
        &self.mass_solver
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// `G v` for the Gram matrix `G` of `kind`.
    pub fn gram(&self, kind: NormKind, v: &[f64]) -> Result<Vec<f64>> {
        match kind {
            NormKind::L2 => Ok(self.mass.mul_vec(v)),
            NormKind::H1 => Ok(self.h1.mul_vec(v)),
            NormKind::Hm1 => {
                let z = self.h1_solver.solve(&self.mass.mul_vec(v))?;
                Ok(self.mass.mul_vec(&z))
            }
        }
    }

    /// `G^{-1} v`.
    pub fn gram_solve(&self, kind: NormKind, v: &[f64]) -> Result<Vec<f64>> {
        match kind {
            NormKind::L2 => self.mass_solver.solve(v),
            NormKind::H1 => self.h1_solver.solve(v),
            NormKind::Hm1 => {
                let z = self.mass_solver.solve(v)?;
                let z = self.h1.mul_vec(&z);
                self.mass_solver.solve(&z)
            }
        }
    }

    pub fn norm(&self, kind: NormKind, v: &[f64]) -> Result<f64> {
        Ok(dot(v, &self.gram(kind, v)?).max(0.0).sqrt())
    }
}

/// One factor of an operator chain, acting on coefficient vectors.
#[derive(Clone)]
pub enum Factor {
    /// `M^{-1} S`: the operator form of a stiffness-type matrix.
    MassInverse(Arc<SparseSpd>),
    /// `S^{-1} M`, given a factorization of `S`. With `S = M + k K` this is
    /// the resolvent factor `(I + k A)^{-1}`.
    SolveMass(Arc<SpdSolver>),
    Scale(f64),
}

/// Product `F_1 F_2 ... F_n` of factors; application runs right to left.
#[derive(Clone)]
pub struct Chain {
    factors: Vec<Factor>,
    mass: Arc<SparseSpd>,
    mass_solver: Arc<SpdSolver>,
}

impl Chain {
    pub fn new(mass: Arc<SparseSpd>, mass_solver: Arc<SpdSolver>) -> Self {
        Self {
            factors: Vec::new(),
            mass,
            mass_solver,
        }
    }

    /// Appends a factor on the right.
    pub fn then(mut self, f: Factor) -> Self {
        self.factors.push(f);
        self
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = x.to_vec();
        for f in self.factors.iter().rev() {
            v = match f {
                Factor::MassInverse(s) => self.mass_solver.solve(&s.mul_vec(&v))?,
                Factor::SolveMass(solver) => solver.solve(&self.mass.mul_vec(&v))?,
                Factor::Scale(c) => v.iter().map(|x| c * x).collect(),
            };
        }
        Ok(v)
    }

    /// Euclidean transpose: `(M^{-1} S)^T = S M^{-1}`, `(S^{-1} M)^T = M S^{-1}`.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut v = y.to_vec();
        for f in &self.factors {
            v = match f {
                Factor::MassInverse(s) => s.mul_vec(&self.mass_solver.solve(&v)?),
                Factor::SolveMass(solver) => self.mass.mul_vec(&solver.solve(&v)?),
                Factor::Scale(c) => v.iter().map(|x| c * x).collect(),
            };
        }
        Ok(v)
    }
}

/// Result of a norm estimate.
#[derive(Debug, Clone, Copy)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn start_vector(n: usize) -> Vec<f64> {
    // Deterministic and without symmetry, so it is not orthogonal to the
    // dominant singular vector of symmetric meshes.
    (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662466927).fract())
        .collect()
}

fn largest_ritz(alpha: &[f64], beta: &[f64]) -> (f64, f64) {
    let j = alpha.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(j, j);
    for i in 0..j {
        t[(i, i)] = alpha[i];
        if i + 1 < j {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let (idx, theta) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    (theta, eig.eigenvectors[(j - 1, idx)].abs())
}

/// `||B||_{X -> Y}` as the square root of the largest eigenvalue of the
/// `G_X`-self-adjoint operator `C = G_X^{-1} B^T G_Y B`, by Lanczos with full
/// reorthogonalization in the `G_X` inner product.
pub fn operator_norm(
    chain: &Chain,
    geometry: &Geometry,
    from: NormKind,
    to: NormKind,
) -> Result<NormEstimate> {
    let n = geometry.dim();
    if n == 0 {
        return Ok(NormEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        });
    }
    let mut v = start_vector(n);
    let nv = geometry.norm(from, &v)?;
    v.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut gbasis: Vec<Vec<f64>> = Vec::new();
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let cap = n.min(LANCZOS_MAX_ITER);
    let mut theta = 0.0;
    for it in 1..=cap {
        let gv = geometry.gram(from, &v)?;
        let bv = chain.apply(&v)?;
        let mut w = geometry.gram_solve(from, &chain.apply_transpose(&geometry.gram(to, &bv)?)?)?;
        let a = dot(&w, &gv);
        if !a.is_finite() {
            return Err(Error::NumericFailure {
                message: "norm iteration diverged".into(),
                residual: f64::NAN,
            });
        }
        basis.push(v);
        gbasis.push(gv);
        alpha.push(a);
        for _ in 0..2 {
            for (q, gq) in basis.iter().zip(&gbasis) {
                let c = dot(&w, gq);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = geometry.norm(from, &w)?;
        let check = it <= 40 || it % 10 == 0 || it == cap;
        let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max);
        let breakdown = b <= 1e-14 * scale || scale == 0.0;
        if check || breakdown {
            let (t, s) = largest_ritz(&alpha, &beta);
            theta = t.max(0.0);
            if breakdown || b * s <= NORM_TOLERANCE * theta {
                return Ok(NormEstimate {
                    value: theta.sqrt(),
                    iterations: it,
                    converged: true,
                });
            }
        }
        beta.push(b);
        v = w.into_iter().map(|x| x / b).collect();
    }
    Ok(NormEstimate {
        value: theta.sqrt(),
        iterations: cap,
        // The Krylov space is complete when the cap equals the dimension.
        converged: cap == n,
    })
}

/// Dense realization of a chain, column by column.
pub fn dense_matrix(chain: &Chain, n: usize) -> Result<nalgebra::DMatrix<f64>> {
    let mut d = nalgebra::DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chain.apply(&e)?;
        for (i, v) in col.into_iter().enumerate() {
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use nalgebra::DMatrix;

    fn geometry(n: usize, r: usize) -> (FeSpace, Geometry) {
        let s = FeSpace::new(Arc::new(Mesh::interval(0.0, 1.0, n).unwrap()), r).unwrap();
        let g = Geometry::new(&s).unwrap();
        (s, g)
    }

    fn sqrtm(a: &DMatrix<f64>) -> DMatrix<f64> {
        let e = a.clone().symmetric_eigen();
        let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.sqrt()));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    }

    #[test]
    fn transpose_is_the_euclidean_adjoint() {
        let (s, g) = geometry(7, 2);
        let k = Arc::new(assemble_laplacian(&s));
        let sys = Arc::new(g.mass().lincomb(1.0, &k, 0.3).factor().unwrap());
        let chain = Chain::new(g.mass().clone(), g.mass_solver().clone())
            .then(Factor::MassInverse(k))
            .then(Factor::SolveMass(sys))
            .then(Factor::Scale(0.7));
        let n = g.dim();
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs = dot(&chain.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &chain.apply_transpose(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn power_iteration_matches_dense_singular_value() {
        let (s, g) = geometry(9, 2);
        let n = g.dim();
        let k = Arc::new(assemble_laplacian(&s));
        let sys = Arc::new(g.mass().lincomb(1.0, &k, 0.05).factor().unwrap());
        let chain = Chain::new(g.mass().clone(), g.mass_solver().clone())
            .then(Factor::MassInverse(k))
            .then(Factor::SolveMass(sys.clone()))
            .then(Factor::SolveMass(sys));
        let b = dense_matrix(&chain, n).unwrap();
        let m = g.mass().to_dense();
        let h1 = m.clone() + assemble_laplacian(&s).to_dense();
        let hm1 = &m * h1.clone().try_inverse().unwrap() * &m;
        for (from, to, gx, gy) in [
            (NormKind::L2, NormKind::L2, &m, &m),
            (NormKind::L2, NormKind::H1, &m, &h1),
            (NormKind::Hm1, NormKind::L2, &hm1, &m),
        ] {
            let sx = sqrtm(gx);
            let sy = sqrtm(gy);
            let oracle = (&sy * &b * sx.try_inverse().unwrap())
                .singular_values()
                .max();
            let est = operator_norm(&chain, &g, from, to).unwrap();
            assert!(est.converged);
            assert!(
                (est.value - oracle).abs() <= 1e-8 * oracle,
                "{from:?}->{to:?}: {} vs {oracle}",
                est.value
            );
        }
    }

    #[test]
    fn identity_chain_has_unit_norm() {
        let (_, g) = geometry(6, 1);
        let chain = Chain::new(g.mass().clone(), g.mass_solver().clone());
        assert!(
            (operator_norm(&chain, &g, NormKind::L2, NormKind::L2)
                .unwrap()
                .value
                - 1.0)
                .abs()
                < 1e-12
        );
        let zero = chain.then(Factor::Scale(0.0));
        assert_eq!(
            operator_norm(&zero, &g, NormKind::L2, NormKind::L2)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn h1_dominates_l2_and_l2_dominates_hm1() {
        let (_, g) = geometry(10, 2);
        let v: Vec<f64> = (0..g.dim()).map(|i| ((i * i) as f64).sin()).collect();
        let l2 = g.norm(NormKind::L2, &v).unwrap();
        assert!(g.norm(NormKind::H1, &v).unwrap() >= l2);
        assert!(g.norm(NormKind::Hm1, &v).unwrap() <= l2);
        let w = g
            .gram_solve(NormKind::Hm1, &g.gram(NormKind::Hm1, &v).unwrap())
            .unwrap();
        for (a, b) in w.iter().zip(&v) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

//! Shared helpers for integration tests: an independent dense dG(0) solver.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use parabolic_dg::assembly::{default_load_order, default_stiffness_order};
use parabolic_dg::mesh::Point;
use parabolic_dg::problem::{InitialDatum, Source};
use parabolic_dg::{FeSpace, Mesh, ParabolicProblem, TimeGrid};

/// Gauss–Legendre nodes and weights on [0, 1] by Golub–Welsch.
pub fn gauss_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        let b = i as f64 / ((4 * i * i - 1) as f64).sqrt();
        j[(i, i - 1)] = b;
        j[(i - 1, i)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn points_for(degree: usize) -> usize {
    degree / 2 + 1
}

/// Monomial exponents of total degree at most `r` in `dim` variables.
fn monomials(dim: usize, r: usize) -> Vec<(i32, i32)> {
    let mut out = Vec::new();
    for total in 0..=r as i32 {
        for a in (0..=total).rev() {
            let b = total - a;
            if dim == 1 && b > 0 {
                continue;
            }
            out.push((a, b));
        }
    }
    out
}

struct Cell {
    dofs: Vec<Option<usize>>,
    /// Inverse Vandermonde: basis `i` = sum_j coef[(j, i)] * monomial_j.
    coef: DMatrix<f64>,
    /// Physical quadrature points and weights per requested order.
    origin: Point,
    axes: [[f64; 2]; 2],
    det: f64,
}

/// Dense Lagrange element built from the node coordinates of a space.
pub struct DenseFe {
    dim: usize,
    ndofs: usize,
    mono: Vec<(i32, i32)>,
    cells: Vec<Cell>,
}

fn pw(x: f64, e: i32) -> f64 {
    if e <= 0 {
        1.0
    } else {
        x.powi(e)
    }
}

impl DenseFe {
    pub fn new(space: &FeSpace) -> Self {
        let mesh: &Mesh = space.mesh();
        let dim = space.dim();
        let mono = monomials(dim, space.degree());
        let coords = space.node_coordinates();
        let cells = (0..space.num_cells())
            .map(|c| {
                let nodes = space.cell_nodes(c);
                let n = nodes.len();
                assert_eq!(n, mono.len());
                let mut v = DMatrix::<f64>::zeros(n, n);
                for (i, &node) in nodes.iter().enumerate() {
                    let x = coords[node];
                    for (j, &(a, b)) in mono.iter().enumerate() {
                        v[(i, j)] = pw(x[0], a) * pw(x[1], b);
                    }
                }
                let coef = v.try_inverse().expect("unisolvent nodes");
                let vs: Vec<Point> = mesh.cell(c).iter().map(|&k| mesh.vertices()[k]).collect();
                let e1 = [vs[1][0] - vs[0][0], vs[1][1] - vs[0][1]];
                let (e2, det) = if dim == 1 {
                    ([0.0, 0.0], e1[0].abs())
                } else {
                    let e2 = [vs[2][0] - vs[0][0], vs[2][1] - vs[0][1]];
                    (e2, (e1[0] * e2[1] - e1[1] * e2[0]).abs())
                };
                Cell {
                    dofs: nodes.iter().map(|&nd| space.dof_of_node(nd)).collect(),
                    coef,
                    origin: vs[0],
                    axes: [e1, e2],
                    det,
                }
            })
            .collect();
        Self {
            dim,
            ndofs: space.ndofs(),
            mono,
            cells,
        }
    }

    pub fn ndofs(&self) -> usize {
        self.ndofs
    }

    fn rule(&self, cell: &Cell, degree: usize) -> Vec<(Point, f64)> {
        if self.dim == 1 {
            let (x, w) = gauss_unit(points_for(degree));
            x.iter()
                .zip(&w)
                .map(|(&s, &wi)| ([cell.origin[0] + s * cell.axes[0][0], 0.0], wi * cell.det))
                .collect()
        } else {
            let (x, w) = gauss_unit(points_for(degree + 1));
            let mut out = Vec::new();
            for (&u, &wu) in x.iter().zip(&w) {
                for (&v, &wv) in x.iter().zip(&w) {
                    let (r, s) = (u, v * (1.0 - u));
                    let p = [
                        cell.origin[0] + r * cell.axes[0][0] + s * cell.axes[1][0],
                        cell.origin[1] + r * cell.axes[0][1] + s * cell.axes[1][1],
                    ];
                    out.push((p, wu * wv * (1.0 - u) * cell.det));
                }
            }
            out
        }
    }

    /// Basis values and gradients at a physical point.
    fn basis(&self, cell: &Cell, x: Point) -> (Vec<f64>, Vec<[f64; 2]>) {
        let n = self.mono.len();
        let mut val = vec![0.0; n];
        let mut grad = vec![[0.0; 2]; n];
        for (j, &(a, b)) in self.mono.iter().enumerate() {
            let m = pw(x[0], a) * pw(x[1], b);
            let dx = if a > 0 {
                a as f64 * pw(x[0], a - 1) * pw(x[1], b)
            } else {
                0.0
            };
            let dy = if b > 0 {
                b as f64 * pw(x[0], a) * pw(x[1], b - 1)
            } else {
                0.0
            };
            for i in 0..n {
                let c = cell.coef[(j, i)];
                val[i] += c * m;
                grad[i][0] += c * dx;
                grad[i][1] += c * dy;
            }
        }
        (val, grad)
    }

    pub fn mass(&self, degree: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.ndofs, self.ndofs);
        for cell in &self.cells {
            for (x, w) in self.rule(cell, degree) {
                let (v, _) = self.basis(cell, x);
                for (i, di) in cell.dofs.iter().enumerate() {
                    for (j, dj) in cell.dofs.iter().enumerate() {
                        if let (Some(a), Some(b)) = (di, dj) {
                            m[(*a, *b)] += w * v[i] * v[j];
                        }
                    }
                }
            }
        }
        m
    }

    pub fn stiffness(&self, coef: impl Fn(Point) -> [[f64; 2]; 2], degree: usize) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.ndofs, self.ndofs);
        for cell in &self.cells {
            for (x, w) in self.rule(cell, degree) {
                let (_, g) = self.basis(cell, x);
                let a = coef(x);
                for (i, di) in cell.dofs.iter().enumerate() {
                    for (j, dj) in cell.dofs.iter().enumerate() {
                        if let (Some(p), Some(q)) = (di, dj) {
                            let ag = [
                                a[0][0] * g[j][0] + a[0][1] * g[j][1],
                                a[1][0] * g[j][0] + a[1][1] * g[j][1],
                            ];
                            k[(*p, *q)] += w * (g[i][0] * ag[0] + g[i][1] * ag[1]);
                        }
                    }
                }
            }
        }
        k
    }

    pub fn load(&self, f: impl Fn(Point) -> f64, degree: usize) -> DVector<f64> {
        let mut b = DVector::zeros(self.ndofs);
        for cell in &self.cells {
            for (x, w) in self.rule(cell, degree) {
                let (v, _) = self.basis(cell, x);
                let fx = f(x);
                for (i, di) in cell.dofs.iter().enumerate() {
                    if let Some(p) = di {
                        b[*p] += w * fx * v[i];
                    }
                }
            }
        }
        b
    }
}

/// Dense dG(0) reference: returns `u_1, ..., u_M`.
pub fn dense_dg0(problem: &ParabolicProblem) -> Vec<DVector<f64>> {
    let space = problem.space();
    let fe = DenseFe::new(space);
    let grid = problem.grid();
    let field = problem.field();
    let sorder = default_stiffness_order(space);
    let lorder = problem.load_order();
    assert_eq!(lorder, default_load_order(space));
    let mass = fe.mass(2 * space.degree());
    let mut u = match problem.initial() {
        InitialDatum::Zero => DVector::zeros(fe.ndofs()),
        InitialDatum::Discrete(v) => DVector::from_column_slice(v),
        InitialDatum::Function(u0) => {
            let b = fe.load(|x| u0.value(x), lorder);
            mass.clone().cholesky().unwrap().solve(&b)
        }
    };
    let (tq, wq) = gauss_unit(problem.time_quadrature());
    let mut out = Vec::with_capacity(grid.len());
    for m in 1..=grid.len() {
        let (a, b) = (grid.node(m - 1), grid.node(m));
        let k = b - a;
        let mut kbar = DMatrix::zeros(fe.ndofs(), fe.ndofs());
        let mut fbar = DVector::zeros(fe.ndofs());
        for (&s, &w) in tq.iter().zip(&wq) {
            let t = a + s * k;
            kbar += fe.stiffness(|x| field.eval(t, x), sorder) * w;
            if let Source::Function(f) = problem.source() {
                fbar += fe.load(|x| f(t, x), lorder) * w;
            }
        }
        if let Source::DiscreteStiffness(uh) = problem.source() {
            fbar = &kbar * DVector::from_column_slice(uh);
        }
        let lhs = &mass + &kbar * k;
        let rhs = &mass * &u + fbar * k;
        u = lhs.lu().solve(&rhs).expect("nonsingular step matrix");
        out.push(u.clone());
    }
    out
}

pub fn interval_space(n: usize, degree: usize) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Arc::new(Mesh::interval(0.0, 1.0, n).unwrap()), degree).unwrap())
}

pub fn square_space(n: usize, degree: usize) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Arc::new(Mesh::unit_square(n).unwrap()), degree).unwrap())
}

pub fn grids(final_time: f64, steps: usize) -> Vec<TimeGrid> {
    vec![
        TimeGrid::uniform(final_time, steps).unwrap(),
        TimeGrid::graded(final_time, steps, 2.0).unwrap(),
    ]
}

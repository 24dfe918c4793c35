//! Continuous Lagrange spaces of degree 1 or 2 with Dirichlet elimination.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra_sparse::pattern::SparsityPattern;

use crate::error::{invalid, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{self, Rule};

/// Shape function values and reference gradients at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: Rule,
    /// `values[q * n_local + i]`.
    pub values: Vec<f64>,
    /// `grads[q * n_local + i]`, reference coordinates.
    pub grads: Vec<[f64; 2]>,
    pub n_local: usize,
}

/// Affine geometry of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    origin: Point,
    jac: [[f64; 2]; 2],
    inv_t: [[f64; 2]; 2],
    pub abs_det: f64,
    dim: usize,
}

impl CellGeometry {
    #[inline]
    pub fn map(&self, xi: [f64; 2]) -> Point {
        match self.dim {
            1 => [self.origin[0] + self.jac[0][0] * xi[0], 0.0],
            _ => [
                self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
                self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
            ],
        }
    }

    /// Physical gradient from a reference gradient, `J^{-T} g`.
    #[inline]
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        match self.dim {
            1 => [self.inv_t[0][0] * g[0], 0.0],
            _ => [
                self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
                self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
            ],
        }
    }
}

/// Lagrange finite element space on a conformal mesh. Only interior
/// nodes carry degrees of freedom; boundary values are zero.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    nodes: Vec<Point>,
    cell_nodes: Vec<usize>,
    n_local: usize,
    /// Global node -> interior dof.
    dof_of_node: Vec<Option<usize>>,
    /// Interior dof -> global node.
    node_of_dof: Vec<usize>,
    pattern: Arc<SparsityPattern>,
    /// Value-array positions of local pairs per cell, `usize::MAX` where a
    /// row or column is a boundary node.
    cell_positions: Vec<usize>,
}

const NO_POS: usize = usize::MAX;

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(invalid(format!("unsupported polynomial degree {degree}")));
        }
        let dim = mesh.dim();
        let nv = mesh.num_vertices();
        let mut nodes: Vec<Point> = mesh.vertices().to_vec();
        let mut boundary: Vec<bool> = (0..nv).map(|v| mesh.is_boundary_vertex(v)).collect();
        let n_local = match (dim, degree) {
            (1, 1) => 2,
            (1, _) => 3,
            (_, 1) => 3,
            _ => 6,
        };
        let mut cell_nodes = Vec::with_capacity(mesh.num_cells() * n_local);
        let mut edge_node: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        if degree == 2 && dim == 2 {
            for c in 0..mesh.num_cells() {
                let v = mesh.cell(c);
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    *edge_count
                        .entry((v[i].min(v[j]), v[i].max(v[j])))
                        .or_default() += 1;
                }
            }
        }
        for c in 0..mesh.num_cells() {
            let v = mesh.cell(c);
            cell_nodes.extend_from_slice(v);
            if degree == 2 {
                let edges: &[(usize, usize)] = if dim == 1 {
                    &[(0, 1)]
                } else {
                    &[(0, 1), (1, 2), (2, 0)]
                };
                for &(i, j) in edges {
                    let key = (v[i].min(v[j]), v[i].max(v[j]));
                    let id = *edge_node.entry(key).or_insert_with(|| {
                        let (a, b) = (mesh.vertices()[key.0], mesh.vertices()[key.1]);
                        nodes.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                        boundary.push(dim == 2 && edge_count[&key] == 1);
                        nodes.len() - 1
                    });
                    cell_nodes.push(id);
                }
            }
        }
        // Interior dofs ordered by (y, x) for a narrow band.
        let mut interior: Vec<usize> = (0..nodes.len()).filter(|&i| !boundary[i]).collect();
        interior.sort_by(|&a, &b| {
            let (pa, pb) = (nodes[a], nodes[b]);
            pa[1]
                .total_cmp(&pb[1])
                .then(pa[0].total_cmp(&pb[0]))
                .then(a.cmp(&b))
        });
        let mut dof_of_node = vec![None; nodes.len()];
        for (d, &n) in interior.iter().enumerate() {
            dof_of_node[n] = Some(d);
        }
        let ndofs = interior.len();
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); ndofs];
        for c in 0..mesh.num_cells() {
            let local = &cell_nodes[c * n_local..(c + 1) * n_local];
            for &a in local {
                if let Some(da) = dof_of_node[a] {
                    for &b in local {
                        if let Some(db) = dof_of_node[b] {
                            rows[da].insert(db);
                        }
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(ndofs + 1);
        let mut cols = Vec::new();
        offsets.push(0);
        for r in &rows {
            cols.extend(r.iter().copied());
            offsets.push(cols.len());
        }
        let pattern = SparsityPattern::try_from_offsets_and_indices(ndofs, ndofs, offsets, cols)
            .map_err(|e| crate::Error::Internal(format!("sparsity pattern: {e}")))?;
        let mut space = FeSpace {
            mesh,
            degree,
            nodes,
            cell_nodes,
            n_local,
            dof_of_node,
            node_of_dof: interior,
            pattern: Arc::new(pattern),
            cell_positions: Vec::new(),
        };
        space.cell_positions = space.compute_positions();
        Ok(space)
    }

    fn compute_positions(&self) -> Vec<usize> {
        let nl = self.n_local;
        let offsets = self.pattern.major_offsets();
        let cols = self.pattern.minor_indices();
        let mut pos = Vec::with_capacity(self.num_cells() * nl * nl);
        for c in 0..self.num_cells() {
            let local = self.cell_nodes(c);
            for &a in local {
                for &b in local {
                    match (self.dof_of_node[a], self.dof_of_node[b]) {
                        (Some(r), Some(col)) => {
                            let row = &cols[offsets[r]..offsets[r + 1]];
                            let k = row.binary_search(&col).expect("pattern covers cell pairs");
                            pos.push(offsets[r] + k);
                        }
                        _ => pos.push(NO_POS),
                    }
                }
            }
        }
        pos
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of interior degrees of freedom.
    pub fn ndofs(&self) -> usize {
        self.node_of_dof.len()
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    pub fn n_local(&self) -> usize {
        self.n_local
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    /// Global node indices of cell `c`.
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.cell_nodes[c * self.n_local..(c + 1) * self.n_local]
    }

    pub fn dof_of_node(&self, node: usize) -> Option<usize> {
        self.dof_of_node[node]
    }

    pub(crate) fn cell_positions(&self, c: usize) -> &[usize] {
        let s = self.n_local * self.n_local;
        &self.cell_positions[c * s..(c + 1) * s]
    }

    /// Coordinates of each interior dof.
    pub fn dof_coordinates(&self) -> Vec<Point> {
        self.node_of_dof.iter().map(|&n| self.nodes[n]).collect()
    }

    pub fn node_coordinates(&self) -> &[Point] {
        &self.nodes
    }

    pub fn geometry(&self, c: usize) -> CellGeometry {
        let v = self.mesh.cell(c);
        let p = |i: usize| self.mesh.vertices()[v[i]];
        let o = p(0);
        match self.dim() {
            1 => {
                let j = p(1)[0] - o[0];
                CellGeometry {
                    origin: o,
                    jac: [[j, 0.0], [0.0, 1.0]],
                    inv_t: [[1.0 / j, 0.0], [0.0, 1.0]],
                    abs_det: j.abs(),
                    dim: 1,
                }
            }
            _ => {
                let (a, b) = (p(1), p(2));
                let jac = [[a[0] - o[0], b[0] - o[0]], [a[1] - o[1], b[1] - o[1]]];
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                // inverse transpose of [[a, b], [c, d]] is [[d, -c], [-b, a]] / det
                let inv_t = [
                    [jac[1][1] / det, -jac[1][0] / det],
                    [-jac[0][1] / det, jac[0][0] / det],
                ];
                CellGeometry {
                    origin: o,
                    jac,
                    inv_t,
                    abs_det: det.abs(),
                    dim: 2,
                }
            }
        }
    }

    /// Tabulates the local basis at a rule exact for polynomials of `degree`.
    pub fn tabulate(&self, degree: usize) -> Tabulation {
        let rule = quadrature::reference(self.dim(), degree);
        let nl = self.n_local;
        let mut values = Vec::with_capacity(rule.len() * nl);
        let mut grads = Vec::with_capacity(rule.len() * nl);
        for p in &rule.points {
            let (v, g) = reference_basis(self.dim(), self.degree, *p);
            values.extend(v);
            grads.extend(g);
        }
        Tabulation {
            rule,
            values,
            grads,
            n_local: nl,
        }
    }

    /// Coefficients of a full (boundary-inclusive) vector restricted to cell `c`.
    pub fn local_values(&self, c: usize, dofs: &[f64]) -> Vec<f64> {
        self.cell_nodes(c)
            .iter()
            .map(|&n| self.dof_of_node[n].map_or(0.0, |d| dofs[d]))
            .collect()
    }

    /// Nodal interpolant of `f` on the interior dofs.
    pub fn interpolate(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.node_of_dof.iter().map(|&n| f(self.nodes[n])).collect()
    }

    /// Evaluates the discrete function `dofs` at `x` by locating its cell.
    pub fn evaluate(&self, dofs: &[f64], x: Point) -> Option<f64> {
        for c in 0..self.num_cells() {
            if let Some(xi) = self.reference_coordinates(c, x) {
                let (vals, _) = reference_basis(self.dim(), self.degree, xi);
                let local = self.local_values(c, dofs);
                return Some(vals.iter().zip(&local).map(|(a, b)| a * b).sum());
            }
        }
        None
    }

    fn reference_coordinates(&self, c: usize, x: Point) -> Option<[f64; 2]> {
        let g = self.geometry(c);
        let d = [x[0] - g.origin[0], x[1] - g.origin[1]];
        let eps = 1e-12;
        match self.dim() {
            1 => {
                let xi = d[0] / g.jac[0][0];
                (xi >= -eps && xi <= 1.0 + eps).then_some([xi, 0.0])
            }
            _ => {
                // xi = J^{-1} d = (J^{-T})^T d
                let xi = [
                    g.inv_t[0][0] * d[0] + g.inv_t[1][0] * d[1],
                    g.inv_t[0][1] * d[0] + g.inv_t[1][1] * d[1],
                ];
                (xi[0] >= -eps && xi[1] >= -eps && xi[0] + xi[1] <= 1.0 + eps).then_some(xi)
            }
        }
    }
}

/// Lagrange basis on the reference cell: values and reference gradients.
///
/// Local ordering: vertices first, then (degree 2) edge midpoints
/// `01`, `12`, `20`.
pub fn reference_basis(dim: usize, degree: usize, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    match (dim, degree) {
        (1, 1) => (vec![1.0 - xi[0], xi[0]], vec![[-1.0, 0.0], [1.0, 0.0]]),
        (1, _) => {
            let x = xi[0];
            (
                vec![
                    (1.0 - x) * (1.0 - 2.0 * x),
                    x * (2.0 * x - 1.0),
                    4.0 * x * (1.0 - x),
                ],
                vec![
                    [4.0 * x - 3.0, 0.0],
                    [4.0 * x - 1.0, 0.0],
                    [4.0 - 8.0 * x, 0.0],
                ],
            )
        }
        (_, 1) => (
            vec![1.0 - xi[0] - xi[1], xi[0], xi[1]],
            vec![[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]],
        ),
        _ => {
            let l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
            let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
            let mut vals = Vec::with_capacity(6);
            let mut grads = Vec::with_capacity(6);
            for i in 0..3 {
                vals.push(l[i] * (2.0 * l[i] - 1.0));
                let s = 4.0 * l[i] - 1.0;
                grads.push([s * dl[i][0], s * dl[i][1]]);
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                vals.push(4.0 * l[i] * l[j]);
                grads.push([
                    4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
                    4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
                ]);
            }
            (vals, grads)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_match_interior_node_counts() {
        let m = Arc::new(Mesh::interval(0.0, 1.0, 4).unwrap());
        assert_eq!(FeSpace::new(m.clone(), 1).unwrap().ndofs(), 3);
        assert_eq!(FeSpace::new(m, 2).unwrap().ndofs(), 7);
        let m = Arc::new(Mesh::unit_square(4).unwrap());
        assert_eq!(FeSpace::new(m.clone(), 1).unwrap().ndofs(), 9);
        assert_eq!(FeSpace::new(m, 2).unwrap().ndofs(), 49);
        let m = Arc::new(Mesh::unit_square(1).unwrap());
        assert_eq!(FeSpace::new(m, 1).unwrap().ndofs(), 0);
    }

    #[test]
    fn partition_of_unity_and_gradient_sum() {
        for (dim, deg) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            for xi in [[0.1, 0.2], [0.3, 0.6], [0.0, 0.0], [0.25, 0.25]] {
                let (v, g) = reference_basis(dim, deg, xi);
                assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                let gs = g.iter().fold([0.0, 0.0], |a, b| [a[0] + b[0], a[1] + b[1]]);
                assert!(gs[0].abs() < 1e-13 && gs[1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn basis_is_nodal() {
        let nodes2 = [
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.5, 0.0],
            [0.5, 0.5],
            [0.0, 0.5],
        ];
        for (i, p) in nodes2.iter().enumerate() {
            let (v, _) = reference_basis(2, 2, *p);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
        let nodes1 = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.0]];
        for (i, p) in nodes1.iter().enumerate() {
            let (v, _) = reference_basis(1, 2, *p);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn evaluation_reproduces_interpolated_quadratics() {
        let m = Arc::new(Mesh::unit_square(3).unwrap());
        let s = FeSpace::new(m, 2).unwrap();
        let dofs = s.interpolate(|x| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]));
        for (d, p) in s.dof_coordinates().iter().enumerate() {
            let v = s.evaluate(&dofs, *p).unwrap();
            assert!((v - dofs[d]).abs() < 1e-13);
        }
        let m = Arc::new(Mesh::interval(0.0, 1.0, 3).unwrap());
        let s = FeSpace::new(m, 2).unwrap();
        let dofs = s.interpolate(|x| x[0] * (1.0 - x[0]));
        for x in [0.1, 0.37, 0.5, 0.93] {
            let v = s.evaluate(&dofs, [x, 0.0]).unwrap();
            assert!((v - x * (1.0 - x)).abs() < 1e-14);
        }
    }
}

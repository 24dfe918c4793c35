//! Conformal simplicial meshes in one and two dimensions.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point in the physical domain. One-dimensional meshes use only the
/// first coordinate.
pub type Point = [f64; 2];

/// Segment or triangle mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeshDocument", into = "MeshDocument")]
pub struct Mesh {
    dim: usize,
    vertices: Vec<Point>,
    /// Flattened vertex indices with stride `dim + 1`.
    cells: Vec<usize>,
    boundary: Vec<bool>,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct MeshDocument {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    cells: Vec<Vec<usize>>,
    boundary: Vec<usize>,
}

impl From<Mesh> for MeshDocument {
    fn from(m: Mesh) -> Self {
        MeshDocument {
            dim: m.dim,
            vertices: m.vertices.iter().map(|v| v[..m.dim].to_vec()).collect(),
            cells: (0..m.num_cells()).map(|c| m.cell(c).to_vec()).collect(),
            boundary: m.boundary_vertices(),
        }
    }
}

impl TryFrom<MeshDocument> for Mesh {
    type Error = Error;

    fn try_from(doc: MeshDocument) -> Result<Self> {
        let vertices = doc
            .vertices
            .iter()
            .map(|v| match v.as_slice() {
                [x] if doc.dim == 1 => Ok([*x, 0.0]),
                [x, y] if doc.dim == 2 => Ok([*x, *y]),
                _ => Err(Error::InvalidMesh("vertex arity does not match dim".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        let mesh = Mesh::new(doc.dim, vertices, doc.cells)?;
        if mesh.boundary_vertices() != doc.boundary {
            return Err(Error::InvalidMesh(
                "boundary list does not match mesh topology".into(),
            ));
        }
        Ok(mesh)
    }
}

impl Mesh {
    /// Builds a mesh from vertices and cells, computing the boundary from
    /// topology and rejecting degenerate or non-conformal input.
    pub fn new(dim: usize, vertices: Vec<Point>, cells: Vec<Vec<usize>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidMesh(format!("unsupported dimension {dim}")));
        }
        if cells.is_empty() {
            return Err(Error::InvalidMesh("mesh has no cells".into()));
        }
        let nv = vertices.len();
        let mut flat = Vec::with_capacity(cells.len() * (dim + 1));
        for c in &cells {
            if c.len() != dim + 1 {
                return Err(Error::InvalidMesh("cell arity does not match dim".into()));
            }
            if c.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(
                    "cell references a missing vertex".into(),
                ));
            }
            flat.extend_from_slice(c);
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells: flat,
            boundary: vec![false; nv],
            h: 0.0,
        };
        for c in 0..mesh.num_cells() {
            if !(mesh.cell_measure(c) > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} has non-positive measure"
                )));
            }
        }
        mesh.check_conformity()?;
        mesh.boundary = mesh.topological_boundary();
        mesh.h = (0..mesh.num_cells())
            .map(|c| mesh.cell_diameter(c))
            .fold(0.0, f64::max);
        Ok(mesh)
    }

    /// `n` equal cells on `[a, b]`.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a < b) {
            return Err(invalid(format!("interval needs a < b, got [{a}, {b}]")));
        }
        if n < 2 {
            return Err(invalid("interval mesh needs at least two cells"));
        }
        let h = (b - a) / n as f64;
        let mut vertices: Vec<Point> = (0..=n).map(|i| [a + i as f64 * h, 0.0]).collect();
        vertices[n] = [b, 0.0];
        let cells = (0..n).map(|i| vec![i, i + 1]).collect();
        Self::new(1, vertices, cells)
    }

    /// One-dimensional mesh on explicit, strictly increasing vertices.
    pub fn interval_from_vertices(xs: &[f64]) -> Result<Self> {
        if xs.len() < 3 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid(
                "vertices must be strictly increasing with at least two cells",
            ));
        }
        let vertices = xs.iter().map(|&x| [x, 0.0]).collect();
        let cells = (0..xs.len() - 1).map(|i| vec![i, i + 1]).collect();
        Self::new(1, vertices, cells)
    }

    /// Structured `n x n` triangulation of the unit square; each square is
    /// split along its lower-left to upper-right diagonal.
    pub fn unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("unit square mesh needs n >= 1"));
        }
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = if i == n { 1.0 } else { i as f64 * h };
                let y = if j == n { 1.0 } else { j as f64 * h };
                vertices.push([x, y]);
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                cells.push(vec![a, b, c]);
                cells.push(vec![a, c, d]);
            }
        }
        Self::new(2, vertices, cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let s = self.dim + 1;
        &self.cells[c * s..(c + 1) * s]
    }

    /// Maximal cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary[v]
    }

    /// Sorted indices of vertices on the domain boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices())
            .filter(|&v| self.boundary[v])
            .collect()
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        let v = self.cell(c);
        let p = |i: usize| self.vertices[v[i]];
        match self.dim {
            1 => p(1)[0] - p(0)[0],
            _ => {
                let (a, b, c) = (p(0), p(1), p(2));
                0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
            }
        }
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let v = self.cell(c);
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let (a, b) = (self.vertices[v[i]], self.vertices[v[j]]);
                d = d.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        d
    }

    /// Total measure of the domain.
    pub fn measure(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_measure(c)).sum()
    }

    /// Facets (vertices in 1D, edges in 2D) with the number of cells sharing each.
    fn facet_counts(&self) -> HashMap<Vec<usize>, usize> {
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            match self.dim {
                1 => {
                    for &x in v {
                        *counts.entry(vec![x]).or_default() += 1;
                    }
                }
                _ => {
                    for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                        let (a, b) = (v[i].min(v[j]), v[i].max(v[j]));
                        *counts.entry(vec![a, b]).or_default() += 1;
                    }
                }
            }
        }
        counts
    }

    fn topological_boundary(&self) -> Vec<bool> {
        let mut boundary = vec![false; self.num_vertices()];
        for (facet, count) in self.facet_counts() {
            if count == 1 {
                for v in facet {
                    boundary[v] = true;
                }
            }
        }
        boundary
    }

    /// Verifies that distinct cells meet only in shared vertices or full
    /// edges: no facet is shared by more than two cells and no vertex sits
    /// inside an unmatched edge (a hanging node).
    pub fn check_conformity(&self) -> Result<()> {
        let counts = self.facet_counts();
        if let Some((facet, n)) = counts.iter().find(|(_, &n)| n > 2) {
            return Err(Error::InvalidMesh(format!(
                "facet {facet:?} is shared by {n} cells"
            )));
        }
        match self.dim {
            1 => {
                let mut spans: Vec<(f64, f64)> = (0..self.num_cells())
                    .map(|c| {
                        let v = self.cell(c);
                        (self.vertices[v[0]][0], self.vertices[v[1]][0])
                    })
                    .collect();
                spans.sort_by(|a, b| a.0.total_cmp(&b.0));
                if spans.windows(2).any(|w| w[1].0 < w[0].1) {
                    return Err(Error::InvalidMesh("overlapping segments".into()));
                }
                if counts.values().filter(|&&n| n == 1).count() != 2 {
                    return Err(Error::InvalidMesh(
                        "segments do not form one interval".into(),
                    ));
                }
            }
            _ => {
                for (facet, &n) in &counts {
                    if n != 1 {
                        continue;
                    }
                    let (a, b) = (self.vertices[facet[0]], self.vertices[facet[1]]);
                    let len2 = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                    for (vi, p) in self.vertices.iter().enumerate() {
                        if vi == facet[0] || vi == facet[1] {
                            continue;
                        }
                        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
                        if cross.abs() > 1e-12 * len2 {
                            continue;
                        }
                        let s =
                            ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / len2;
                        if s > 1e-12 && s < 1.0 - 1e-12 {
                            return Err(Error::InvalidMesh(format!(
                                "hanging node {vi} on edge {facet:?}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Measures the quasi-uniformity constant `max_tau h / |tau|^{1/d}`.
    pub fn check_quasi_uniform(&self) -> Result<QuasiUniformReport> {
        let d = self.dim as f64;
        let mut c_measured: f64 = 0.0;
        let mut max_diam: f64 = 0.0;
        for c in 0..self.num_cells() {
            let m = self.cell_measure(c);
            if !(m > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} is degenerate")));
            }
            max_diam = max_diam.max(self.cell_diameter(c));
            c_measured = c_measured.max(self.h / m.powf(1.0 / d));
        }
        Ok(QuasiUniformReport {
            constant: c_measured,
            max_diameter: max_diam,
            h: self.h,
        })
    }
}

/// Result of [`Mesh::check_quasi_uniform`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiUniformReport {
    /// `max_tau h / |tau|^{1/d}`.
    pub constant: f64,
    pub max_diameter: f64,
    pub h: f64,
}

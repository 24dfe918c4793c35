//! Mass and stiffness assembly, load vectors, and the L2 and Ritz projections.

use std::sync::Arc;

use crate::coeffs::{CoefficientField, Tensor};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fem::{FeSpace, Tabulation};
use crate::mesh::Point;
use crate::quadrature;
use crate::sparse::{relative_residual, SparseSpd, SpdSolver};
use crate::timegrid::TimeGrid;

/// Cells processed per work item during parallel assembly.
const CELL_CHUNK: usize = 64;

/// Extra quadrature degree for non-polynomial integrands.
pub const EXTRA_ORDER: usize = 2;

/// Default spatial quadrature degree for stiffness: exact for
/// gradient products (degree `2r - 2`) plus [`EXTRA_ORDER`].
pub fn default_stiffness_order(space: &FeSpace) -> usize {
    2 * space.degree() - 2 + EXTRA_ORDER
}

/// Default degree for loads, projections and error integrals.
pub fn default_load_order(space: &FeSpace) -> usize {
    2 * space.degree() + 4
}

/// A scalar function of space, optionally with its gradient.
#[derive(Clone)]
pub struct ScalarFunction {
    value: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
    gradient: Option<Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>>,
}

impl ScalarFunction {
    pub fn new(value: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        mut self,
        gradient: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn zero() -> Self {
        Self::new(|_| 0.0).with_gradient(|_| [0.0, 0.0])
    }

    #[inline]
    pub fn value(&self, x: Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: Point) -> Option<[f64; 2]> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

#[inline]
fn quad_form(a: &Tensor, g: [f64; 2], h: [f64; 2]) -> f64 {
    g[0] * (a[0][0] * h[0] + a[0][1] * h[1]) + g[1] * (a[1][0] * h[0] + a[1][1] * h[1])
}

/// Assembles `sum_cells local(c)` into a matrix on the space's pattern.
/// Local matrices are computed in parallel and scattered in cell order, so
/// the result does not depend on the thread count.
fn assemble_matrix<F>(space: &FeSpace, local: F) -> SparseSpd
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let nl = space.n_local();
    let ncells = space.num_cells();
    let nchunks = ncells.div_ceil(CELL_CHUNK);
    let chunks = exec::map_indexed(nchunks, |k| {
        let start = k * CELL_CHUNK;
        let end = (start + CELL_CHUNK).min(ncells);
        let mut buf = vec![0.0; (end - start) * nl * nl];
        for (i, c) in (start..end).enumerate() {
            local(c, &mut buf[i * nl * nl..(i + 1) * nl * nl]);
        }
        buf
    });
    let mut out = SparseSpd::zeros(space.pattern().clone());
    let values = out.values_mut();
    for (k, buf) in chunks.iter().enumerate() {
        let start = k * CELL_CHUNK;
        for (i, block) in buf.chunks_exact(nl * nl).enumerate() {
            for (&p, &v) in space.cell_positions(start + i).iter().zip(block) {
                if p != usize::MAX {
                    values[p] += v;
                }
            }
        }
    }
    out
}

/// Assembles `b_i = sum_cells local(c)_i` over interior dofs.
fn assemble_vector<F>(space: &FeSpace, local: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let nl = space.n_local();
    let ncells = space.num_cells();
    let nchunks = ncells.div_ceil(CELL_CHUNK);
    let chunks = exec::map_indexed(nchunks, |k| {
        let start = k * CELL_CHUNK;
        let end = (start + CELL_CHUNK).min(ncells);
        let mut buf = vec![0.0; (end - start) * nl];
        for (i, c) in (start..end).enumerate() {
            local(c, &mut buf[i * nl..(i + 1) * nl]);
        }
        buf
    });
    let mut out = vec![0.0; space.ndofs()];
    for (k, buf) in chunks.iter().enumerate() {
        let start = k * CELL_CHUNK;
        for (i, block) in buf.chunks_exact(nl).enumerate() {
            for (&node, &v) in space.cell_nodes(start + i).iter().zip(block) {
                if let Some(d) = space.dof_of_node(node) {
                    out[d] += v;
                }
            }
        }
    }
    out
}

/// Mass matrix `M_ij = (phi_j, phi_i)`, integrated exactly.
pub fn assemble_mass(space: &FeSpace) -> SparseSpd {
    let tab = space.tabulate(2 * space.degree());
    let nl = space.n_local();
    assemble_matrix(space, |c, out| {
        let g = space.geometry(c);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let wq = w * g.abs_det;
            let phi = &tab.values[q * nl..(q + 1) * nl];
            for i in 0..nl {
                for j in 0..nl {
                    out[i * nl + j] += wq * phi[i] * phi[j];
                }
            }
        }
    })
}

fn stiffness_with(
    space: &FeSpace,
    tab: &Tabulation,
    coef: impl Fn(Point) -> Tensor + Sync + Send,
) -> SparseSpd {
    let nl = space.n_local();
    assemble_matrix(space, |c, out| {
        let g = space.geometry(c);
        let mut grads = vec![[0.0; 2]; nl];
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let x = g.map(tab.rule.points[q]);
            let a = coef(x);
            let wq = w * g.abs_det;
            for (i, gi) in grads.iter_mut().enumerate() {
                *gi = g.grad(tab.grads[q * nl + i]);
            }
            for i in 0..nl {
                for j in 0..nl {
                    out[i * nl + j] += wq * quad_form(&a, grads[i], grads[j]);
                }
            }
        }
    })
}

/// Stiffness matrix `K(t)_ij = sum_pq (a_pq(t) d_p phi_j, d_q phi_i)` with
/// cell quadrature exact to polynomial degree `order`.
pub fn assemble_stiffness(
    space: &FeSpace,
    field: &CoefficientField,
    t: f64,
    order: usize,
) -> Result<SparseSpd> {
    if order < 1 {
        return Err(invalid("stiffness quadrature order must be at least 1"));
    }
    let tab = space.tabulate(order);
    Ok(stiffness_with(space, &tab, |x| field.eval(t, x)))
}

/// Stiffness of the identity coefficient (the discrete Dirichlet Laplacian).
pub fn assemble_laplacian(space: &FeSpace) -> SparseSpd {
    let tab = space.tabulate(2 * space.degree() - 2);
    stiffness_with(space, &tab, |_| [[1.0, 0.0], [0.0, 1.0]])
}

/// Gauss points mapped to `I_m` with weights normalized to sum to 1, so a
/// weighted sum is the interval average.
pub fn interval_average_rule(grid: &TimeGrid, m: usize, q: usize) -> Vec<(f64, f64)> {
    let (a, b) = grid.interval(m);
    let (x, w) = quadrature::unit_interval(q);
    x.into_iter()
        .zip(w)
        .map(|(xi, wi)| (a + (b - a) * xi, wi))
        .collect()
}

/// Produces `K(t)` for one space, field and quadrature order. Separable
/// fields `b(t) a0(x)` reuse a single reference assembly.
pub struct StiffnessEvaluator {
    space: Arc<FeSpace>,
    field: CoefficientField,
    order: usize,
    tab: Tabulation,
    reference: Option<(f64, SparseSpd)>,
}

impl StiffnessEvaluator {
    pub fn new(space: Arc<FeSpace>, field: CoefficientField, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(invalid("stiffness quadrature order must be at least 1"));
        }
        let tab = space.tabulate(order);
        let reference = if field.is_autonomous() {
            Some((1.0, stiffness_with(&space, &tab, |x| field.eval(0.0, x))))
        } else {
            match field.time_factor(0.0) {
                Some(b0) if b0 != 0.0 => {
                    let k0 = stiffness_with(&space, &tab, |x| field.eval(0.0, x));
                    Some((b0, k0))
                }
                _ => None,
            }
        };
        Ok(Self {
            space,
            field,
            order,
            tab,
            reference,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn at(&self, t: f64) -> SparseSpd {
        match &self.reference {
            Some((_, k0)) if self.field.is_autonomous() => k0.clone(),
            Some((b0, k0)) => {
                let b = self.field.time_factor(t).expect("separable field");
                k0.scaled(b / b0)
            }
            None => stiffness_with(&self.space, &self.tab, |x| self.field.eval(t, x)),
        }
    }

    /// `(1/k_m) int_{I_m} K(t) dt` by `q`-point Gauss–Legendre in time.
    pub fn averaged(&self, grid: &TimeGrid, m: usize, q: usize) -> Result<SparseSpd> {
        if m == 0 || m > grid.len() {
            return Err(invalid(format!(
                "interval index {m} outside 1..={}",
                grid.len()
            )));
        }
        if q == 0 {
            return Err(invalid("time quadrature needs at least one point"));
        }
        if self.field.is_autonomous() {
            return Ok(self.at(0.0));
        }
        let rule = interval_average_rule(grid, m, q);
        if let Some((b0, k0)) = &self.reference {
            let bbar: f64 = rule
                .iter()
                .map(|&(t, w)| w * self.field.time_factor(t).unwrap())
                .sum();
            return Ok(k0.scaled(bbar / b0));
        }
        let mut acc = SparseSpd::zeros(self.space.pattern().clone());
        for (t, w) in rule {
            acc.add_scaled(w, &self.at(t));
        }
        Ok(acc)
    }
}

/// Averaged stiffness `(1/k_m) int_{I_m} K(t) dt`, `q`-point Gauss in time.
pub fn assemble_averaged_stiffness(
    space: &Arc<FeSpace>,
    field: &CoefficientField,
    grid: &TimeGrid,
    m: usize,
    q: usize,
) -> Result<SparseSpd> {
    let order = default_stiffness_order(space);
    StiffnessEvaluator::new(space.clone(), field.clone(), order)?.averaged(grid, m, q)
}

/// Load vector `b_i = (f, phi_i)`.
pub fn assemble_load(
    space: &FeSpace,
    f: impl Fn(Point) -> f64 + Sync + Send,
    order: usize,
) -> Vec<f64> {
    let tab = space.tabulate(order);
    let nl = space.n_local();
    assemble_vector(space, |c, out| {
        let g = space.geometry(c);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let fx = f(g.map(tab.rule.points[q])) * w * g.abs_det;
            for (o, v) in out.iter_mut().zip(&tab.values[q * nl..(q + 1) * nl]) {
                *o += fx * v;
            }
        }
    })
}

/// Energy load `b_i = sum_pq (a_pq(t) d_p v, d_q phi_i)` for a gradient field.
pub fn assemble_energy_load(
    space: &FeSpace,
    coef: impl Fn(Point) -> Tensor + Sync + Send,
    grad_v: impl Fn(Point) -> [f64; 2] + Sync + Send,
    order: usize,
) -> Vec<f64> {
    let tab = space.tabulate(order);
    let nl = space.n_local();
    assemble_vector(space, |c, out| {
        let g = space.geometry(c);
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let x = g.map(tab.rule.points[q]);
            let a = coef(x);
            let gv = grad_v(x);
            let wq = w * g.abs_det;
            for (o, &dphi) in out.iter_mut().zip(&tab.grads[q * nl..(q + 1) * nl]) {
                *o += wq * quad_form(&a, gv, g.grad(dphi));
            }
        }
    })
}

fn solve_checked(
    matrix: &SparseSpd,
    solver: &SpdSolver,
    rhs: &[f64],
    what: &str,
) -> Result<Vec<f64>> {
    let x = solver.solve(rhs)?;
    let res = relative_residual(matrix, &x, rhs);
    if res > 1e-12 * 10.0 {
        return Err(Error::NumericFailure {
            message: format!("{what}: residual above tolerance"),
            residual: res,
        });
    }
    Ok(x)
}

/// L2 projection onto `V_h`: solves `M p = b`, `b_i = (v, phi_i)`.
pub fn l2_project(
    space: &FeSpace,
    mass: &SparseSpd,
    v: &ScalarFunction,
    order: usize,
) -> Result<Vec<f64>> {
    let b = assemble_load(space, |x| v.value(x), order);
    let solver = mass
        .factor()
        .map_err(|e| Error::Internal(format!("singular mass matrix: {e}")))?;
    solve_checked(mass, &solver, &b, "L2 projection")
}

/// Ritz projection with instantaneous coefficients `a(t)`.
pub fn ritz_project(
    space: &FeSpace,
    field: &CoefficientField,
    t: f64,
    v: &ScalarFunction,
    order: usize,
) -> Result<Vec<f64>> {
    if !v.has_gradient() {
        return Err(invalid("Ritz projection needs the gradient of v"));
    }
    let k = assemble_stiffness(space, field, t, order)?;
    let b = assemble_energy_load(
        space,
        |x| field.eval(t, x),
        |x| v.gradient(x).unwrap(),
        order,
    );
    solve_checked(&k, &k.factor()?, &b, "Ritz projection")
}

/// Ritz projection with coefficients averaged over `I_m`.
pub fn ritz_project_avg(
    stiffness: &StiffnessEvaluator,
    grid: &TimeGrid,
    m: usize,
    q: usize,
    v: &ScalarFunction,
) -> Result<Vec<f64>> {
    if !v.has_gradient() {
        return Err(invalid("Ritz projection needs the gradient of v"));
    }
    let kbar = stiffness.averaged(grid, m, q)?;
    let space = stiffness.space();
    let field = stiffness.field();
    let mut b = vec![0.0; space.ndofs()];
    for (t, w) in interval_average_rule(grid, m, q) {
        let bt = assemble_energy_load(
            space,
            |x| field.eval(t, x),
            |x| v.gradient(x).unwrap(),
            stiffness.order(),
        );
        for (bi, x) in b.iter_mut().zip(bt) {
            *bi += w * x;
        }
    }
    solve_checked(&kbar, &kbar.factor()?, &b, "averaged Ritz projection")
}

/// `||v - u_h||_{L2}` for a discrete `u_h` and a function `v`.
pub fn l2_error(
    space: &FeSpace,
    dofs: &[f64],
    v: impl Fn(Point) -> f64 + Sync + Send,
    order: usize,
) -> f64 {
    let tab = space.tabulate(order);
    let nl = space.n_local();
    let parts = exec::map_indexed(space.num_cells(), |c| {
        let g = space.geometry(c);
        let local = space.local_values(c, dofs);
        let mut s = 0.0;
        for (q, w) in tab.rule.weights.iter().enumerate() {
            let uh: f64 = (0..nl).map(|i| tab.values[q * nl + i] * local[i]).sum();
            let e = v(g.map(tab.rule.points[q])) - uh;
            s += w * g.abs_det * e * e;
        }
        s
    });
    parts.iter().sum::<f64>().sqrt()
}

/// `||v||_{L2}` for a function.
pub fn l2_norm(space: &FeSpace, v: impl Fn(Point) -> f64 + Sync + Send, order: usize) -> f64 {
    let zeros = vec![0.0; space.ndofs()];
    l2_error(space, &zeros, v, order)
}

/// Mass-weighted norm `(v^T M v)^{1/2}`.
pub fn mass_norm(mass: &SparseSpd, v: &[f64]) -> f64 {
    let mv = mass.mul_vec(v);
    mv.iter()
        .zip(v)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::corpus_field;
    use crate::mesh::Mesh;
    use std::f64::consts::PI;

    fn space_1d(n: usize, r: usize) -> Arc<FeSpace> {
        Arc::new(FeSpace::new(Arc::new(Mesh::interval(0.0, 1.0, n).unwrap()), r).unwrap())
    }

    #[test]
    fn p1_mass_and_stiffness_rows() {
        let s = space_1d(8, 1);
        let h = 1.0 / 8.0;
        let m = assemble_mass(&s);
        let k = assemble_stiffness(&s, &corpus_field("identity").unwrap(), 0.0, 2).unwrap();
        for (j, (mv, kv)) in [
            (2, (h / 6.0, -1.0 / h)),
            (3, (4.0 * h / 6.0, 2.0 / h)),
            (4, (h / 6.0, -1.0 / h)),
        ] {
            assert!((m.get(3, j) - mv).abs() < 1e-15);
            assert!((k.get(3, j) - kv).abs() < 1e-12);
        }
        assert!(m.symmetry_defect() < 1e-14);
        assert!(k.symmetry_defect() < 1e-14);
    }

    #[test]
    fn full_mass_row_sums_give_domain_measure() {
        // Interior rows plus boundary contributions: sum of all entries of
        // the unreduced mass equals |Omega|; with a one-cell-wide boundary
        // layer removed we check the interior integral of phi_i instead.
        let s = space_1d(8, 2);
        let m = assemble_mass(&s);
        let ones = vec![1.0; s.ndofs()];
        let b = assemble_load(&s, |_| 1.0, 4);
        let row_sums = m.mul_vec(&ones);
        // Row sums over interior columns plus boundary columns equal (1, phi_i);
        // boundary columns only touch the first and last interior rows.
        for i in 1..s.ndofs() - 1 {
            if s.dof_coordinates()[i][0] > 0.2 && s.dof_coordinates()[i][0] < 0.8 {
                assert!((row_sums[i] - b[i]).abs() < 1e-15);
            }
        }
        let total: f64 = b.iter().sum();
        // int phi over all nodes is 1; boundary vertex functions carry h/6 each (P2).
        let h = 1.0 / 8.0;
        assert!((total + 2.0 * h / 6.0 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_space_gives_empty_matrix() {
        let s = FeSpace::new(Arc::new(Mesh::unit_square(1).unwrap()), 1).unwrap();
        let m = assemble_mass(&s);
        assert_eq!(m.dim(), 0);
        assert!(m.factor().unwrap().solve(&[]).unwrap().is_empty());
    }

    #[test]
    fn scalar_time_factor_scales_stiffness() {
        let s = Arc::new(FeSpace::new(Arc::new(Mesh::unit_square(3).unwrap()), 2).unwrap());
        let k0 = assemble_stiffness(&s, &corpus_field("identity").unwrap(), 0.0, 2).unwrap();
        let f = corpus_field("lipschitz-time").unwrap();
        for t in [0.0, 0.3, 1.0] {
            let kt = assemble_stiffness(&s, &f, t, 2).unwrap();
            let ev = StiffnessEvaluator::new(s.clone(), f.clone(), 2)
                .unwrap()
                .at(t);
            for ((a, b), c) in kt.values().iter().zip(k0.values()).zip(ev.values()) {
                assert!((a - (1.0 + t) * b).abs() < 1e-13 * b.abs().max(1.0));
                assert!((a - c).abs() < 1e-13 * b.abs().max(1.0));
            }
        }
        assert!(assemble_stiffness(&s, &f, 0.0, 0).is_err());
    }

    #[test]
    fn averaged_stiffness_factors() {
        let s = space_1d(6, 1);
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let k0 = assemble_laplacian(&s);
        let lin =
            assemble_averaged_stiffness(&s, &corpus_field("lipschitz-time").unwrap(), &grid, 1, 1)
                .unwrap();
        let quad = corpus_field("quadratic-time").unwrap();
        let q1 = assemble_averaged_stiffness(&s, &quad, &grid, 1, 1).unwrap();
        let q2 = assemble_averaged_stiffness(&s, &quad, &grid, 1, 2).unwrap();
        let auto = assemble_averaged_stiffness(&s, &corpus_field("identity").unwrap(), &grid, 1, 3)
            .unwrap();
        for i in 0..k0.nnz() {
            let b = k0.values()[i];
            assert!((lin.values()[i] - 1.5 * b).abs() < 1e-13 * b.abs());
            assert!((q1.values()[i] - 1.25 * b).abs() < 1e-13 * b.abs());
            assert!((q2.values()[i] - 4.0 / 3.0 * b).abs() < 1e-13 * b.abs());
            assert!((auto.values()[i] - b).abs() < 1e-13 * b.abs());
        }
        assert!(assemble_averaged_stiffness(&s, &quad, &grid, 2, 2).is_err());
    }

    #[test]
    fn generic_averaged_stiffness_matches_separable_path() {
        // Strip the separable declaration to force per-time assembly.
        let s = space_1d(5, 2);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let sep = corpus_field("separable").unwrap();
        let generic = CoefficientField::new("separable-generic", 0.5, 1.0, {
            let sep = sep.clone();
            move |t, x| sep.eval(t, x)
        });
        let order = default_stiffness_order(&s);
        let a = StiffnessEvaluator::new(s.clone(), sep, order)
            .unwrap()
            .averaged(&grid, 3, 4)
            .unwrap();
        let b = StiffnessEvaluator::new(s.clone(), generic, order)
            .unwrap()
            .averaged(&grid, 3, 4)
            .unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn projections_of_discrete_functions_are_identity() {
        for (s, f) in [
            (space_1d(6, 1), corpus_field("sine-time").unwrap()),
            (
                Arc::new(FeSpace::new(Arc::new(Mesh::unit_square(4).unwrap()), 2).unwrap()),
                corpus_field("anisotropic").unwrap(),
            ),
        ] {
            let mass = assemble_mass(&s);
            let coords = s.dof_coordinates();
            let vh: Vec<f64> = coords
                .iter()
                .map(|p| (3.0 * p[0] + 7.0 * p[1]).sin() + 0.3)
                .collect();
            let space = s.clone();
            let vh2 = vh.clone();
            let v = ScalarFunction::new({
                let space = space.clone();
                let vh = vh2.clone();
                move |x| space.evaluate(&vh, x).unwrap()
            });
            let p = l2_project(&s, &mass, &v, 2 * s.degree()).unwrap();
            for (a, b) in p.iter().zip(&vh) {
                assert!((a - b).abs() < 1e-12);
            }
            // Ritz: use the energy load of the discrete function directly.
            let t = 0.4;
            let k = assemble_stiffness(&s, &f, t, 4).unwrap();
            let b = k.mul_vec(&vh);
            let r = k.factor().unwrap().solve(&b).unwrap();
            for (a, b) in r.iter().zip(&vh) {
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn zero_projections() {
        let s = space_1d(4, 1);
        let mass = assemble_mass(&s);
        let z = ScalarFunction::zero();
        assert!(l2_project(&s, &mass, &z, 4)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        let f = corpus_field("identity").unwrap();
        assert!(ritz_project(&s, &f, 0.0, &z, 2)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
        let no_grad = ScalarFunction::new(|x| x[0]);
        assert!(matches!(
            ritz_project(&s, &f, 0.0, &no_grad, 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn l2_projection_of_sine_is_second_order_close_to_nodal_values() {
        let s = space_1d(4, 1);
        let mass = assemble_mass(&s);
        let v = ScalarFunction::new(|x| (PI * x[0]).sin());
        let p = l2_project(&s, &mass, &v, 8).unwrap();
        let nodal = s.interpolate(|x| (PI * x[0]).sin());
        let h2 = 1.0 / 16.0;
        for (a, b) in p.iter().zip(&nodal) {
            assert!((a - b).abs() < h2, "{a} vs {b}");
        }
    }

    #[test]
    fn ritz_error_is_second_order_for_p1() {
        let f = corpus_field("identity").unwrap();
        let v = ScalarFunction::new(|x| (PI * x[0]).sin())
            .with_gradient(|x| [PI * (PI * x[0]).cos(), 0.0]);
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let s = space_1d(n, 1);
                let r = ritz_project(&s, &f, 0.0, &v, 4).unwrap();
                l2_error(&s, &r, |x| (PI * x[0]).sin(), 8)
            })
            .collect();
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 2.0).abs() < 0.05, "rate {rate}");
        }
    }

    #[test]
    fn averaged_ritz_is_orthogonal_in_averaged_energy() {
        let s = Arc::new(FeSpace::new(Arc::new(Mesh::unit_square(4).unwrap()), 1).unwrap());
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let f = corpus_field("anisotropic").unwrap();
        let ev = StiffnessEvaluator::new(s.clone(), f.clone(), 4).unwrap();
        let v = ScalarFunction::new(|x| (PI * x[0]).sin() * (PI * x[1]).sin()).with_gradient(|x| {
            [
                PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
            ]
        });
        let r = ritz_project_avg(&ev, &grid, 2, 4, &v).unwrap();
        let kbar = ev.averaged(&grid, 2, 4).unwrap();
        let mut b = vec![0.0; s.ndofs()];
        for (t, w) in interval_average_rule(&grid, 2, 4) {
            let bt = assemble_energy_load(&s, |x| f.eval(t, x), |x| v.gradient(x).unwrap(), 4);
            for (bi, x) in b.iter_mut().zip(bt) {
                *bi += w * x;
            }
        }
        let kr = kbar.mul_vec(&r);
        let res: f64 = kr
            .iter()
            .zip(&b)
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max);
        assert!(res <= 1e-10, "{res}");
        // For an autonomous field the averaged and instantaneous projections agree.
        let id = corpus_field("identity").unwrap();
        let ev = StiffnessEvaluator::new(s.clone(), id.clone(), 4).unwrap();
        let a = ritz_project_avg(&ev, &grid, 3, 2, &v).unwrap();
        let b = ritz_project(&s, &id, 0.77, &v, 4).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

//! dG(0) time stepping: `(M + k_m Kbar_m) u_m = M u_{m-1} + k_m bbar_m`.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::problem::{dot, ExactSolution, ParabolicProblem};
use crate::sparse::{relative_residual, SparseSpd, SpdSolver, SOLVER_TOLERANCE};
use crate::timegrid::TimeGrid;

/// Intervals whose systems are prepared concurrently before stepping.
const PREPARE_BATCH: usize = 16;

/// Piecewise-constant-in-time discrete solution.
#[derive(Debug, Clone)]
pub struct DgSolution {
    grid: TimeGrid,
    initial: Vec<f64>,
    values: Vec<Vec<f64>>,
    loads: Vec<Vec<f64>>,
    stiffness: Vec<Arc<SparseSpd>>,
    mass: Arc<SparseSpd>,
    mass_solver: Arc<SpdSolver>,
    algebraic_residuals: Vec<f64>,
}

struct Prepared {
    kbar: SparseSpd,
    load: Vec<f64>,
    system: SparseSpd,
    solver: SpdSolver,
}

fn prepare(problem: &ParabolicProblem, m: usize) -> Result<Prepared> {
    let kbar = problem.interval_stiffness(m)?;
    let load = problem.average_load_with(m, problem.time_quadrature(), Some(&kbar))?;
    let system = problem.mass().lincomb(1.0, &kbar, problem.grid().step(m));
    let solver = system.factor()?;
    Ok(Prepared {
        kbar,
        load,
        system,
        solver,
    })
}

fn advance(
    problem: &ParabolicProblem,
    m: usize,
    p: &Prepared,
    u_prev: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let k = problem.grid().step(m);
    let mut rhs = problem.mass().mul_vec(u_prev);
    for (r, b) in rhs.iter_mut().zip(&p.load) {
        *r += k * b;
    }
    let u = p.solver.solve(&rhs)?;
    let res = relative_residual(&p.system, &u, &rhs);
    if res > 10.0 * SOLVER_TOLERANCE {
        return Err(Error::NumericFailure {
            message: format!("step {m}: linear solve residual above tolerance"),
            residual: res,
        });
    }
    Ok((u, res))
}

/// Averaged load vector `bbar_m` of interval `m` with `q` time points.
pub fn average_load(problem: &ParabolicProblem, m: usize, q: usize) -> Result<Vec<f64>> {
    problem.average_load_with(m, q, None)
}

/// One time step from `u_prev` on interval `m`.
pub fn step(problem: &ParabolicProblem, m: usize, u_prev: &[f64]) -> Result<Vec<f64>> {
    if u_prev.len() != problem.space().ndofs() {
        return Err(invalid("previous value has the wrong length"));
    }
    let p = prepare(problem, m)?;
    Ok(advance(problem, m, &p, u_prev)?.0)
}

/// Solves `m = 1..M` from `u_0 = P_h u0`. Interval matrices, loads and
/// factorizations are built concurrently in batches; the recursion itself
/// is sequential.
pub fn solve(problem: &ParabolicProblem) -> Result<DgSolution> {
    let grid = problem.grid().clone();
    let nsteps = grid.len();
    let initial = problem.projected_initial()?;
    let mut values = Vec::with_capacity(nsteps);
    let mut loads = Vec::with_capacity(nsteps);
    let mut stiffness = Vec::with_capacity(nsteps);
    let mut residuals = Vec::with_capacity(nsteps);
    let mut u = initial.clone();
    let mut start = 1;
    while start <= nsteps {
        let end = (start + PREPARE_BATCH - 1).min(nsteps);
        let batch = exec::try_map_indexed(end - start + 1, |i| prepare(problem, start + i))?;
        for (i, p) in batch.into_iter().enumerate() {
            let m = start + i;
            let (next, res) = advance(problem, m, &p, &u)?;
            u = next;
            values.push(u.clone());
            loads.push(p.load);
            stiffness.push(Arc::new(p.kbar));
            residuals.push(res);
        }
        start = end + 1;
    }
    Ok(DgSolution {
        grid,
        initial,
        values,
        loads,
        stiffness,
        mass: problem.mass().clone(),
        mass_solver: problem.mass_solver().clone(),
        algebraic_residuals: residuals,
    })
}

#[derive(Debug, Clone, Serialize)]
struct SolutionDocument<'a> {
    nodes: &'a [f64],
    initial: &'a [f64],
    values: &'a [Vec<f64>],
}

impl DgSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P_h u0`.
    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `u_m`, `m = 1..=M`; `value(0)` is `P_h u0`.
    pub fn value(&self, m: usize) -> &[f64] {
        if m == 0 {
            &self.initial
        } else {
            &self.values[m - 1]
        }
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Cached `bbar_m`.
    pub fn load(&self, m: usize) -> &[f64] {
        &self.loads[m - 1]
    }

    /// Cached `Kbar_m`.
    pub fn stiffness(&self, m: usize) -> &Arc<SparseSpd> {
        &self.stiffness[m - 1]
    }

    pub fn mass(&self) -> &Arc<SparseSpd> {
        &self.mass
    }

    pub fn mass_solver(&self) -> &Arc<SpdSolver> {
        &self.mass_solver
    }

    pub fn algebraic_residuals(&self) -> &[f64] {
        &self.algebraic_residuals
    }

    /// Value at time `t` under the left-continuous convention: `u_m` on `(t_{m-1}, t_m]`.
    pub fn at_time(&self, t: f64) -> &[f64] {
        self.value(self.grid.interval_of(t))
    }

    /// `[u]_{m-1} = u_m - u_{m-1}` for `m = 1..=M`, with `u_0 = P_h u0`.
    pub fn jumps(&self) -> Vec<Vec<f64>> {
        (1..=self.len())
            .map(|m| {
                self.value(m)
                    .iter()
                    .zip(self.value(m - 1))
                    .map(|(a, b)| a - b)
                    .collect()
            })
            .collect()
    }

    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        dot(v, &self.mass.mul_vec(v)).max(0.0).sqrt()
    }

    /// `||M^{-1} r||` in the mass geometry, i.e. `(r^T M^{-1} r)^{1/2}`.
    pub fn dual_norm(&self, r: &[f64]) -> Result<f64> {
        let z = self.mass_solver.solve(r)?;
        Ok(dot(r, &z).max(0.0).sqrt())
    }

    /// `A_{kh,m} u_m = M^{-1} Kbar_m u_m`.
    pub fn apply_a(&self, m: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.mass_solver.solve(&self.stiffness(m).mul_vec(v))
    }

    /// Max over `m` of `|| [u]_{m-1}/k_m + A_m u_m - P_h f_m ||`, relative to
    /// the largest of the three terms' norms (0 for an all-zero run).
    pub fn residual_identity_check(&self) -> Result<f64> {
        let jumps = self.jumps();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for m in 1..=self.len() {
            let k = self.grid.step(m);
            let mj = self.mass.mul_vec(&jumps[m - 1]);
            let ku = self.stiffness(m).mul_vec(self.value(m));
            let b = self.load(m);
            let r: Vec<f64> = (0..mj.len()).map(|i| mj[i] / k + ku[i] - b[i]).collect();
            worst = worst.max(self.dual_norm(&r)?);
            let terms = [
                self.l2_norm(&jumps[m - 1]) / k,
                self.dual_norm(&ku)?,
                self.dual_norm(b)?,
            ];
            scale = terms.iter().fold(scale, |s, &x| s.max(x));
        }
        Ok(if scale == 0.0 { worst } else { worst / scale })
    }

    /// CSV rows `t_m, ||u_m||, ||[u]_{m-1}||`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,t_m,norm_u_m,norm_jump_m_minus_1\n");
        for (m, j) in self.jumps().iter().enumerate() {
            let m = m + 1;
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                m,
                self.grid.node(m),
                self.l2_norm(self.value(m)),
                self.l2_norm(j)
            );
        }
        out
    }

    /// Per-interval vectors as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SolutionDocument {
            nodes: self.grid.nodes(),
            initial: &self.initial,
            values: &self.values,
        })
        .expect("solution serializes")
    }

    #[cfg(test)]
    pub(crate) fn perturb(&mut self, m: usize, i: usize, delta: f64) {
        self.values[m - 1][i] += delta;
    }
}

/// Max over `m` and interior basis functions of `|B(u - u_kh, phi_i chi_m)|`,
/// with the time integrals of the exact solution's energy form taken by a
/// `q`-point Gauss rule per interval.
pub fn galerkin_orthogonality_check(
    problem: &ParabolicProblem,
    sol: &DgSolution,
    q: usize,
) -> Result<f64> {
    if problem.exact().is_none() {
        return Err(invalid("Galerkin orthogonality needs an exact solution"));
    }
    if q == 0 {
        return Err(invalid("time quadrature needs at least one point"));
    }
    let grid = problem.grid();
    if grid.nodes() != sol.grid().nodes() {
        return Err(invalid("solution was computed on a different grid"));
    }
    let per_m = exec::try_map_indexed(grid.len(), |i| -> Result<f64> {
        let m = i + 1;
        let k = grid.step(m);
        // B(u, phi chi_m) = (u(t_m), phi) - [m >= 2](u(t_{m-1}), phi) + int a(t; u, phi)
        let mut bu = problem.exact_mass_load(grid.node(m))?;
        if m >= 2 {
            for (x, y) in bu
                .iter_mut()
                .zip(problem.exact_mass_load(grid.node(m - 1))?)
            {
                *x -= y;
            }
        }
        for (t, w) in crate::assembly::interval_average_rule(grid, m, q) {
            for (x, y) in bu.iter_mut().zip(problem.exact_energy_load(t)?) {
                *x += k * w * y;
            }
        }
        // B(u_kh, phi chi_m) = (u_m - [m >= 2] u_{m-1}, phi) + k_m (Kbar_m u_m, phi)
        let mut diff = sol.value(m).to_vec();
        if m >= 2 {
            for (x, y) in diff.iter_mut().zip(sol.value(m - 1)) {
                *x -= y;
            }
        }
        let bkh_mass = sol.mass().mul_vec(&diff);
        let bkh_stiff = sol.stiffness(m).mul_vec(sol.value(m));
        Ok(bu
            .iter()
            .zip(bkh_mass.iter().zip(&bkh_stiff))
            .map(|(a, (b, c))| (a - b - k * c).abs())
            .fold(0.0, f64::max))
    })?;
    Ok(per_m.into_iter().fold(0.0, f64::max))
}

/// Maximum over `m` of the error `||u(t_m) - u_m||` at the nodes.
pub fn nodal_error(problem: &ParabolicProblem, sol: &DgSolution) -> Result<f64> {
    let grid = problem.grid();
    let errs = exec::try_map_indexed(grid.len(), |i| {
        problem.exact_error_at(grid.node(i + 1), sol.value(i + 1))
    })?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// True when the problem's exact solution is a time-constant discrete function.
pub fn is_reproduction(problem: &ParabolicProblem) -> bool {
    matches!(problem.exact(), Some(ExactSolution::Discrete(_)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::corpus_field;
    use crate::fem::FeSpace;
    use crate::mesh::Mesh;
    use crate::problem::{corpus_problem, InitialDatum, Scheme, Source};

    fn space(dim: usize, n: usize, r: usize) -> Arc<crate::fem::FeSpace> {
        let mesh = if dim == 1 {
            Mesh::interval(0.0, 1.0, n).unwrap()
        } else {
            Mesh::unit_square(n).unwrap()
        };
        Arc::new(FeSpace::new(Arc::new(mesh), r).unwrap())
    }

    #[test]
    fn single_dof_step_is_the_rational_factor() {
        // Two P1 cells on (0, 2): one interior dof with M = 4/3 (h=1: 2h/3) and K = 2.
        let s = Arc::new(FeSpace::new(Arc::new(Mesh::interval(0.0, 2.0, 2).unwrap()), 1).unwrap());
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let p = ParabolicProblem::new(s, grid, corpus_field("identity").unwrap()).unwrap();
        let lambda = 2.0 / (2.0 / 3.0);
        let u = step(&p, 1, &[1.0]).unwrap();
        assert!((u[0] - 1.0 / (1.0 + lambda)).abs() < 1e-15);
        assert_eq!(step(&p, 1, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn zero_problem_has_zero_solution_and_zero_residual() {
        let p = corpus_problem("zero", space(1, 8, 1), TimeGrid::uniform(1.0, 4).unwrap()).unwrap();
        let sol = solve(&p).unwrap();
        assert!(sol.values().iter().flatten().all(|&x| x == 0.0));
        assert_eq!(sol.residual_identity_check().unwrap(), 0.0);
    }

    #[test]
    fn jumps_of_single_interval() {
        let p = corpus_problem(
            "heat-lipschitz",
            space(1, 8, 1),
            TimeGrid::uniform(1.0, 1).unwrap(),
        )
        .unwrap();
        let sol = solve(&p).unwrap();
        let j = sol.jumps();
        assert_eq!(j.len(), 1);
        for ((a, b), c) in sol.value(1).iter().zip(sol.initial()).zip(&j[0]) {
            assert_eq!(a - b, *c);
        }
    }

    #[test]
    fn identity_residual_and_perturbation() {
        let p = corpus_problem(
            "heat-sine",
            space(2, 6, 1),
            TimeGrid::uniform(1.0, 8).unwrap(),
        )
        .unwrap();
        let mut sol = solve(&p).unwrap();
        assert!(sol.residual_identity_check().unwrap() < 1e-11);
        sol.perturb(3, 5, 1e-3);
        let r = sol.residual_identity_check().unwrap();
        assert!(r > 1e-6, "perturbation not detected: {r}");
    }

    #[test]
    fn homogeneous_steps_do_not_increase_the_norm() {
        let p = corpus_problem(
            "heat-anisotropic",
            space(2, 5, 2),
            TimeGrid::graded(1.0, 10, 2.0).unwrap(),
        )
        .unwrap()
        .with_source(Source::Zero)
        .unwrap();
        let sol = solve(&p).unwrap();
        for m in 1..=sol.len() {
            assert!(sol.l2_norm(sol.value(m)) <= sol.l2_norm(sol.value(m - 1)) + 1e-15);
        }
    }

    #[test]
    fn left_continuous_evaluation() {
        let p = corpus_problem(
            "heat-lipschitz",
            space(1, 6, 1),
            TimeGrid::uniform(1.0, 4).unwrap(),
        )
        .unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.at_time(0.25), sol.value(1));
        assert_eq!(sol.at_time(0.3), sol.value(2));
        assert_eq!(sol.at_time(1.0), sol.value(4));
    }

    #[test]
    fn reproduction_is_exact() {
        for id in ["reproduction", "reproduction-anisotropic"] {
            let p =
                corpus_problem(id, space(2, 5, 2), TimeGrid::graded(1.0, 7, 1.5).unwrap()).unwrap();
            let sol = solve(&p).unwrap();
            assert!(nodal_error(&p, &sol).unwrap() < 1e-12);
            assert!(sol.jumps().iter().flatten().all(|x| x.abs() < 1e-12));
            assert!(galerkin_orthogonality_check(&p, &sol, 4).unwrap() < 1e-12);
        }
    }

    #[test]
    fn orthogonality_residual_shrinks_with_quadrature() {
        let s = space(1, 8, 2);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let mut last = f64::INFINITY;
        let mut values = Vec::new();
        for q in [1, 2, 3, 5] {
            let p = corpus_problem("heat-sine", s.clone(), grid.clone())
                .unwrap()
                .with_time_quadrature(q)
                .unwrap();
            let sol = solve(&p).unwrap();
            let r = galerkin_orthogonality_check(&p, &sol, q).unwrap();
            values.push(r);
            assert!(r < last, "{values:?}");
            last = r;
        }
        assert!(last < 1e-7, "{values:?}");
    }

    #[test]
    fn orthogonality_needs_exact_solution() {
        let p = corpus_problem(
            "forced-lipschitz",
            space(1, 4, 1),
            TimeGrid::uniform(1.0, 2).unwrap(),
        )
        .unwrap();
        let sol = solve(&p).unwrap();
        assert!(matches!(
            galerkin_orthogonality_check(&p, &sol, 4),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn backward_euler_differs_from_dg0_for_time_dependent_coefficients() {
        let s = space(1, 8, 1);
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let a = solve(&corpus_problem("heat-sine", s.clone(), grid.clone()).unwrap()).unwrap();
        let b = solve(
            &corpus_problem("heat-sine", s, grid)
                .unwrap()
                .with_scheme(Scheme::BackwardEuler),
        )
        .unwrap();
        let d: f64 = a
            .value(4)
            .iter()
            .zip(b.value(4))
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(d > 1e-6);
    }

    #[test]
    fn exports_have_one_row_per_interval() {
        let p = corpus_problem(
            "heat-lipschitz",
            space(1, 4, 1),
            TimeGrid::uniform(1.0, 3).unwrap(),
        )
        .unwrap()
        .with_initial(InitialDatum::Zero)
        .unwrap();
        let sol = solve(&p).unwrap();
        assert_eq!(sol.to_csv().lines().count(), 4);
        let v: serde_json::Value = serde_json::from_str(&sol.to_json()).unwrap();
        assert_eq!(v["values"].as_array().unwrap().len(), 3);
    }
}

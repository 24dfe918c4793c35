//! Block realization of the discrete operator calculus: the frozen rational
//! propagators `R_{m,l}`, the operators `Q`, `L`, `D` and their
//! mu-transformed versions, identity checks, and norm audits.
//!
//! With `A_m = M^{-1} Kbar_m` the transformed operator is
//! `At_m = (1 + k_m mu) A_m + mu I`, i.e. stiffness `Kt_m = (1 + k_m mu) Kbar_m + mu M`.
//! Every block is a [`Chain`] of mass-weighted factors, so norms are taken
//! in the discrete L2 geometry.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::assembly::{default_stiffness_order, StiffnessEvaluator};
use crate::coeffs::{unit_samples, CoefficientField};
use crate::dg0::DgSolution;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fem::FeSpace;
use crate::norms::{operator_norm, Chain, Factor, Geometry, NormKind};
use crate::problem::ParabolicProblem;
use crate::sparse::{SparseSpd, SpdSolver};
use crate::timegrid::TimeGrid;

type Trajectories = Vec<Vec<f64>>;
/// Scale function of a smoothing audit.
type Predictor<'a> = &'a dyn Fn(usize, usize) -> f64;

/// Default cap on `M * dofs` for full block assembly.
pub const DEFAULT_BUDGET: usize = 4000;
/// Default mu sweep.
pub const DEFAULT_MU_SWEEP: &[f64] = &[0.0, 1.0, 4.0, 16.0, 64.0, 256.0];
/// Largest space for which dense generalized eigenvalues are computed.
pub const DENSE_EIGEN_LIMIT: usize = 2000;

/// Temporal modulus of continuity `omega(s) = constant * s^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Modulus {
    pub constant: f64,
    pub exponent: f64,
}

impl Modulus {
    pub const ZERO: Modulus = Modulus {
        constant: 0.0,
        exponent: 1.0,
    };

    pub fn omega(&self, s: f64) -> f64 {
        self.constant * s.max(0.0).powf(self.exponent)
    }

    /// Fits the modulus of a field on `[0, T]` (zero for autonomous fields).
    pub fn fit(field: &CoefficientField, dim: usize, final_time: f64) -> Result<Modulus> {
        if field.is_autonomous() {
            return Ok(Modulus::ZERO);
        }
        let report = field.temporal_modulus_audit(dim, final_time, 6, 33, &unit_samples(dim, 5))?;
        Ok(match report.exponent {
            None => Modulus::ZERO,
            Some(e) => Modulus {
                constant: report.constant,
                exponent: e,
            },
        })
    }
}

/// One audited block or sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormEntry {
    pub m: usize,
    pub l: usize,
    pub norm: f64,
    pub predicted_bound: f64,
    pub ratio: f64,
}

impl NormEntry {
    fn new(m: usize, l: usize, norm: f64, predicted_bound: f64) -> Self {
        let ratio = if predicted_bound > 0.0 {
            norm / predicted_bound
        } else if norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self {
            m,
            l,
            norm,
            predicted_bound,
            ratio,
        }
    }
}

/// Norms of a block family with aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct NormAudit {
    pub quantity: String,
    pub mu: f64,
    pub entries: Vec<NormEntry>,
    /// `max_m sum_l norm(m, l)`.
    pub row_sum_max: f64,
    /// `max_l sum_m (k_m / k_l) norm(m, l)`.
    pub col_sum_max: f64,
    /// Largest `norm / predicted_bound`.
    pub fitted_constant: f64,
    pub all_converged: bool,
}

impl NormAudit {
    fn new(
        quantity: &str,
        mu: f64,
        entries: Vec<NormEntry>,
        grid: Option<&TimeGrid>,
        converged: bool,
    ) -> Self {
        let mut rows: BTreeMap<usize, f64> = BTreeMap::new();
        let mut cols: BTreeMap<usize, f64> = BTreeMap::new();
        for e in &entries {
            *rows.entry(e.m).or_default() += e.norm;
            if let Some(g) = grid {
                *cols.entry(e.l).or_default() += g.step(e.m) / g.step(e.l) * e.norm;
            }
        }
        let fitted_constant = entries.iter().map(|e| e.ratio).fold(0.0, f64::max);
        Self {
            quantity: quantity.into(),
            mu,
            row_sum_max: rows.values().copied().fold(0.0, f64::max),
            col_sum_max: cols.values().copied().fold(0.0, f64::max),
            fitted_constant,
            entries,
            all_converged: converged,
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.norm).fold(0.0, f64::max)
    }

    /// Largest `norm * (t_m - t_{l-1})^power`.
    pub fn max_scaled(&self, grid: &TimeGrid, power: i32) -> f64 {
        self.entries
            .iter()
            .map(|e| e.norm * (grid.node(e.m) - grid.node(e.l - 1)).powi(power))
            .fold(0.0, f64::max)
    }
}

/// CSV with columns `quantity,mu,m,l,norm,predicted_bound,ratio`, one
/// block of rows per audit.
pub fn audits_to_csv(audits: &[NormAudit]) -> String {
    let mut out = String::from("quantity,mu,m,l,norm,predicted_bound,ratio\n");
    for a in audits {
        for e in &a.entries {
            let _ = writeln!(
                out,
                "{},{:.16e},{},{},{:.16e},{:.16e},{:.16e}",
                a.quantity, a.mu, e.m, e.l, e.norm, e.predicted_bound, e.ratio
            );
        }
    }
    out
}

/// Result of the resolvent audit on one interval.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventReport {
    pub samples: NormAudit,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `||At_m^{-1}||_{L2 -> L2} = 1 / lambda_min`.
    pub inverse_l2: f64,
    /// `||At_m^{-1}||_{L2 -> H1}` by Lanczos.
    pub inverse_h1: f64,
    /// `1 / (sqrt(mu) (1 + k_m mu)^{1/2})`.
    pub inverse_h1_predicted: f64,
}

/// Precomputed factorizations for the blocks of one mu.
pub struct OperatorCalculus {
    grid: TimeGrid,
    mu: f64,
    geometry: Arc<Geometry>,
    kbar: Vec<Arc<SparseSpd>>,
    ktilde: Vec<Arc<SparseSpd>>,
    ktilde_solver: Vec<Arc<SpdSolver>>,
    /// `(m, step bits) -> factorization of M + k Kt_m`.
    resolvents: BTreeMap<(usize, u64), Arc<SpdSolver>>,
}

fn check_budget(grid: &TimeGrid, ndofs: usize, budget: usize) -> Result<()> {
    let needed = grid.len() * ndofs;
    if needed > budget {
        return Err(Error::ResourceLimit {
            what: "block operator assembly (M * dofs)".into(),
            needed,
            budget,
        });
    }
    Ok(())
}

impl OperatorCalculus {
    /// Builds the calculus for the averaged stiffness of `field` on `grid`.
    pub fn new(
        space: &Arc<FeSpace>,
        field: &CoefficientField,
        grid: &TimeGrid,
        time_quadrature: usize,
        mu: f64,
        budget: usize,
    ) -> Result<Self> {
        check_budget(grid, space.ndofs(), budget)?;
        let eval =
            StiffnessEvaluator::new(space.clone(), field.clone(), default_stiffness_order(space))?;
        let kbar = exec::try_map_indexed(grid.len(), |i| {
            eval.averaged(grid, i + 1, time_quadrature).map(Arc::new)
        })?;
        let geometry = Arc::new(Geometry::new(space)?);
        Self::from_parts(grid.clone(), mu, geometry, kbar)
    }

    /// Reuses the matrices of a solved problem.
    pub fn for_solution(
        problem: &ParabolicProblem,
        sol: &DgSolution,
        mu: f64,
        budget: usize,
    ) -> Result<Self> {
        check_same_discretization(problem, sol)?;
        check_budget(problem.grid(), problem.space().ndofs(), budget)?;
        let geometry = Arc::new(Geometry::with_mass(
            problem.space(),
            problem.mass().clone(),
            problem.mass_solver().clone(),
        )?);
        let kbar = (1..=sol.len()).map(|m| sol.stiffness(m).clone()).collect();
        Self::from_parts(problem.grid().clone(), mu, geometry, kbar)
    }

    /// Shares the geometry and averaged matrices with a different mu.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::from_parts(
            self.grid.clone(),
            mu,
            self.geometry.clone(),
            self.kbar.clone(),
        )
    }

    fn from_parts(
        grid: TimeGrid,
        mu: f64,
        geometry: Arc<Geometry>,
        kbar: Vec<Arc<SparseSpd>>,
    ) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(invalid(format!(
                "mu must be a finite non-negative number, got {mu}"
            )));
        }
        let mass = geometry.mass().clone();
        let nsteps = grid.len();
        let ktilde: Vec<Arc<SparseSpd>> = (0..nsteps)
            .map(|i| Arc::new(kbar[i].lincomb(1.0 + grid.step(i + 1) * mu, &mass, mu)))
            .collect();
        let ktilde_solver = exec::try_map_indexed(nsteps, |i| ktilde[i].factor().map(Arc::new))?;
        let mut keys = Vec::new();
        for m in 1..=nsteps {
            let mut seen: Vec<u64> = (1..=m).map(|j| grid.step(j).to_bits()).collect();
            seen.sort_unstable();
            seen.dedup();
            keys.extend(seen.into_iter().map(|b| (m, b)));
        }
        let solvers = exec::try_map_indexed(keys.len(), |i| {
            let (m, bits) = keys[i];
            mass.lincomb(1.0, &ktilde[m - 1], f64::from_bits(bits))
                .factor()
                .map(Arc::new)
        })?;
        Ok(Self {
            grid,
            mu,
            geometry,
            kbar,
            ktilde,
            ktilde_solver,
            resolvents: keys.into_iter().zip(solvers).collect(),
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn transformed_stiffness(&self, m: usize) -> &Arc<SparseSpd> {
        &self.ktilde[m - 1]
    }

    fn chain(&self) -> Chain {
        Chain::new(
            self.geometry.mass().clone(),
            self.geometry.mass_solver().clone(),
        )
    }

    fn check_interval(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.grid.len() {
            return Err(invalid(format!(
                "interval index {m} outside 1..={}",
                self.grid.len()
            )));
        }
        Ok(())
    }

    fn push_propagator(&self, mut c: Chain, m: usize, l: usize) -> Chain {
        for j in l..=m {
            let key = (m, self.grid.step(j).to_bits());
            c = c.then(Factor::SolveMass(self.resolvents[&key].clone()));
        }
        c
    }

    /// `At_m` as an operator.
    pub fn a(&self, m: usize) -> Result<Chain> {
        self.check_interval(m)?;
        Ok(self
            .chain()
            .then(Factor::MassInverse(self.ktilde[m - 1].clone())))
    }

    /// `At_m^{-1}`.
    pub fn a_inverse(&self, m: usize) -> Result<Chain> {
        self.check_interval(m)?;
        Ok(self
            .chain()
            .then(Factor::SolveMass(self.ktilde_solver[m - 1].clone())))
    }

    /// `R_{m,l} = prod_{j=l}^{m} (I + k_j At_m)^{-1}`.
    pub fn rational_propagator(&self, m: usize, l: usize) -> Result<Chain> {
        self.check_interval(m)?;
        if l == 0 || l > m {
            return Err(invalid(format!(
                "propagator needs 1 <= l <= m, got m={m}, l={l}"
            )));
        }
        Ok(self.push_propagator(self.chain(), m, l))
    }

    /// `Q_{m,l} = k_l At_m R_{m,l} (At_m - At_l) At_l^{-1}`, `l < m`.
    pub fn q_block(&self, m: usize, l: usize) -> Result<Chain> {
        self.check_interval(m)?;
        if l == 0 || l >= m {
            return Err(invalid(format!(
                "Q block needs 1 <= l < m, got m={m}, l={l}"
            )));
        }
        let diff = self.ktilde[m - 1].lincomb(1.0, &self.ktilde[l - 1], -1.0);
        let c = self
            .chain()
            .then(Factor::Scale(self.grid.step(l)))
            .then(Factor::MassInverse(self.ktilde[m - 1].clone()));
        Ok(self
            .push_propagator(c, m, l)
            .then(Factor::MassInverse(Arc::new(diff)))
            .then(Factor::SolveMass(self.ktilde_solver[l - 1].clone())))
    }

    /// `L_{m,l} = k_l At_m R_{m,l}`, `l <= m`.
    pub fn l_block(&self, m: usize, l: usize) -> Result<Chain> {
        self.check_interval(m)?;
        if l == 0 || l > m {
            return Err(invalid(format!(
                "L block needs 1 <= l <= m, got m={m}, l={l}"
            )));
        }
        let c = self
            .chain()
            .then(Factor::Scale(self.grid.step(l)))
            .then(Factor::MassInverse(self.ktilde[m - 1].clone()));
        Ok(self.push_propagator(c, m, l))
    }

    /// `D_m = At_m R_{m,1}`.
    pub fn d_block(&self, m: usize) -> Result<Chain> {
        self.check_interval(m)?;
        let c = self
            .chain()
            .then(Factor::MassInverse(self.ktilde[m - 1].clone()));
        Ok(self.push_propagator(c, m, 1))
    }

    /// `c_m = prod_{l <= m} (1 + mu k_l)`, `c_0 = 1`.
    pub fn weight(&self, m: usize) -> f64 {
        (1..=m).map(|l| 1.0 + self.mu * self.grid.step(l)).product()
    }

    fn l2(&self, v: &[f64]) -> Result<f64> {
        self.geometry.norm(NormKind::L2, v)
    }

    /// Transformed data of a solution: `w_m`, `f~_m = f_m / c_{m-1}` and `w_0 = u_0`.
    fn transformed(&self, sol: &DgSolution) -> Result<(Trajectories, Trajectories)> {
        let solver = self.geometry.mass_solver();
        let mut w = Vec::with_capacity(sol.len() + 1);
        let mut f = Vec::with_capacity(sol.len() + 1);
        w.push(sol.initial().to_vec());
        f.push(Vec::new());
        for m in 1..=sol.len() {
            let cm = self.weight(m);
            w.push(sol.value(m).iter().map(|x| x / cm).collect());
            let fm = solver.solve(sol.load(m))?;
            let c = self.weight(m - 1);
            f.push(fm.into_iter().map(|x| x / c).collect());
        }
        Ok((w, f))
    }

    fn check_solution(&self, sol: &DgSolution) -> Result<()> {
        if sol.grid().nodes() != self.grid.nodes() || sol.initial().len() != self.geometry.dim() {
            return Err(invalid(
                "solution and operator calculus use different discretizations",
            ));
        }
        Ok(())
    }

    /// Max over `m` of `|| w_m - [sum_{l<m} k_l R_{m,l}(At_m - At_l) w_l
    /// + sum_{l<=m} k_l R_{m,l} f~_l + R_{m,1} w_0] ||`, relative to `max_m ||w_m||`.
    pub fn representation_check(&self, sol: &DgSolution) -> Result<f64> {
        self.check_solution(sol)?;
        let (w, f) = self.transformed(sol)?;
        let per_m = exec::try_map_indexed(sol.len(), |i| -> Result<f64> {
            let m = i + 1;
            let mut rhs = self.rational_propagator(m, 1)?.apply(&w[0])?;
            for l in 1..=m {
                let k = self.grid.step(l);
                let mut g: Vec<f64> = f[l].iter().map(|x| k * x).collect();
                if l < m {
                    let diff = self.ktilde[m - 1].lincomb(1.0, &self.ktilde[l - 1], -1.0);
                    let d = self.geometry.mass_solver().solve(&diff.mul_vec(&w[l]))?;
                    for (gi, di) in g.iter_mut().zip(d) {
                        *gi += k * di;
                    }
                }
                let r = self.rational_propagator(m, l)?.apply(&g)?;
                for (a, b) in rhs.iter_mut().zip(r) {
                    *a += b;
                }
            }
            let res: Vec<f64> = w[m].iter().zip(&rhs).map(|(a, b)| a - b).collect();
            self.l2(&res)
        })?;
        let scale = w.iter().map(|v| self.l2(v)).collect::<Result<Vec<_>>>()?;
        relative(per_m, scale)
    }

    /// Max over `m` of `|| v_m - (Q v)_m - (L f~)_m - D_m u_0 ||` with `v_l = At_l w_l`,
    /// relative to `max_m ||v_m||`.
    pub fn fixed_point_check(&self, sol: &DgSolution) -> Result<f64> {
        self.check_solution(sol)?;
        let (w, f) = self.transformed(sol)?;
        let v = exec::try_map_indexed(sol.len(), |i| self.a(i + 1)?.apply(&w[i + 1]))?;
        let per_m = exec::try_map_indexed(sol.len(), |i| -> Result<f64> {
            let m = i + 1;
            let mut rhs = self.d_block(m)?.apply(&w[0])?;
            for l in 1..=m {
                let lf = self.l_block(m, l)?.apply(&f[l])?;
                for (a, b) in rhs.iter_mut().zip(lf) {
                    *a += b;
                }
                if l < m {
                    let qv = self.q_block(m, l)?.apply(&v[l - 1])?;
                    for (a, b) in rhs.iter_mut().zip(qv) {
                        *a += b;
                    }
                }
            }
            let res: Vec<f64> = v[i].iter().zip(&rhs).map(|(a, b)| a - b).collect();
            self.l2(&res)
        })?;
        let scale = v.iter().map(|x| self.l2(x)).collect::<Result<Vec<_>>>()?;
        relative(per_m, scale)
    }

    /// Solves the transformed recursion `(M + k_m Kt_m) w_m = M w_{m-1} + k_m M f~_m`
    /// and returns `max_m ||c_m w_m - u_m|| / max_m ||u_m||`.
    pub fn w_transform_check(&self, sol: &DgSolution) -> Result<f64> {
        self.check_solution(sol)?;
        let mass = self.geometry.mass();
        let mut w = sol.initial().to_vec();
        let mut errs = Vec::with_capacity(sol.len());
        let mut scale = Vec::with_capacity(sol.len());
        for m in 1..=sol.len() {
            let k = self.grid.step(m);
            let c_prev = self.weight(m - 1);
            let mut rhs = mass.mul_vec(&w);
            for (r, b) in rhs.iter_mut().zip(sol.load(m)) {
                *r += k * b / c_prev;
            }
            w = self.resolvents[&(m, k.to_bits())].solve(&rhs)?;
            let cm = self.weight(m);
            let d: Vec<f64> = w
                .iter()
                .zip(sol.value(m))
                .map(|(a, b)| cm * a - b)
                .collect();
            errs.push(self.l2(&d)?);
            scale.push(self.l2(sol.value(m))?);
        }
        relative(errs, scale)
    }

    fn block_norms<F>(
        &self,
        pairs: &[(usize, usize)],
        from: NormKind,
        to: NormKind,
        build: F,
    ) -> Result<Vec<(f64, bool)>>
    where
        F: Fn(usize, usize) -> Result<Chain> + Sync + Send,
    {
        exec::try_map_indexed(pairs.len(), |i| {
            let (m, l) = pairs[i];
            let est = operator_norm(&build(m, l)?, &self.geometry, from, to)?;
            Ok((est.value, est.converged))
        })
    }

    fn sqrt_mu_factor(&self, k: f64) -> f64 {
        if self.mu > 0.0 {
            self.mu.sqrt() * (1.0 + self.mu * k).sqrt()
        } else {
            1.0
        }
    }

    /// L2 norms of all `Q_{m,l}`, with the row-sum (L-infinity type) and
    /// weighted column-sum (L1 type) aggregates. The predicted factor is the
    /// product of the smoothing, difference and inverse bounds
    /// `k_l ((1 + mu min k) omega(tau) + mu |k_m - k_l|) / (tau^{3/2} (1 + mu k_m)^{1/2} sqrt(mu) (1 + mu k_l)^{1/2})`,
    /// `tau = t_m - t_{l-1}` (the `sqrt(mu)` factors are dropped at `mu = 0`).
    pub fn contraction_audit(&self, modulus: &Modulus) -> Result<NormAudit> {
        let n = self.grid.len();
        let pairs: Vec<(usize, usize)> =
            (2..=n).flat_map(|m| (1..m).map(move |l| (m, l))).collect();
        let norms = self.block_norms(&pairs, NormKind::L2, NormKind::L2, |m, l| {
            self.q_block(m, l)
        })?;
        let g = &self.grid;
        let entries = pairs
            .iter()
            .zip(&norms)
            .map(|(&(m, l), &(norm, _))| {
                let (km, kl) = (g.step(m), g.step(l));
                let tau = g.node(m) - g.node(l - 1);
                let diff =
                    (1.0 + self.mu * km.min(kl)) * modulus.omega(tau) + self.mu * (km - kl).abs();
                let smoothing = if self.mu > 0.0 {
                    (1.0 + self.mu * km).sqrt()
                } else {
                    1.0
                };
                let predicted = kl * diff / (tau.powf(1.5) * smoothing * self.sqrt_mu_factor(kl));
                NormEntry::new(m, l, norm, predicted)
            })
            .collect();
        let converged = norms.iter().all(|x| x.1);
        Ok(NormAudit::new(
            "contraction_q",
            self.mu,
            entries,
            Some(g),
            converged,
        ))
    }

    /// Smoothing audits over pairs `m - l >= 1`: `||At_m R_{m,l}||` against
    /// `1/tau`, `||At_m^2 R_{m,l}||` against `1/tau^2`, and the L2 -> H1 and
    /// H^{-1} -> L2 norms of `At_m R_{m,l}` against `1/(tau^{3/2} (1 + mu k_m)^{1/2})`.
    pub fn smoothing_audit(&self) -> Result<Vec<NormAudit>> {
        let n = self.grid.len();
        let g = &self.grid;
        let pairs: Vec<(usize, usize)> =
            (2..=n).flat_map(|m| (1..m).map(move |l| (m, l))).collect();
        let tau = |m: usize, l: usize| g.node(m) - g.node(l - 1);
        let ar = |m: usize, l: usize| -> Result<Chain> {
            let c = self
                .chain()
                .then(Factor::MassInverse(self.ktilde[m - 1].clone()));
            Ok(self.push_propagator(c, m, l))
        };
        let a2r = |m: usize, l: usize| -> Result<Chain> {
            let c = self
                .chain()
                .then(Factor::MassInverse(self.ktilde[m - 1].clone()))
                .then(Factor::MassInverse(self.ktilde[m - 1].clone()));
            Ok(self.push_propagator(c, m, l))
        };
        let h1_pred =
            |m: usize, l: usize| 1.0 / (tau(m, l).powf(1.5) * (1.0 + self.mu * g.step(m)).sqrt());
        let specs: [(&str, NormKind, NormKind, bool, Predictor); 4] = [
            (
                "smoothing_ar_l2",
                NormKind::L2,
                NormKind::L2,
                false,
                &|m, l| 1.0 / tau(m, l),
            ),
            (
                "smoothing_a2r_l2",
                NormKind::L2,
                NormKind::L2,
                true,
                &|m, l| 1.0 / tau(m, l).powi(2),
            ),
            (
                "smoothing_ar_l2_h1",
                NormKind::L2,
                NormKind::H1,
                false,
                &h1_pred,
            ),
            (
                "smoothing_ar_hm1_l2",
                NormKind::Hm1,
                NormKind::L2,
                false,
                &h1_pred,
            ),
        ];
        let mut out = Vec::with_capacity(specs.len());
        for (name, from, to, squared, pred) in specs {
            let norms = if squared {
                self.block_norms(&pairs, from, to, a2r)?
            } else {
                self.block_norms(&pairs, from, to, ar)?
            };
            let entries = pairs
                .iter()
                .zip(&norms)
                .map(|(&(m, l), &(v, _))| NormEntry::new(m, l, v, pred(m, l)))
                .collect();
            out.push(NormAudit::new(
                name,
                self.mu,
                entries,
                None,
                norms.iter().all(|x| x.1),
            ));
        }
        Ok(out)
    }

    /// `||L_{m,l}||` for all `l <= m`; the row-sum aggregate is compared with
    /// `ln(T/k)` through the fitted constant of the aggregate entry `(0, 0)`.
    pub fn l_audit(&self) -> Result<NormAudit> {
        let n = self.grid.len();
        let pairs: Vec<(usize, usize)> =
            (1..=n).flat_map(|m| (1..=m).map(move |l| (m, l))).collect();
        let norms = self.block_norms(&pairs, NormKind::L2, NormKind::L2, |m, l| {
            self.l_block(m, l)
        })?;
        let g = &self.grid;
        let entries = pairs
            .iter()
            .zip(&norms)
            .map(|(&(m, l), &(v, _))| {
                NormEntry::new(m, l, v, g.step(l) / (g.node(m) - g.node(l - 1)))
            })
            .collect();
        Ok(NormAudit::new(
            "boundedness_l",
            self.mu,
            entries,
            Some(g),
            norms.iter().all(|x| x.1),
        ))
    }

    /// `||D_m||` against `1/t_m`.
    pub fn d_audit(&self) -> Result<NormAudit> {
        let pairs: Vec<(usize, usize)> = (1..=self.grid.len()).map(|m| (m, 1)).collect();
        let norms = self.block_norms(&pairs, NormKind::L2, NormKind::L2, |m, _| self.d_block(m))?;
        let entries = pairs
            .iter()
            .zip(&norms)
            .map(|(&(m, l), &(v, _))| NormEntry::new(m, l, v, 1.0 / self.grid.node(m)))
            .collect();
        Ok(NormAudit::new(
            "boundedness_d",
            self.mu,
            entries,
            None,
            norms.iter().all(|x| x.1),
        ))
    }

    /// `||At_m - At_l||_{H1 -> H^{-1}}` for `m > l` against
    /// `(1 + mu min(k_l, k_m)) omega(t_m - t_{l-1}) + mu |k_m - k_l|`.
    pub fn difference_audit(&self, modulus: &Modulus) -> Result<NormAudit> {
        let n = self.grid.len();
        let g = &self.grid;
        let pairs: Vec<(usize, usize)> =
            (2..=n).flat_map(|m| (1..m).map(move |l| (m, l))).collect();
        let norms = self.block_norms(&pairs, NormKind::H1, NormKind::Hm1, |m, l| {
            let diff = self.ktilde[m - 1].lincomb(1.0, &self.ktilde[l - 1], -1.0);
            Ok(self.chain().then(Factor::MassInverse(Arc::new(diff))))
        })?;
        let entries = pairs
            .iter()
            .zip(&norms)
            .map(|(&(m, l), &(v, _))| {
                let (km, kl) = (g.step(m), g.step(l));
                let pred = (1.0 + self.mu * km.min(kl)) * modulus.omega(g.node(m) - g.node(l - 1))
                    + self.mu * (km - kl).abs();
                NormEntry::new(m, l, v, pred)
            })
            .collect();
        Ok(NormAudit::new(
            "difference",
            self.mu,
            entries,
            None,
            norms.iter().all(|x| x.1),
        ))
    }

    /// Generalized eigenvalues of `(Kt_m, M)` in increasing order.
    pub fn spectrum(&self, m: usize) -> Result<Vec<f64>> {
        self.check_interval(m)?;
        generalized_eigenvalues(&self.ktilde[m - 1], self.geometry.mass())
    }

    /// Resolvent norms `||(z - At_m)^{-1}|| = 1 / dist(z, spec At_m)` for
    /// samples `z = (re, im)` outside the sector `|arg z| <= gamma`, each
    /// compared with `1 / (|z| + mu)`; plus the inverse bounds of `At_m`.
    pub fn resolvent_audit(
        &self,
        m: usize,
        gamma: f64,
        z_samples: &[[f64; 2]],
    ) -> Result<ResolventReport> {
        for z in z_samples {
            let r = z[0].hypot(z[1]);
            if r == 0.0 || z[1].atan2(z[0]).abs() <= gamma {
                return Err(invalid(format!(
                    "z = {z:?} lies inside the sector |arg z| <= {gamma}"
                )));
            }
        }
        let spec = self.spectrum(m)?;
        if spec.is_empty() {
            return Err(invalid("empty space has no spectrum"));
        }
        let entries = z_samples
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let dist = spec
                    .iter()
                    .map(|&lam| (z[0] - lam).hypot(z[1]))
                    .fold(f64::INFINITY, f64::min);
                NormEntry::new(m, i + 1, 1.0 / dist, 1.0 / (z[0].hypot(z[1]) + self.mu))
            })
            .collect();
        let inverse_h1 = operator_norm(
            &self.a_inverse(m)?,
            &self.geometry,
            NormKind::L2,
            NormKind::H1,
        )?
        .value;
        let inverse_h1_predicted = if self.mu > 0.0 {
            1.0 / self.sqrt_mu_factor(self.grid.step(m))
        } else {
            f64::INFINITY
        };
        Ok(ResolventReport {
            samples: NormAudit::new("resolvent", self.mu, entries, None, true),
            lambda_min: spec[0],
            lambda_max: spec[spec.len() - 1],
            inverse_l2: 1.0 / spec[0],
            inverse_h1,
            inverse_h1_predicted,
        })
    }
}

fn relative(errors: Vec<f64>, scales: Vec<f64>) -> Result<f64> {
    let err = errors.into_iter().fold(0.0, f64::max);
    let scale = scales.into_iter().fold(0.0, f64::max);
    Ok(if scale == 0.0 { err } else { err / scale })
}

fn check_same_discretization(problem: &ParabolicProblem, sol: &DgSolution) -> Result<()> {
    if problem.grid().nodes() != sol.grid().nodes()
        || problem.space().ndofs() != sol.initial().len()
    {
        return Err(invalid(
            "solution was computed on a different discretization",
        ));
    }
    Ok(())
}

/// Eigenvalues of `K x = lambda M x` for symmetric `K` and SPD `M`, by a
/// dense Cholesky reduction.
pub fn generalized_eigenvalues(k: &SparseSpd, m: &SparseSpd) -> Result<Vec<f64>> {
    let n = k.dim();
    if n > DENSE_EIGEN_LIMIT {
        return Err(Error::ResourceLimit {
            what: "dense generalized eigenproblem".into(),
            needed: n,
            budget: DENSE_EIGEN_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let chol = m
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Internal("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Internal("singular Cholesky factor".into()))?;
    let c: DMatrix<f64> = &linv * k.to_dense() * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// The mu-sweep of one audit: builds the calculus per mu, sharing matrices.
pub fn mu_sweep<T, F>(base: &OperatorCalculus, mus: &[f64], f: F) -> Result<Vec<T>>
where
    F: Fn(&OperatorCalculus) -> Result<T>,
{
    mus.iter().map(|&mu| f(&base.with_mu(mu)?)).collect()
}

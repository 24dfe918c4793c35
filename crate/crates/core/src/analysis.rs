//! Maximal-regularity functionals, the stability-lemma audit, error norms,
//! best-approximation ratios and convergence tables.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    default_stiffness_order, interval_average_rule, ritz_project, StiffnessEvaluator,
};
use crate::coeffs::{least_squares, CoefficientField};
use crate::dg0::DgSolution;
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::fem::FeSpace;
use crate::norms::{operator_norm, Chain, Factor, Geometry, NormKind};
use crate::problem::{ExactSolution, ParabolicProblem};
use crate::timegrid::TimeGrid;

/// Gauss points per interval for temporal L^p integrals.
pub const TIME_GAUSS_POINTS: usize = 4;
/// Equispaced samples per interval (endpoints included) for L^infinity in time.
pub const SUP_SAMPLES: usize = 6;

/// Weighted `l^p` norm `(sum_m k_m g_m^p)^{1/p}`; `p = inf` gives the max.
pub fn lp_norm(values: &[f64], steps: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().copied().fold(0.0, f64::max)
    } else {
        values
            .iter()
            .zip(steps)
            .map(|(g, k)| k * g.powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(invalid(format!("norm index p must be >= 1, got {p}")));
    }
    Ok(())
}

/// Temporal samples of a spatial L2 quantity on each interval: Gauss
/// points (for integrals) and equispaced points with endpoints (for sup).
#[derive(Debug, Clone, Serialize)]
pub struct TimeProfile {
    pub steps: Vec<f64>,
    /// `gauss[m-1][j]` at the `j`-th Gauss point of `I_m`.
    pub gauss: Vec<Vec<f64>>,
    pub gauss_weights: Vec<f64>,
    /// Max over equispaced samples of `I_m` (and the Gauss points).
    pub sup: Vec<f64>,
}

impl TimeProfile {
    fn build<F>(grid: &TimeGrid, sample: F) -> Result<Self>
    where
        F: Fn(usize, f64) -> Result<f64> + Sync + Send,
    {
        let rule0 = interval_average_rule(grid, 1, TIME_GAUSS_POINTS);
        let gauss_weights: Vec<f64> = rule0.iter().map(|p| p.1).collect();
        let per = exec::try_map_indexed(grid.len(), |i| -> Result<(Vec<f64>, f64)> {
            let m = i + 1;
            let g = interval_average_rule(grid, m, TIME_GAUSS_POINTS)
                .iter()
                .map(|&(t, _)| sample(m, t))
                .collect::<Result<Vec<f64>>>()?;
            let (a, b) = grid.interval(m);
            let mut sup = g.iter().copied().fold(0.0, f64::max);
            for j in 0..SUP_SAMPLES {
                let t = a + (b - a) * j as f64 / (SUP_SAMPLES - 1) as f64;
                sup = sup.max(sample(m, t)?);
            }
            Ok((g, sup))
        })?;
        let (gauss, sup) = per.into_iter().unzip();
        Ok(Self {
            steps: grid.steps(),
            gauss,
            gauss_weights,
            sup,
        })
    }

    /// `L^p(I)` norm of the sampled quantity.
    pub fn lp(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup.iter().copied().fold(0.0, f64::max);
        }
        self.gauss
            .iter()
            .zip(&self.steps)
            .map(|(g, k)| {
                k * g
                    .iter()
                    .zip(&self.gauss_weights)
                    .map(|(v, w)| w * v.powf(p))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Discrete maximal-regularity functionals of one solution.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// `||A_{kh,m} u_m||`, `m = 1..M`.
    pub a_norms: Vec<f64>,
    /// `||[u]_{m-1}|| / k_m`.
    pub jump_rates: Vec<f64>,
    pub steps: Vec<f64>,
    /// `ln(T/k)` with the largest step `k`.
    pub log_factor: f64,
    pub source: TimeProfile,
    /// `||u0||_{L2}`.
    pub initial_norm: f64,
    /// `max_m ||A_{kh,m} P_h u0||`.
    pub initial_a_max: f64,
}

impl RegularityReport {
    /// `||A u||_{L^p(I;L2)}` over the piecewise-constant sequence.
    pub fn a_lp(&self, p: f64) -> f64 {
        lp_norm(&self.a_norms, &self.steps, p)
    }

    /// `||[u]/k||_{L^p(I;L2)}`; for `p = 1` this is `sum_m ||[u]_{m-1}||`.
    pub fn jump_lp(&self, p: f64) -> f64 {
        lp_norm(&self.jump_rates, &self.steps, p)
    }

    /// Left side of the estimate: `max_m (||A u_m|| + ||[u]_{m-1}||/k_m)`
    /// for `p = inf`, and `||A u||_{L^p} + ||[u]/k||_{L^p}` otherwise.
    pub fn aggregate(&self, p: f64) -> f64 {
        if p.is_infinite() {
            self.a_norms
                .iter()
                .zip(&self.jump_rates)
                .map(|(a, j)| a + j)
                .fold(0.0, f64::max)
        } else {
            self.a_lp(p) + self.jump_lp(p)
        }
    }

    /// Data norm: `||f||_{L^inf} + max_m ||A P_h u0||` for `p = inf`,
    /// `||f||_{L^p} + ||u0||` otherwise.
    pub fn data(&self, p: f64) -> f64 {
        if p.is_infinite() {
            self.source.lp(p) + self.initial_a_max
        } else {
            self.source.lp(p) + self.initial_norm
        }
    }

    fn ratio_of(&self, value: f64, data: f64) -> Option<f64> {
        (data > 0.0 && self.log_factor > 0.0).then(|| value / (self.log_factor * data))
    }

    /// `aggregate / (ln(T/k) data)`; `None` for zero data or a single step.
    pub fn ratio(&self, p: f64) -> Option<f64> {
        self.ratio_of(self.aggregate(p), self.data(p))
    }

    /// `max_m ||A u_m|| / (ln(T/k) ||f||_{L^inf})`.
    pub fn a_max_ratio(&self) -> Option<f64> {
        self.ratio_of(self.a_lp(f64::INFINITY), self.source.lp(f64::INFINITY))
    }

    /// Per-interval CSV.
    pub fn to_csv(&self, grid: &TimeGrid) -> String {
        let mut out = String::from("m,t_m,norm_Akm_ukm,norm_jump_over_k_m\n");
        for (i, (a, j)) in self.a_norms.iter().zip(&self.jump_rates).enumerate() {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                i + 1,
                grid.node(i + 1),
                a,
                j
            );
        }
        out
    }

    /// One-row CSV of aggregates for `p` in {1, 2, inf}.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "p,aggregate,norm_Akm_ukm_Lp,norm_jump_over_k_Lp,norm_f_Lp_L2,norm_u0_L2,max_m_norm_Akm_Ph_u0,log_T_over_k,ratio\n",
        );
        for (label, p) in [("1", 1.0), ("2", 2.0), ("inf", f64::INFINITY)] {
            let _ = writeln!(
                out,
                "{label},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                self.aggregate(p),
                self.a_lp(p),
                self.jump_lp(p),
                self.source.lp(p),
                self.initial_norm,
                self.initial_a_max,
                self.log_factor,
                fmt_opt(self.ratio(p))
            );
        }
        out
    }
}

/// `"inf"` or the shortest decimal form of `p`, for file names and labels.
pub fn fmt_p(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.16e}"))
}

/// Computes all regularity functionals of a solved problem.
pub fn regularity_functionals(
    problem: &ParabolicProblem,
    sol: &DgSolution,
) -> Result<RegularityReport> {
    let grid = problem.grid();
    if grid.nodes() != sol.grid().nodes() {
        return Err(invalid("solution was computed on a different grid"));
    }
    let jumps = sol.jumps();
    let per_m = exec::try_map_indexed(sol.len(), |i| -> Result<(f64, f64, f64)> {
        let m = i + 1;
        let au = sol.dual_norm(&sol.stiffness(m).mul_vec(sol.value(m)))?;
        let jr = sol.l2_norm(&jumps[i]) / grid.step(m);
        let au0 = sol.dual_norm(&sol.stiffness(m).mul_vec(sol.initial()))?;
        Ok((au, jr, au0))
    })?;
    let source = TimeProfile::build(grid, |_, t| problem.source_norm_at(t))?;
    Ok(RegularityReport {
        a_norms: per_m.iter().map(|x| x.0).collect(),
        jump_rates: per_m.iter().map(|x| x.1).collect(),
        initial_a_max: per_m.iter().map(|x| x.2).fold(0.0, f64::max),
        steps: grid.steps(),
        log_factor: grid.log_factor(),
        source,
        initial_norm: problem.initial_norm(),
    })
}

/// Per-interval values of `sup_{t in I_m} ||A_h(t) A_{kh,m}^{-1}||_{L2 -> L2}`.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub per_interval: Vec<f64>,
    pub max: f64,
}

/// Samples `t_samples` equispaced times per interval (endpoints included)
/// and takes the mass-geometry norm of `M^{-1} K(t) Kbar_m^{-1} M`.
pub fn stability_lemma_audit(
    space: &Arc<FeSpace>,
    field: &CoefficientField,
    grid: &TimeGrid,
    t_samples: usize,
    time_quadrature: usize,
    budget: usize,
) -> Result<StabilityReport> {
    if t_samples < 2 {
        return Err(invalid("need at least two time samples per interval"));
    }
    let needed = grid.len() * space.ndofs();
    if needed > budget {
        return Err(Error::ResourceLimit {
            what: "stability audit (M * dofs)".into(),
            needed,
            budget,
        });
    }
    let geometry = Geometry::new(space)?;
    let eval =
        StiffnessEvaluator::new(space.clone(), field.clone(), default_stiffness_order(space))?;
    let per_interval = exec::try_map_indexed(grid.len(), |i| -> Result<f64> {
        let m = i + 1;
        let kbar = eval.averaged(grid, m, time_quadrature)?;
        let inv = Arc::new(kbar.factor()?);
        let (a, b) = grid.interval(m);
        let mut sup: f64 = 0.0;
        for j in 0..t_samples {
            let t = a + (b - a) * j as f64 / (t_samples - 1) as f64;
            let chain = Chain::new(geometry.mass().clone(), geometry.mass_solver().clone())
                .then(Factor::MassInverse(Arc::new(eval.at(t))))
                .then(Factor::SolveMass(inv.clone()));
            sup = sup.max(operator_norm(&chain, &geometry, NormKind::L2, NormKind::L2)?.value);
        }
        Ok(sup)
    })?;
    let max = per_interval.iter().copied().fold(0.0, f64::max);
    Ok(StabilityReport { per_interval, max })
}

/// A piecewise-constant-in-time trajectory.
#[derive(Debug, Clone)]
pub enum Trajectory {
    /// Discrete values `u_m` on `I_m`.
    Discrete {
        grid: TimeGrid,
        values: Vec<Vec<f64>>,
    },
    /// The exact solution frozen at `times[m-1]` on `I_m`.
    Sampled { grid: TimeGrid, times: Vec<f64> },
}

impl Trajectory {
    pub fn from_solution(sol: &DgSolution) -> Self {
        Trajectory::Discrete {
            grid: sol.grid().clone(),
            values: sol.values().to_vec(),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        match self {
            Trajectory::Discrete { grid, .. } | Trajectory::Sampled { grid, .. } => grid,
        }
    }

    /// `||u(t) - traj|_{I_m}||_{L2}`.
    pub fn error_at(&self, problem: &ParabolicProblem, m: usize, t: f64) -> Result<f64> {
        match self {
            Trajectory::Discrete { values, .. } => problem.exact_error_at(t, &values[m - 1]),
            Trajectory::Sampled { times, .. } => match problem.exact() {
                None => Err(invalid("problem has no exact solution")),
                Some(ExactSolution::Discrete(_)) => Ok(0.0),
                Some(ExactSolution::Analytic(u)) => {
                    let s = times[m - 1];
                    Ok(crate::assembly::l2_norm(
                        problem.space(),
                        |x| u.value(t, x) - u.value(s, x),
                        problem.load_order(),
                    ))
                }
            },
        }
    }
}

/// `pi_k u`: the exact solution sampled at right endpoints.
pub fn pik_interpolant(problem: &ParabolicProblem, grid: &TimeGrid) -> Result<Trajectory> {
    if problem.exact().is_none() {
        return Err(invalid("pi_k needs an exact solution"));
    }
    Ok(Trajectory::Sampled {
        grid: grid.clone(),
        times: grid.nodes()[1..].to_vec(),
    })
}

/// Temporal error profile of a trajectory against the exact solution.
pub fn error_profile(problem: &ParabolicProblem, traj: &Trajectory) -> Result<TimeProfile> {
    if problem.exact().is_none() {
        return Err(invalid("error norms need an exact solution"));
    }
    TimeProfile::build(traj.grid(), |m, t| traj.error_at(problem, m, t))
}

/// `(||u - traj||_{L^p(I;L2)}, ||u - traj||_{L^inf(I;L2)})`.
pub fn error_norms(problem: &ParabolicProblem, traj: &Trajectory, p: f64) -> Result<(f64, f64)> {
    check_p(p)?;
    let prof = error_profile(problem, traj)?;
    Ok((prof.lp(p), prof.lp(f64::INFINITY)))
}

/// Terms of the best-approximation ratio.
#[derive(Debug, Clone, Serialize)]
pub struct BestApprox {
    pub p: f64,
    pub error: f64,
    pub pik_term: f64,
    pub ritz_term: f64,
    pub log_factor: f64,
    /// `None` when the denominator vanishes (reproduction case).
    pub ratio: Option<f64>,
}

/// `||u - u_kh||_{L^p} / (ln(T/k) (||u - pi_k u||_{L^p} + ||u - R_h(.) u||_{L^p}))`.
pub fn best_approx_ratio(
    problem: &ParabolicProblem,
    sol: &DgSolution,
    p: f64,
) -> Result<BestApprox> {
    check_p(p)?;
    let grid = problem.grid();
    let error = error_profile(problem, &Trajectory::from_solution(sol))?.lp(p);
    let pik_term = error_profile(problem, &pik_interpolant(problem, grid)?)?.lp(p);
    let ritz_term = match problem.exact() {
        Some(ExactSolution::Discrete(_)) => 0.0,
        Some(ExactSolution::Analytic(u)) => TimeProfile::build(grid, |_, t| {
            let r = ritz_project(
                problem.space(),
                problem.field(),
                t,
                &u.at(t),
                default_stiffness_order(problem.space()).max(problem.load_order()),
            )?;
            problem.exact_error_at(t, &r)
        })?
        .lp(p),
        None => return Err(invalid("best approximation needs an exact solution")),
    };
    let log_factor = grid.log_factor();
    let denom = log_factor * (pik_term + ritz_term);
    let ratio = (denom > 1e-14 * error.max(1e-300) && denom > 0.0).then(|| error / denom);
    Ok(BestApprox {
        p,
        error,
        pik_term,
        ritz_term,
        log_factor,
        ratio,
    })
}

/// Which discretization parameter a refinement line varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Line {
    Time,
    Space,
    Diagonal,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub k: f64,
    pub error_lp: f64,
    pub error_linf: f64,
    /// Both errors vanish to rounding (reproduction runs).
    pub zero_error: bool,
}

/// Errors over a refinement line with fitted orders.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub line: Line,
    pub p: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Fitted orders of the `L^p` and `L^inf` errors, present with at least
    /// 3 rows and no zero-error row.
    pub order_lp: Option<f64>,
    pub order_linf: Option<f64>,
}

/// Threshold below which an error counts as zero.
pub const ZERO_ERROR: f64 = 1e-12;

impl ConvergenceTable {
    pub fn new(line: Line, p: f64, rows: Vec<ConvergenceRow>) -> Self {
        let fit = |pick: &dyn Fn(&ConvergenceRow) -> f64| -> Option<f64> {
            if rows.len() < 3 || rows.iter().any(|r| r.zero_error) {
                return None;
            }
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| {
                    let x = match line {
                        Line::Time => r.k,
                        Line::Space | Line::Diagonal => r.h,
                    };
                    (x.ln(), pick(r).ln())
                })
                .collect();
            Some(least_squares(&pts).0)
        };
        let order_lp = fit(&|r| r.error_lp);
        let order_linf = fit(&|r| r.error_linf);
        Self {
            line,
            p,
            rows,
            order_lp,
            order_linf,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,k,error_Lp_I_L2,error_Linf_I_L2,zero_error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                r.h, r.k, r.error_lp, r.error_linf, r.zero_error
            );
        }
        out
    }
}

/// Solves the problems produced by `build(level)` for `levels` levels and
/// tabulates their errors.
pub fn convergence_study<F>(line: Line, levels: usize, p: f64, build: F) -> Result<ConvergenceTable>
where
    F: Fn(usize) -> Result<ParabolicProblem> + Sync + Send,
{
    check_p(p)?;
    let rows = exec::try_map_indexed(levels, |level| -> Result<ConvergenceRow> {
        let problem = build(level)?;
        let sol = crate::dg0::solve(&problem)?;
        let (error_lp, error_linf) = error_norms(&problem, &Trajectory::from_solution(&sol), p)?;
        Ok(ConvergenceRow {
            h: problem.space().mesh().h(),
            k: problem.grid().max_step(),
            error_lp,
            error_linf,
            zero_error: error_lp.max(error_linf) <= ZERO_ERROR,
        })
    })?;
    Ok(ConvergenceTable::new(line, p, rows))
}

/// Median of a non-empty list.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

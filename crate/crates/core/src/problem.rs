//! Parabolic problems `u_t + A(t) u = f`, `u(0) = u0`, with homogeneous
//! Dirichlet data, and the built-in problem corpus.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{
    self, assemble_energy_load, assemble_load, assemble_mass, default_load_order,
    default_stiffness_order, interval_average_rule, ScalarFunction, StiffnessEvaluator,
};
use crate::coeffs::{corpus_field, CoefficientField, Tensor};
use crate::error::{invalid, Error, Result};
use crate::fem::FeSpace;
use crate::mesh::Point;
use crate::sparse::{SparseSpd, SpdSolver};
use crate::timegrid::TimeGrid;

type SpaceTimeFn = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;
type SpaceTimeVec = Arc<dyn Fn(f64, Point) -> [f64; 2] + Send + Sync>;
type SpaceTimeTensor = Arc<dyn Fn(f64, Point) -> Tensor + Send + Sync>;

/// Default number of Gauss points per interval for averaged data.
pub const DEFAULT_TIME_QUADRATURE: usize = 4;

/// A smooth exact solution with the derivatives needed to manufacture data.
#[derive(Clone)]
pub struct AnalyticSolution {
    value: SpaceTimeFn,
    gradient: SpaceTimeVec,
    hessian: SpaceTimeTensor,
    time_derivative: SpaceTimeFn,
}

impl AnalyticSolution {
    pub fn new(
        value: impl Fn(f64, Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(f64, Point) -> [f64; 2] + Send + Sync + 'static,
        hessian: impl Fn(f64, Point) -> Tensor + Send + Sync + 'static,
        time_derivative: impl Fn(f64, Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            time_derivative: Arc::new(time_derivative),
        }
    }

    /// `g(t) * prod_i sin(pi x_i)` over the first `dim` coordinates.
    pub fn product_sine(
        dim: usize,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let g = Arc::new(g);
        let g1 = g.clone();
        let g2 = g.clone();
        let two_d = dim == 2;
        let s = move |x: Point| {
            if two_d {
                (PI * x[0]).sin() * (PI * x[1]).sin()
            } else {
                (PI * x[0]).sin()
            }
        };
        Self::new(
            move |t, x| g(t) * s(x),
            move |t, x| {
                let gt = g1(t);
                if two_d {
                    [
                        gt * PI * (PI * x[0]).cos() * (PI * x[1]).sin(),
                        gt * PI * (PI * x[0]).sin() * (PI * x[1]).cos(),
                    ]
                } else {
                    [gt * PI * (PI * x[0]).cos(), 0.0]
                }
            },
            move |t, x| {
                let c = g2(t) * PI * PI;
                if two_d {
                    let ss = (PI * x[0]).sin() * (PI * x[1]).sin();
                    let cc = (PI * x[0]).cos() * (PI * x[1]).cos();
                    [[-c * ss, c * cc], [c * cc, -c * ss]]
                } else {
                    [[-c * (PI * x[0]).sin(), 0.0], [0.0, 0.0]]
                }
            },
            move |t, x| dg(t) * s(x),
        )
    }

    #[inline]
    pub fn value(&self, t: f64, x: Point) -> f64 {
        (self.value)(t, x)
    }

    #[inline]
    pub fn gradient(&self, t: f64, x: Point) -> [f64; 2] {
        (self.gradient)(t, x)
    }

    pub fn hessian(&self, t: f64, x: Point) -> Tensor {
        (self.hessian)(t, x)
    }

    pub fn time_derivative(&self, t: f64, x: Point) -> f64 {
        (self.time_derivative)(t, x)
    }

    /// The spatial slice `u(t, .)` with its gradient.
    pub fn at(&self, t: f64) -> ScalarFunction {
        let v = self.value.clone();
        let g = self.gradient.clone();
        ScalarFunction::new(move |x| v(t, x)).with_gradient(move |x| g(t, x))
    }

    /// `f = u_t - div(a grad u)` expanded as
    /// `u_t - sum_j d_j d_j u - sum_ij a_ij d_ij u` with `d_j = sum_i d_i a_ij`.
    pub fn manufactured_source(&self, field: &CoefficientField) -> Result<SpaceTimeFn> {
        if !field.has_divergence() {
            return Err(Error::InvalidField(format!(
                "field '{}' has no divergence; cannot manufacture a source",
                field.id()
            )));
        }
        let u = self.clone();
        let field = field.clone();
        Ok(Arc::new(move |t, x| {
            let a = field.eval(t, x);
            let d = field.divergence(t, x).unwrap();
            let g = u.gradient(t, x);
            let h = u.hessian(t, x);
            let mut div = d[0] * g[0] + d[1] * g[1];
            for i in 0..2 {
                for j in 0..2 {
                    div += a[i][j] * h[i][j];
                }
            }
            u.time_derivative(t, x) - div
        }))
    }
}

/// Right-hand side `f(t, x)`.
#[derive(Clone)]
pub enum Source {
    Zero,
    Function(SpaceTimeFn),
    /// `f(t) = A_h(t) u_h` for a fixed discrete `u_h`.
    DiscreteStiffness(Vec<f64>),
}

/// Initial datum `u0`.
#[derive(Clone)]
pub enum InitialDatum {
    Zero,
    Function(ScalarFunction),
    /// Already a member of the discrete space.
    Discrete(Vec<f64>),
}

/// Exact solution, when known.
#[derive(Clone)]
pub enum ExactSolution {
    Analytic(AnalyticSolution),
    /// Time-constant member of the discrete space.
    Discrete(Vec<f64>),
}

/// Time discretization used by the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Interval-averaged coefficients and loads.
    Dg0,
    /// Endpoint evaluation of coefficients and loads. Not a Galerkin
    /// method; kept only as a benchmark contrast.
    BackwardEuler,
}

/// A fully specified discrete problem: space, time grid, coefficients
/// and data, plus the cached mass matrix and stiffness evaluator.
pub struct ParabolicProblem {
    pub id: String,
    space: Arc<FeSpace>,
    grid: TimeGrid,
    field: CoefficientField,
    source: Source,
    initial: InitialDatum,
    exact: Option<ExactSolution>,
    time_quadrature: usize,
    load_order: usize,
    scheme: Scheme,
    mass: Arc<SparseSpd>,
    mass_solver: Arc<SpdSolver>,
    stiffness: StiffnessEvaluator,
}

impl ParabolicProblem {
    pub fn new(space: Arc<FeSpace>, grid: TimeGrid, field: CoefficientField) -> Result<Self> {
        let mass = assemble_mass(&space);
        let mass_solver = mass
            .factor()
            .map_err(|e| Error::Internal(format!("singular mass matrix: {e}")))?;
        let stiffness = StiffnessEvaluator::new(
            space.clone(),
            field.clone(),
            default_stiffness_order(&space),
        )?;
        Ok(Self {
            id: "custom".into(),
            load_order: default_load_order(&space),
            space,
            grid,
            field,
            source: Source::Zero,
            initial: InitialDatum::Zero,
            exact: None,
            time_quadrature: DEFAULT_TIME_QUADRATURE,
            scheme: Scheme::Dg0,
            mass: Arc::new(mass),
            mass_solver: Arc::new(mass_solver),
            stiffness,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_source(mut self, source: Source) -> Result<Self> {
        if let Source::DiscreteStiffness(v) = &source {
            self.check_len(v, "source")?;
        }
        self.source = source;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: InitialDatum) -> Result<Self> {
        if let InitialDatum::Discrete(v) = &initial {
            self.check_len(v, "initial datum")?;
        }
        self.initial = initial;
        Ok(self)
    }

    /// Attaches an exact solution after checking its Dirichlet trace.
    pub fn with_exact(mut self, exact: ExactSolution) -> Result<Self> {
        match &exact {
            ExactSolution::Discrete(v) => self.check_len(v, "exact solution")?,
            ExactSolution::Analytic(u) => {
                let mesh = self.space.mesh();
                for t in [0.0, 0.5 * self.grid.final_time(), self.grid.final_time()] {
                    for v in mesh.boundary_vertices() {
                        let val = u.value(t, mesh.vertices()[v]);
                        if val.abs() > 1e-12 {
                            return Err(invalid(format!(
                                "exact solution is {val:e} on the boundary at t = {t}"
                            )));
                        }
                    }
                }
            }
        }
        self.exact = Some(exact);
        Ok(self)
    }

    /// Attaches an analytic solution and derives `f` and `u0` from it.
    pub fn manufactured(self, u: AnalyticSolution) -> Result<Self> {
        let f = u.manufactured_source(&self.field)?;
        let u0 = u.at(0.0);
        self.with_exact(ExactSolution::Analytic(u))?
            .with_source(Source::Function(f))?
            .with_initial(InitialDatum::Function(u0))
    }

    pub fn with_time_quadrature(mut self, q: usize) -> Result<Self> {
        if q == 0 {
            return Err(invalid("time quadrature needs at least one point"));
        }
        self.time_quadrature = q;
        Ok(self)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// Same problem on another time grid.
    pub fn with_grid(mut self, grid: TimeGrid) -> Self {
        self.grid = grid;
        self
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.space.ndofs() {
            return Err(invalid(format!(
                "{what} has {} entries, space has {} dofs",
                v.len(),
                self.space.ndofs()
            )));
        }
        Ok(())
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn initial(&self) -> &InitialDatum {
        &self.initial
    }

    pub fn exact(&self) -> Option<&ExactSolution> {
        self.exact.as_ref()
    }

    pub fn time_quadrature(&self) -> usize {
        self.time_quadrature
    }

    pub fn load_order(&self) -> usize {
        self.load_order
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn mass(&self) -> &Arc<SparseSpd> {
        &self.mass
    }

    pub fn mass_solver(&self) -> &Arc<SpdSolver> {
        &self.mass_solver
    }

    pub fn stiffness(&self) -> &StiffnessEvaluator {
        &self.stiffness
    }

    pub fn is_zero_data(&self) -> bool {
        let zero_f = match &self.source {
            Source::Zero => true,
            Source::DiscreteStiffness(v) => v.iter().all(|&x| x == 0.0),
            Source::Function(_) => false,
        };
        let zero_u0 = match &self.initial {
            InitialDatum::Zero => true,
            InitialDatum::Discrete(v) => v.iter().all(|&x| x == 0.0),
            InitialDatum::Function(_) => false,
        };
        zero_f && zero_u0
    }

    /// Coefficient matrix of the scheme on interval `m`: the average over
    /// `I_m`, or `K(t_m)` in backward-Euler mode.
    pub fn interval_stiffness(&self, m: usize) -> Result<SparseSpd> {
        match self.scheme {
            Scheme::Dg0 => self.stiffness.averaged(&self.grid, m, self.time_quadrature),
            Scheme::BackwardEuler => {
                if m == 0 || m > self.grid.len() {
                    return Err(invalid(format!(
                        "interval index {m} outside 1..={}",
                        self.grid.len()
                    )));
                }
                Ok(self.stiffness.at(self.grid.node(m)))
            }
        }
    }

    /// Load vector of `f(t)` at a single time.
    pub fn load_at(&self, t: f64) -> Vec<f64> {
        match &self.source {
            Source::Zero => vec![0.0; self.space.ndofs()],
            Source::Function(f) => assemble_load(&self.space, |x| f(t, x), self.load_order),
            Source::DiscreteStiffness(uh) => self.stiffness.at(t).mul_vec(uh),
        }
    }

    /// Load vector of the interval average of `f` with `q` Gauss points.
    /// For a discrete-stiffness source this is `Kbar_m u_h`, the same
    /// averaged matrix the scheme uses.
    pub fn average_load_with(
        &self,
        m: usize,
        q: usize,
        kbar: Option<&SparseSpd>,
    ) -> Result<Vec<f64>> {
        if m == 0 || m > self.grid.len() {
            return Err(invalid(format!(
                "interval index {m} outside 1..={}",
                self.grid.len()
            )));
        }
        if self.scheme == Scheme::BackwardEuler {
            return Ok(self.load_at(self.grid.node(m)));
        }
        match &self.source {
            Source::Zero => Ok(vec![0.0; self.space.ndofs()]),
            Source::DiscreteStiffness(uh) => match kbar {
                Some(k) => Ok(k.mul_vec(uh)),
                None => Ok(self.stiffness.averaged(&self.grid, m, q)?.mul_vec(uh)),
            },
            Source::Function(f) => {
                let mut b = vec![0.0; self.space.ndofs()];
                for (t, w) in interval_average_rule(&self.grid, m, q) {
                    let bt = assemble_load(&self.space, |x| f(t, x), self.load_order);
                    for (bi, v) in b.iter_mut().zip(bt) {
                        *bi += w * v;
                    }
                }
                Ok(b)
            }
        }
    }

    /// `P_h u0`.
    pub fn projected_initial(&self) -> Result<Vec<f64>> {
        match &self.initial {
            InitialDatum::Zero => Ok(vec![0.0; self.space.ndofs()]),
            InitialDatum::Discrete(v) => Ok(v.clone()),
            InitialDatum::Function(u0) => {
                assembly::l2_project(&self.space, &self.mass, u0, self.load_order)
            }
        }
    }

    /// `||f(t)||_{L2}`.
    pub fn source_norm_at(&self, t: f64) -> Result<f64> {
        match &self.source {
            Source::Zero => Ok(0.0),
            Source::Function(f) => Ok(assembly::l2_norm(&self.space, |x| f(t, x), self.load_order)),
            Source::DiscreteStiffness(uh) => {
                let ku = self.stiffness.at(t).mul_vec(uh);
                let v = self.mass_solver.solve(&ku)?;
                Ok(dot(&ku, &v).max(0.0).sqrt())
            }
        }
    }

    /// `||u0||_{L2}`.
    pub fn initial_norm(&self) -> f64 {
        match &self.initial {
            InitialDatum::Zero => 0.0,
            InitialDatum::Discrete(v) => assembly::mass_norm(&self.mass, v),
            InitialDatum::Function(u0) => {
                assembly::l2_norm(&self.space, |x| u0.value(x), self.load_order)
            }
        }
    }

    /// Energy load `a(t; u(t), phi_i)` of the exact solution.
    pub fn exact_energy_load(&self, t: f64) -> Result<Vec<f64>> {
        match &self.exact {
            None => Err(invalid("problem has no exact solution")),
            Some(ExactSolution::Discrete(uh)) => Ok(self.stiffness.at(t).mul_vec(uh)),
            Some(ExactSolution::Analytic(u)) => Ok(assemble_energy_load(
                &self.space,
                |x| self.field.eval(t, x),
                |x| u.gradient(t, x),
                self.stiffness.order().max(self.load_order),
            )),
        }
    }

    /// Load vector `(u(t), phi_i)` of the exact solution.
    pub fn exact_mass_load(&self, t: f64) -> Result<Vec<f64>> {
        match &self.exact {
            None => Err(invalid("problem has no exact solution")),
            Some(ExactSolution::Discrete(uh)) => Ok(self.mass.mul_vec(uh)),
            Some(ExactSolution::Analytic(u)) => Ok(assemble_load(
                &self.space,
                |x| u.value(t, x),
                self.load_order,
            )),
        }
    }

    /// `||u(t) - v_h||_{L2}` for the exact solution and a discrete `v_h`.
    pub fn exact_error_at(&self, t: f64, dofs: &[f64]) -> Result<f64> {
        match &self.exact {
            None => Err(invalid("problem has no exact solution")),
            Some(ExactSolution::Discrete(uh)) => {
                let d: Vec<f64> = uh.iter().zip(dofs).map(|(a, b)| a - b).collect();
                Ok(assembly::mass_norm(&self.mass, &d))
            }
            Some(ExactSolution::Analytic(u)) => Ok(assembly::l2_error(
                &self.space,
                dofs,
                |x| u.value(t, x),
                self.load_order,
            )),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Problem composition by component ids, resolved against the built-in
/// fields and data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDefinition {
    pub field: String,
    pub rhs: String,
    pub u0: String,
    pub exact: String,
}

/// Exact-solution ids.
pub const EXACT_IDS: &[&str] = &[
    "none",
    "decay-sine",
    "steady-sine",
    "growth-sine",
    "discrete-sine",
];
/// Right-hand-side ids.
pub const RHS_IDS: &[&str] = &[
    "zero",
    "manufactured",
    "stiffness",
    "constant",
    "oscillating",
];
/// Initial-datum ids.
pub const U0_IDS: &[&str] = &["zero", "exact", "sine", "bump"];

/// Built-in problem ids.
pub const PROBLEM_IDS: &[&str] = &[
    "zero",
    "heat-identity",
    "heat-lipschitz",
    "heat-sine",
    "heat-quadratic",
    "heat-anisotropic",
    "heat-separable",
    "steady-lipschitz",
    "steady-sine",
    "steady-anisotropic",
    "forced-lipschitz",
    "forced-sine",
    "forced-initial",
    "reproduction",
    "reproduction-anisotropic",
];

fn def(field: &str, rhs: &str, u0: &str, exact: &str) -> ProblemDefinition {
    ProblemDefinition {
        field: field.into(),
        rhs: rhs.into(),
        u0: u0.into(),
        exact: exact.into(),
    }
}

impl ProblemDefinition {
    pub fn corpus(id: &str) -> Result<Self> {
        Ok(match id {
            "zero" => def("lipschitz-time", "zero", "zero", "none"),
            "heat-identity" => def("identity", "manufactured", "exact", "decay-sine"),
            "heat-lipschitz" => def("lipschitz-time", "manufactured", "exact", "decay-sine"),
            "heat-sine" => def("sine-time", "manufactured", "exact", "decay-sine"),
            "heat-quadratic" => def("quadratic-time", "manufactured", "exact", "growth-sine"),
            "heat-anisotropic" => def("anisotropic", "manufactured", "exact", "decay-sine"),
            "heat-separable" => def("separable", "manufactured", "exact", "decay-sine"),
            "steady-lipschitz" => def("lipschitz-time", "manufactured", "exact", "steady-sine"),
            "steady-sine" => def("sine-time", "manufactured", "exact", "steady-sine"),
            "steady-anisotropic" => def("anisotropic", "manufactured", "exact", "steady-sine"),
            "forced-lipschitz" => def("lipschitz-time", "constant", "zero", "none"),
            "forced-sine" => def("sine-time", "oscillating", "zero", "none"),
            "forced-initial" => def("lipschitz-time", "constant", "sine", "none"),
            "reproduction" => def("sine-time", "stiffness", "exact", "discrete-sine"),
            "reproduction-anisotropic" => def("anisotropic", "stiffness", "exact", "discrete-sine"),
            _ => return Err(invalid(format!("unknown problem id '{id}'"))),
        })
    }

    /// Checks that every id resolves without building anything.
    pub fn check_ids(&self) -> Result<()> {
        corpus_field(&self.field)?;
        for (id, list, what) in [
            (&self.rhs, RHS_IDS, "rhs"),
            (&self.u0, U0_IDS, "u0"),
            (&self.exact, EXACT_IDS, "exact-solution"),
        ] {
            if !list.contains(&id.as_str()) {
                return Err(invalid(format!("unknown {what} id '{id}'")));
            }
        }
        Ok(())
    }

    pub fn build(&self, space: Arc<FeSpace>, grid: TimeGrid) -> Result<ParabolicProblem> {
        self.check_ids()?;
        let field = corpus_field(&self.field)?;
        let dim = space.dim();
        let problem = ParabolicProblem::new(space.clone(), grid, field)?;

        let exact = match self.exact.as_str() {
            "decay-sine" => Some(ExactSolution::Analytic(AnalyticSolution::product_sine(
                dim,
                |t| (-t).exp(),
                |t| -(-t).exp(),
            ))),
            "steady-sine" => Some(ExactSolution::Analytic(AnalyticSolution::product_sine(
                dim,
                |_| 1.0,
                |_| 0.0,
            ))),
            "growth-sine" => Some(ExactSolution::Analytic(AnalyticSolution::product_sine(
                dim,
                |t| 1.0 + t,
                |_| 1.0,
            ))),
            "discrete-sine" => Some(ExactSolution::Discrete(
                space.interpolate(|x| sine_profile(dim, x) * (1.0 + 0.5 * x[0])),
            )),
            _ => None,
        };

        let source = match (self.rhs.as_str(), &exact) {
            ("zero", _) => Source::Zero,
            ("manufactured", Some(ExactSolution::Analytic(u))) => {
                Source::Function(u.manufactured_source(problem.field())?)
            }
            ("stiffness", Some(ExactSolution::Discrete(uh))) => {
                Source::DiscreteStiffness(uh.clone())
            }
            ("constant", _) => Source::Function(Arc::new(|_, _| 1.0)),
            ("oscillating", _) => Source::Function(Arc::new(move |t, x| {
                (2.0 * PI * t).cos() * (1.0 + sine_profile(dim, x))
            })),
            (rhs, _) => {
                return Err(invalid(format!(
                    "rhs '{rhs}' is incompatible with exact solution '{}'",
                    self.exact
                )))
            }
        };

        let initial = match (self.u0.as_str(), &exact) {
            ("zero", _) => InitialDatum::Zero,
            ("exact", Some(ExactSolution::Analytic(u))) => InitialDatum::Function(u.at(0.0)),
            ("exact", Some(ExactSolution::Discrete(uh))) => InitialDatum::Discrete(uh.clone()),
            ("sine", _) => {
                InitialDatum::Function(ScalarFunction::new(move |x| sine_profile(dim, x)))
            }
            ("bump", _) => InitialDatum::Function(ScalarFunction::new(move |x| {
                let b = 4.0 * x[0] * (1.0 - x[0]);
                if dim == 2 {
                    b * 4.0 * x[1] * (1.0 - x[1])
                } else {
                    b
                }
            })),
            (u0, _) => return Err(invalid(format!("u0 '{u0}' needs an exact solution"))),
        };

        let mut problem = problem.with_source(source)?.with_initial(initial)?;
        if let Some(e) = exact {
            problem = problem.with_exact(e)?;
        }
        Ok(problem)
    }
}

fn sine_profile(dim: usize, x: Point) -> f64 {
    if dim == 2 {
        (PI * x[0]).sin() * (PI * x[1]).sin()
    } else {
        (PI * x[0]).sin()
    }
}

/// Builds a corpus problem on the given space and grid.
pub fn corpus_problem(id: &str, space: Arc<FeSpace>, grid: TimeGrid) -> Result<ParabolicProblem> {
    Ok(ProblemDefinition::corpus(id)?
        .build(space, grid)?
        .with_id(id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;

    fn space(dim: usize, n: usize, r: usize) -> Arc<FeSpace> {
        let mesh = if dim == 1 {
            Mesh::interval(0.0, 1.0, n).unwrap()
        } else {
            Mesh::unit_square(n).unwrap()
        };
        Arc::new(FeSpace::new(Arc::new(mesh), r).unwrap())
    }

    #[test]
    fn every_corpus_problem_builds_in_both_dimensions() {
        for dim in [1, 2] {
            for id in PROBLEM_IDS {
                let p = corpus_problem(id, space(dim, 4, 2), TimeGrid::uniform(1.0, 4).unwrap())
                    .unwrap();
                assert_eq!(p.id, *id);
            }
        }
        assert!(
            corpus_problem("nope", space(1, 4, 1), TimeGrid::uniform(1.0, 2).unwrap()).is_err()
        );
    }

    #[test]
    fn manufactured_source_matches_hand_derivation() {
        // u = e^{-t} sin(pi x), a = 1 + t  =>  f = e^{-t} sin(pi x) (-1 + (1 + t) pi^2)
        let u = AnalyticSolution::product_sine(1, |t| (-t).exp(), |t| -(-t).exp());
        let f = u
            .manufactured_source(&corpus_field("lipschitz-time").unwrap())
            .unwrap();
        for &(t, x) in &[(0.0f64, 0.3f64), (0.7, 0.5), (1.0, 0.9)] {
            let expect = (-t).exp() * (PI * x).sin() * (-1.0 + (1.0 + t) * PI * PI);
            assert!((f(t, [x, 0.0]) - expect).abs() < 1e-12);
        }
        // separable field in 1D: a = b(t)(1 + x/2), d = b/2
        let u = AnalyticSolution::product_sine(1, |_| 1.0, |_| 0.0);
        let f = u
            .manufactured_source(&corpus_field("separable").unwrap())
            .unwrap();
        let (t, x) = (0.2, 0.4);
        let b = 1.0 + 0.5 * (2.0 * PI * t).sin();
        let expect =
            -(b * 0.5 * PI * (PI * x).cos() - b * (1.0 + 0.5 * x) * PI * PI * (PI * x).sin());
        assert!((f(t, [x, 0.0]) - expect).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_product_sine_matches_finite_differences() {
        let u = AnalyticSolution::product_sine(2, |t| 1.0 + t, |_| 1.0);
        let (t, x) = (0.3, [0.31, 0.77]);
        let e = 1e-5;
        let h = u.hessian(t, x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += e;
            xm[i] -= e;
            let gp = u.gradient(t, xp);
            let gm = u.gradient(t, xm);
            for j in 0..2 {
                assert!(((gp[j] - gm[j]) / (2.0 * e) - h[i][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_solution_must_vanish_on_boundary() {
        let s = space(1, 4, 1);
        let p = ParabolicProblem::new(
            s,
            TimeGrid::uniform(1.0, 2).unwrap(),
            corpus_field("identity").unwrap(),
        )
        .unwrap();
        let bad = AnalyticSolution::new(
            |_, _| 1.0,
            |_, _| [0.0; 2],
            |_, _| [[0.0; 2]; 2],
            |_, _| 0.0,
        );
        assert!(p.with_exact(ExactSolution::Analytic(bad)).is_err());
    }

    #[test]
    fn average_load_of_time_linear_source() {
        let s = space(1, 6, 1);
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let g = |x: Point| x[0] * (1.0 - x[0]);
        let p = ParabolicProblem::new(s.clone(), grid, corpus_field("identity").unwrap())
            .unwrap()
            .with_source(Source::Function(Arc::new(move |t, x| t * g(x))))
            .unwrap();
        let b = p.average_load_with(1, 2, None).unwrap();
        let half = assemble_load(&s, |x| 0.5 * g(x), p.load_order());
        for (a, c) in b.iter().zip(&half) {
            assert!((a - c).abs() < 1e-15);
        }
        let p = p
            .with_source(Source::Function(Arc::new(move |t, x| t.sin() * g(x))))
            .unwrap();
        let b = p.average_load_with(1, 4, None).unwrap();
        let exact = assemble_load(&s, |x| (1.0 - 1f64.cos()) * g(x), p.load_order());
        for (a, c) in b.iter().zip(&exact) {
            assert!((a - c).abs() < 1e-10);
        }
        assert!(p.average_load_with(2, 4, None).is_err());
    }
}

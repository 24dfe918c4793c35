//! Experiment configuration (TOML, unknown keys rejected).

use std::path::Path;
use std::sync::Arc;

use parabolic_dg::analysis::Line;
use parabolic_dg::opcalc::{DEFAULT_BUDGET, DEFAULT_MU_SWEEP};
use parabolic_dg::problem::{ProblemDefinition, DEFAULT_TIME_QUADRATURE};
use parabolic_dg::{FeSpace, Mesh, ParabolicProblem, TimeGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A scalar or a non-empty list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Sweep<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Sweep::One(v) => vec![v.clone()],
            Sweep::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// Built-in problem id.
    pub id: Option<String>,
    /// Field id; overrides the field of `id`.
    pub field: Option<String>,
    pub rhs: Option<String>,
    pub u0: Option<String>,
    pub exact: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Graded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_kind")]
    pub kind: GridKind,
    #[serde(default = "one")]
    pub final_time: f64,
    pub steps: Sweep<usize>,
    /// Grading exponent for `kind = "graded"`.
    #[serde(default = "two")]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default = "one_usize")]
    pub dim: usize,
    pub n: Sweep<usize>,
    #[serde(default = "one_usize")]
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsSection {
    #[serde(default = "default_mus")]
    pub mu: Vec<f64>,
    /// Rays `|arg z|` of the resolvent samples.
    #[serde(default = "default_angles")]
    pub resolvent_angles: Vec<f64>,
    #[serde(default = "default_radii")]
    pub resolvent_radii: Vec<f64>,
    /// Time samples per interval in the stability-lemma audit.
    #[serde(default = "default_stability_samples")]
    pub stability_samples: usize,
}

impl Default for OperatorsSection {
    fn default() -> Self {
        Self {
            mu: default_mus(),
            resolvent_angles: default_angles(),
            resolvent_radii: default_radii(),
            stability_samples: default_stability_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Temporal norm indices; `inf` is allowed.
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_line")]
    pub line: Line,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            p: default_p(),
            line: default_line(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_time_quadrature")]
    pub time: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            time: default_time_quadrature(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Cap on `M * dofs` for operator audits.
    #[serde(default = "default_budget")]
    pub operators: usize,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            operators: default_budget(),
        }
    }
}

/// Constants of the step-size and mesh assumptions checked by `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionsSection {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "two")]
    pub beta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_quasi_uniform")]
    pub quasi_uniform: f64,
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        Self {
            c: default_c(),
            beta: two(),
            kappa: default_kappa(),
            quasi_uniform: default_quasi_uniform(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub grid: GridSection,
    pub mesh: MeshSection,
    #[serde(default)]
    pub operators: OperatorsSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub assumptions: AssumptionsSection,
    /// Output directory; `--out` takes precedence.
    pub output: Option<String>,
}

fn default_grid_kind() -> GridKind {
    GridKind::Uniform
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_usize() -> usize {
    1
}
fn default_mus() -> Vec<f64> {
    DEFAULT_MU_SWEEP.to_vec()
}
fn default_angles() -> Vec<f64> {
    vec![0.75 * std::f64::consts::PI, std::f64::consts::PI]
}
fn default_radii() -> Vec<f64> {
    vec![1.0, 10.0, 100.0]
}
fn default_stability_samples() -> usize {
    5
}
fn default_p() -> Vec<f64> {
    vec![1.0, 2.0, f64::INFINITY]
}
fn default_line() -> Line {
    Line::Time
}
fn default_time_quadrature() -> usize {
    DEFAULT_TIME_QUADRATURE
}
fn default_budget() -> usize {
    DEFAULT_BUDGET
}
fn default_c() -> f64 {
    0.01
}
fn default_kappa() -> f64 {
    4.0
}
fn default_quasi_uniform() -> f64 {
    10.0
}

/// One point of the (mesh, grid) sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Run {
    pub index: usize,
    pub n: usize,
    pub steps: usize,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Resolves the problem section into a definition.
    pub fn definition(&self) -> Result<ProblemDefinition, CliError> {
        let p = &self.problem;
        let mut def = match &p.id {
            Some(id) => {
                if p.rhs.is_some() || p.u0.is_some() || p.exact.is_some() {
                    return Err(CliError::Config(
                        "problem.id cannot be combined with rhs, u0 or exact".into(),
                    ));
                }
                ProblemDefinition::corpus(id).map_err(|e| CliError::Config(e.to_string()))?
            }
            None => {
                let need = |v: &Option<String>, what: &str| {
                    v.clone()
                        .ok_or_else(|| CliError::Config(format!("inline problem needs '{what}'")))
                };
                ProblemDefinition {
                    field: need(&p.field, "field")?,
                    rhs: need(&p.rhs, "rhs")?,
                    u0: need(&p.u0, "u0")?,
                    exact: need(&p.exact, "exact")?,
                }
            }
        };
        if let (Some(_), Some(f)) = (&p.id, &p.field) {
            def.field = f.clone();
        }
        def.check_ids()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(def)
    }

    fn check(&self) -> Result<(), CliError> {
        self.definition()?;
        let bad = |msg: &str| Err(CliError::Config(msg.into()));
        if self.grid.steps.values().is_empty() || self.mesh.n.values().is_empty() {
            return bad("sweeps must be non-empty");
        }
        if self.grid.steps.values().contains(&0) || self.mesh.n.values().contains(&0) {
            return bad("step and cell counts must be positive");
        }
        if !(1..=2).contains(&self.mesh.dim) {
            return bad("mesh.dim must be 1 or 2");
        }
        if self.operators.mu.is_empty() || self.analysis.p.is_empty() {
            return bad("mu and p lists must be non-empty");
        }
        if self.analysis.p.iter().any(|&p| p.is_nan() || p < 1.0) {
            return bad("every p must be >= 1");
        }
        if self.quadrature.time == 0 {
            return bad("quadrature.time must be positive");
        }
        Ok(())
    }

    /// Runs of the sweep. Equal-length lists are zipped; a single value is
    /// broadcast; otherwise the Cartesian product is taken (mesh-major).
    pub fn runs(&self) -> Vec<Run> {
        let ns = self.mesh.n.values();
        let ms = self.grid.steps.values();
        let pairs: Vec<(usize, usize)> = if ns.len() == ms.len() {
            ns.into_iter().zip(ms).collect()
        } else if ns.len() == 1 || ms.len() == 1 {
            let len = ns.len().max(ms.len());
            (0..len)
                .map(|i| (ns[i.min(ns.len() - 1)], ms[i.min(ms.len() - 1)]))
                .collect()
        } else {
            ns.iter()
                .flat_map(|&n| ms.iter().map(move |&m| (n, m)))
                .collect()
        };
        pairs
            .into_iter()
            .enumerate()
            .map(|(index, (n, steps))| Run { index, n, steps })
            .collect()
    }

    pub fn space(&self, n: usize) -> parabolic_dg::Result<Arc<FeSpace>> {
        let mesh = match self.mesh.dim {
            1 => Mesh::interval(0.0, 1.0, n)?,
            _ => Mesh::unit_square(n)?,
        };
        Ok(Arc::new(FeSpace::new(Arc::new(mesh), self.mesh.degree)?))
    }

    pub fn time_grid(&self, steps: usize) -> parabolic_dg::Result<TimeGrid> {
        match self.grid.kind {
            GridKind::Uniform => TimeGrid::uniform(self.grid.final_time, steps),
            GridKind::Graded => TimeGrid::graded(self.grid.final_time, steps, self.grid.gamma),
        }
    }

    pub fn build(&self, run: &Run) -> parabolic_dg::Result<ParabolicProblem> {
        let def = self
            .definition()
            .map_err(|e| parabolic_dg::Error::InvalidArgument(e.to_string()))?;
        def.build(self.space(run.n)?, self.time_grid(run.steps)?)?
            .with_time_quadrature(self.quadrature.time)
    }
}

//! Lowest-order discontinuous Galerkin time stepping with continuous
//! Lagrange elements in space for parabolic problems with time-dependent
//! coefficients, together with the discrete operator calculus used to
//! audit maximal-regularity and error estimates.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod coeffs;
pub mod dg0;
pub mod error;
pub mod exec;
pub mod fem;
pub mod mesh;
pub mod norms;
pub mod opcalc;
pub mod problem;
pub mod quadrature;
pub mod sparse;
pub mod timegrid;

pub use coeffs::CoefficientField;
pub use dg0::{solve, DgSolution};
pub use error::{Error, Result};
pub use fem::FeSpace;
pub use mesh::Mesh;
pub use problem::{corpus_problem, ParabolicProblem, ProblemDefinition};
pub use sparse::{SparseSpd, SpdSolver};
pub use timegrid::TimeGrid;

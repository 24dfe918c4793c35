//! Time-dependent diffusion tensors `a_ij(t, x)` and their audits.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::Point;

/// Symmetric 2x2 tensor; one-dimensional problems read only `[0][0]`.
pub type Tensor = [[f64; 2]; 2];

type TensorFn = Arc<dyn Fn(f64, Point) -> Tensor + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, Point) -> [f64; 2] + Send + Sync>;
type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A diffusion coefficient field with its declared structural constants.
#[derive(Clone)]
pub struct CoefficientField {
    id: String,
    eval: TensorFn,
    /// Spatial divergence `d_j = sum_i d/dx_i a_ij`, needed to manufacture
    /// right-hand sides from exact solutions.
    divergence: Option<VectorFn>,
    /// When the field is `b(t) a0(x)`, the scalar `b`.
    time_factor: Option<ScalarFn>,
    autonomous: bool,
    pub alpha_declared: f64,
    pub holder_exponent_declared: f64,
    pub lipschitz_space_bound_declared: Option<f64>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("id", &self.id)
            .field("alpha_declared", &self.alpha_declared)
            .field("holder_exponent_declared", &self.holder_exponent_declared)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

impl CoefficientField {
    pub fn new(
        id: impl Into<String>,
        alpha_declared: f64,
        holder_exponent_declared: f64,
        eval: impl Fn(f64, Point) -> Tensor + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            eval: Arc::new(eval),
            divergence: None,
            time_factor: None,
            autonomous: false,
            alpha_declared,
            holder_exponent_declared,
            lipschitz_space_bound_declared: None,
        }
    }

    pub fn with_divergence(
        mut self,
        div: impl Fn(f64, Point) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        self.divergence = Some(Arc::new(div));
        self
    }

    /// Declares the field separable as `b(t) a0(x)`.
    pub fn with_time_factor(mut self, b: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.time_factor = Some(Arc::new(b));
        self
    }

    /// Declares the field independent of time.
    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    pub fn with_lipschitz_bound(mut self, bound: f64) -> Self {
        self.lipschitz_space_bound_declared = Some(bound);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn time_factor(&self, t: f64) -> Option<f64> {
        self.time_factor.as_ref().map(|b| b(t))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: Point) -> Tensor {
        (self.eval)(t, x)
    }

    pub fn divergence(&self, t: f64, x: Point) -> Option<[f64; 2]> {
        self.divergence.as_ref().map(|d| d(t, x))
    }

    pub fn has_divergence(&self) -> bool {
        self.divergence.is_some()
    }

    /// Smallest eigenvalue of `a(t, x)` over the samples.
    pub fn ellipticity_audit(
        &self,
        dim: usize,
        t_samples: &[f64],
        x_samples: &[Point],
    ) -> Result<EllipticityReport> {
        if t_samples.is_empty() || x_samples.is_empty() {
            return Err(Error::InsufficientData("empty sample set".into()));
        }
        let mut alpha = f64::INFINITY;
        for &t in t_samples {
            for &x in x_samples {
                let a = self.eval(t, x);
                let lam = if dim == 1 {
                    a[0][0]
                } else {
                    let scale = a[0][1].abs().max(a[1][0].abs()).max(1.0);
                    if (a[0][1] - a[1][0]).abs() > 1e-14 * scale {
                        return Err(Error::InvalidField(format!(
                            "{}: a(t={t}, x={x:?}) is not symmetric",
                            self.id
                        )));
                    }
                    min_eigenvalue(&a)
                };
                alpha = alpha.min(lam);
            }
        }
        Ok(EllipticityReport {
            alpha_measured: alpha,
            alpha_declared: self.alpha_declared,
            violated: alpha < self.alpha_declared - 1e-12,
        })
    }

    /// Estimates the temporal modulus of continuity on dyadic separations
    /// `s_j = T 2^{-j}`, `j = 1..levels`, and fits `omega(s) ~ C s^gamma`.
    pub fn temporal_modulus_audit(
        &self,
        dim: usize,
        final_time: f64,
        levels: usize,
        time_samples: usize,
        x_samples: &[Point],
    ) -> Result<ModulusReport> {
        if levels < 3 {
            return Err(Error::InsufficientData(format!(
                "temporal modulus fit needs at least 3 dyadic levels, got {levels}"
            )));
        }
        if time_samples < 2 || x_samples.is_empty() {
            return Err(Error::InsufficientData("too few samples".into()));
        }
        let comps: &[(usize, usize)] = if dim == 1 {
            &[(0, 0)]
        } else {
            &[(0, 0), (0, 1), (1, 0), (1, 1)]
        };
        let mut separations = Vec::with_capacity(levels);
        let mut moduli = Vec::with_capacity(levels);
        for j in 1..=levels {
            let s = final_time * 0.5f64.powi(j as i32);
            let span = final_time - s;
            let mut omega: f64 = 0.0;
            for i in 0..time_samples {
                let t1 = span * i as f64 / (time_samples - 1) as f64;
                let t2 = t1 + s;
                for &x in x_samples {
                    let a1 = self.eval(t1, x);
                    let a2 = self.eval(t2, x);
                    for &(p, q) in comps {
                        omega = omega.max((a1[p][q] - a2[p][q]).abs());
                    }
                }
            }
            separations.push(s);
            moduli.push(omega);
        }
        let fit: Vec<(f64, f64)> = separations
            .iter()
            .zip(&moduli)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&s, &w)| (s.ln(), w.ln()))
            .collect();
        let (exponent, constant, passes) = if fit.is_empty() {
            (None, 0.0, true)
        } else if fit.len() < 3 {
            return Err(Error::InsufficientData(
                "fewer than 3 non-zero modulus samples".into(),
            ));
        } else {
            let (slope, intercept) = least_squares(&fit);
            (Some(slope), intercept.exp(), slope > 0.5 + MODULUS_MARGIN)
        };
        Ok(ModulusReport {
            separations,
            moduli,
            exponent,
            constant,
            passes,
        })
    }
}

/// Margin by which the fitted exponent must exceed 1/2.
pub const MODULUS_MARGIN: f64 = 1e-3;

fn min_eigenvalue(a: &Tensor) -> f64 {
    let tr = a[0][0] + a[1][1];
    let diff = a[0][0] - a[1][1];
    let off = 0.5 * (a[0][1] + a[1][0]);
    0.5 * tr - (0.25 * diff * diff + off * off).sqrt()
}

/// Least-squares line through `(x, y)` pairs; returns `(slope, intercept)`.
pub fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub alpha_measured: f64,
    pub alpha_declared: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub separations: Vec<f64>,
    pub moduli: Vec<f64>,
    /// Fitted power; `None` when every increment vanished.
    pub exponent: Option<f64>,
    pub constant: f64,
    /// Fitted exponent exceeds 1/2 (or the field is constant in time).
    pub passes: bool,
}

/// Tensor-product sample points on the unit interval or unit square.
pub fn unit_samples(dim: usize, per_axis: usize) -> Vec<Point> {
    let coord = |i: usize| {
        if per_axis == 1 {
            0.5
        } else {
            i as f64 / (per_axis - 1) as f64
        }
    };
    match dim {
        1 => (0..per_axis).map(|i| [coord(i), 0.0]).collect(),
        _ => (0..per_axis)
            .flat_map(|j| (0..per_axis).map(move |i| [coord(i), coord(j)]))
            .collect(),
    }
}

fn scalar(c: f64) -> Tensor {
    [[c, 0.0], [0.0, c]]
}

/// Identifiers of the built-in fields.
pub const FIELD_IDS: &[&str] = &[
    "identity",
    "lipschitz-time",
    "sine-time",
    "quadratic-time",
    "sqrt-time",
    "anisotropic",
    "separable",
];

/// Looks up a built-in field by id.
pub fn corpus_field(id: &str) -> Result<CoefficientField> {
    let field = match id {
        "identity" => CoefficientField::new(id, 1.0, 1.0, |_, _| scalar(1.0))
            .with_divergence(|_, _| [0.0, 0.0])
            .with_time_factor(|_| 1.0)
            .with_lipschitz_bound(1.0)
            .autonomous(),
        "lipschitz-time" => CoefficientField::new(id, 1.0, 1.0, |t, _| scalar(1.0 + t))
            .with_divergence(|_, _| [0.0, 0.0])
            .with_time_factor(|t| 1.0 + t)
            .with_lipschitz_bound(2.0),
        "sine-time" => CoefficientField::new(id, 0.5, 1.0, |t, _| {
            scalar(1.0 + 0.5 * (2.0 * PI * t).sin())
        })
        .with_divergence(|_, _| [0.0, 0.0])
        .with_time_factor(|t| 1.0 + 0.5 * (2.0 * PI * t).sin())
        .with_lipschitz_bound(1.5),
        "quadratic-time" => CoefficientField::new(id, 1.0, 1.0, |t, _| scalar(1.0 + t * t))
            .with_divergence(|_, _| [0.0, 0.0])
            .with_time_factor(|t| 1.0 + t * t)
            .with_lipschitz_bound(2.0),
        "sqrt-time" => CoefficientField::new(id, 1.0, 0.5, |t, _| scalar(1.0 + t.max(0.0).sqrt()))
            .with_divergence(|_, _| [0.0, 0.0])
            .with_time_factor(|t| 1.0 + t.max(0.0).sqrt())
            .with_lipschitz_bound(2.0),
        "anisotropic" => CoefficientField::new(id, 1.0, 1.0, |t, x| {
            [[1.0 + t, 0.0], [0.0, 2.0 + x[0].cos()]]
        })
        .with_divergence(|_, _| [0.0, 0.0])
        .with_lipschitz_bound(3.0),
        "separable" => CoefficientField::new(id, 0.5, 1.0, |t, x| {
            scalar((1.0 + 0.5 * (2.0 * PI * t).sin()) * (1.0 + 0.5 * x[0]))
        })
        .with_divergence(|t, _| [(1.0 + 0.5 * (2.0 * PI * t).sin()) * 0.5, 0.0])
        .with_time_factor(|t| 1.0 + 0.5 * (2.0 * PI * t).sin())
        .with_lipschitz_bound(2.25),
        _ => return Err(invalid(format!("unknown coefficient field id '{id}'"))),
    };
    Ok(field)
}

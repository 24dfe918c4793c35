//! Gauss–Legendre rules on intervals and collapsed Gauss rules on triangles.

use std::f64::consts::PI;

/// A quadrature rule on a reference cell: points in reference coordinates
/// and weights summing to the reference measure.
#[derive(Debug, Clone)]
pub struct Rule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `n`-point Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule on [0, 1] with weights summing to 1.
pub fn unit_interval(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect(),
        w.iter().map(|&wi| 0.5 * wi).collect(),
    )
}

/// Number of Gauss points exact for polynomials of the given degree.
pub fn points_for_degree(degree: usize) -> usize {
    degree / 2 + 1
}

/// Rule on the reference segment [0, 1] exact for polynomials of `degree`.
pub fn segment(degree: usize) -> Rule {
    let (x, w) = unit_interval(points_for_degree(degree));
    Rule {
        points: x.into_iter().map(|xi| [xi, 0.0]).collect(),
        weights: w,
    }
}

/// Rule on the reference triangle (0,0), (1,0), (0,1) exact for
/// polynomials of `degree`, via the Duffy collapse of a tensor Gauss rule.
pub fn triangle(degree: usize) -> Rule {
    // The collapse Jacobian adds one degree in the collapsed direction.
    let n = points_for_degree(degree + 1);
    let (x, w) = unit_interval(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&u, &wu) in x.iter().zip(&w) {
        for (&v, &wv) in x.iter().zip(&w) {
            points.push([u, v * (1.0 - u)]);
            weights.push(wu * wv * (1.0 - u));
        }
    }
    Rule { points, weights }
}

/// Reference rule for a cell of dimension `dim`.
pub fn reference(dim: usize, degree: usize) -> Rule {
    match dim {
        1 => segment(degree),
        _ => triangle(degree),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_weights_sum_to_two() {
        for n in 1..=20 {
            let (_, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-14, "n={n} sum={s}");
        }
    }

    #[test]
    fn gauss_is_exact_to_degree_2n_minus_1() {
        for n in 1..=12 {
            let (x, w) = unit_interval(n);
            for p in 0..2 * n {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(p as i32))
                    .sum();
                let exact = 1.0 / (p as f64 + 1.0);
                assert!((q - exact).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_rule_integrates_monomials() {
        // ∫_T x^a y^b = a! b! / (a+b+2)!
        let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
        for deg in 0..=10 {
            let rule = triangle(deg);
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let exact = fact(a) * fact(b) / fact(a + b + 2);
                    assert!((q - exact).abs() < 1e-15, "deg={deg} a={a} b={b}");
                }
            }
        }
    }
}

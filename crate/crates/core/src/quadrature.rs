//! Quadrature rules on the reference triangle and the unit interval.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1); triangle weights
//! sum to 1/2. Interval rules live on [0,1] with weights summing to 1.
//! Degrees up to 6 use symmetric rules with positive interior points; higher
//! degrees fall back to a collapsed (Duffy) tensor Gauss-Legendre rule.

use crate::error::{Error, Result};

/// Highest triangle degree supported.
pub const MAX_TRIANGLE_DEGREE: usize = 12;
/// Highest interval degree supported.
pub const MAX_EDGE_DEGREE: usize = 41;

#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl EdgeRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (z * p - pm1) / (z * z - 1.0);
    (p, d)
}

/// Gauss-Legendre rule on [0, 1] exact for polynomials of the given degree.
pub fn edge_rule(degree: usize) -> Result<EdgeRule> {
    if degree > MAX_EDGE_DEGREE {
        return Err(Error::UnsupportedDegree(degree));
    }
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    Ok(EdgeRule {
        points: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        weights: w.iter().map(|v| 0.5 * v).collect(),
        degree: 2 * n - 1,
    })
}

/// Triangle rule exact for polynomials of total degree `degree`.
pub fn triangle_rule(degree: usize) -> Result<TriangleRule> {
    match degree {
        0 | 1 => Ok(symmetric(&[Orbit::Centroid(1.0)], 1)),
        2 => Ok(symmetric(&[Orbit::Two(1.0 / 6.0, 1.0 / 3.0)], 2)),
        3 | 4 => Ok(symmetric(
            &[
                Orbit::Two(0.445_948_490_915_965, 0.223_381_589_678_011),
                Orbit::Two(0.091_576_213_509_771, 0.109_951_743_655_322),
            ],
            4,
        )),
        5 => {
            let s = 15f64.sqrt();
            Ok(symmetric(
                &[
                    Orbit::Centroid(0.225),
                    Orbit::Two((6.0 - s) / 21.0, (155.0 - s) / 1200.0),
                    Orbit::Two((6.0 + s) / 21.0, (155.0 + s) / 1200.0),
                ],
                5,
            ))
        }
        6 => Ok(symmetric(
            &[
                Orbit::Two(0.249_286_745_170_910, 0.116_786_275_726_379),
                Orbit::Two(0.063_089_014_491_502, 0.050_844_906_370_207),
                Orbit::Three(0.053_145_049_844_817, 0.310_352_451_033_784, 0.082_851_075_618_374),
            ],
            6,
        )),
        d if d <= MAX_TRIANGLE_DEGREE => Ok(collapsed(d)),
        d => Err(Error::UnsupportedDegree(d)),
    }
}

enum Orbit {
    Centroid(f64),
    /// Points (a, a, 1-2a) and permutations.
    Two(f64, f64),
    /// Points (a, b, 1-a-b) and all six permutations.
    Three(f64, f64, f64),
}

fn symmetric(orbits: &[Orbit], degree: usize) -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for o in orbits {
        match *o {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0, 1.0 / 3.0]);
                weights.push(0.5 * w);
            }
            Orbit::Two(a, w) => {
                let c = 1.0 - 2.0 * a;
                for p in [[a, a], [a, c], [c, a]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
            Orbit::Three(a, b, w) => {
                let c = 1.0 - a - b;
                for p in [[a, b], [b, a], [a, c], [c, a], [b, c], [c, b]] {
                    points.push(p);
                    weights.push(0.5 * w);
                }
            }
        }
    }
    TriangleRule { points, weights, degree }
}

fn collapsed(degree: usize) -> TriangleRule {
    // x = u, y = (1 - u) v, Jacobian (1 - u); the extra factor raises the u-degree by one.
    let n = (degree + 2).div_ceil(2);
    let (g, gw) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        let u = 0.5 * (g[i] + 1.0);
        for j in 0..n {
            let v = 0.5 * (g[j] + 1.0);
            points.push([u, (1.0 - u) * v]);
            weights.push(0.25 * gw[i] * gw[j] * (1.0 - u));
        }
    }
    TriangleRule { points, weights, degree }
}

/// Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!.
pub fn reference_monomial_integral(a: usize, b: usize) -> f64 {
    let mut num = 1.0;
    for k in 1..=a {
        num *= k as f64;
    }
    for k in 1..=b {
        num *= k as f64;
    }
    let mut den = 1.0;
    for k in 1..=(a + b + 2) {
        den *= k as f64;
    }
    num / den
}

/// Cache of triangle and interval rules keyed by degree.
#[derive(Default, Debug)]
pub struct QuadratureCache {
    tri: std::collections::BTreeMap<usize, std::sync::Arc<TriangleRule>>,
    edge: std::collections::BTreeMap<usize, std::sync::Arc<EdgeRule>>,
}

impl QuadratureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn triangle(&mut self, degree: usize) -> Result<std::sync::Arc<TriangleRule>> {
        if let Some(r) = self.tri.get(&degree) {
            return Ok(r.clone());
        }
        let r = std::sync::Arc::new(triangle_rule(degree)?);
        self.tri.insert(degree, r.clone());
        Ok(r)
    }

    pub fn edge(&mut self, degree: usize) -> Result<std::sync::Arc<EdgeRule>> {
        if let Some(r) = self.edge.get(&degree) {
            return Ok(r.clone());
        }
        let r = std::sync::Arc::new(edge_rule(degree)?);
        self.edge.insert(degree, r.clone());
        Ok(r)
    }
}

/// Largest relative monomial error of a triangle rule up to its stated degree.
pub fn triangle_exactness_error(rule: &TriangleRule) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 0..=rule.degree {
        for b in 0..=n {
            let a = n - b;
            let q: f64 = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                .sum();
            let exact = reference_monomial_integral(a, b);
            worst = worst.max(((q - exact) / exact).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rules_are_exact() {
        for d in 0..=MAX_TRIANGLE_DEGREE {
            let r = triangle_rule(d).unwrap();
            assert!(r.degree >= d);
            let err = triangle_exactness_error(&r);
            assert!(err < 1e-13, "degree {d}: {err:e}");
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in &r.points {
                assert!(p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0);
            }
            let sum: f64 = r.weights.iter().sum();
            assert!((sum - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn edge_rules_are_exact() {
        for d in 0..=MAX_EDGE_DEGREE {
            let r = edge_rule(d).unwrap();
            for k in 0..=d {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(k as i32)).sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!((q - exact).abs() < 1e-13 * exact.max(1e-3), "degree {d} k {k}");
            }
        }
    }

    #[test]
    fn degree_two_monomials() {
        let r = triangle_rule(2).unwrap();
        let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[0]).sum();
        assert!((q - 1.0 / 12.0).abs() < 1e-15);
        let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0] * p[1]).sum();
        assert!((q - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_large_degree() {
        assert!(matches!(triangle_rule(13), Err(Error::UnsupportedDegree(13))));
    }

    #[test]
    fn perturbed_weight_is_detected() {
        let mut r = triangle_rule(5).unwrap();
        r.weights[2] *= 1.0 + 1e-8;
        assert!(triangle_exactness_error(&r) > 1e-10);
    }
}

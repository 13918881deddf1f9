//! Discrete function spaces on a [`Mesh`](crate::mesh::Mesh).
//!
//! Every local basis is a polynomial in element-scaled coordinates
//! `s = (x - b_K) / h_K`, with `b_K` the barycenter and `h_K` the diameter.

mod dg;
mod hdiv;

pub use dg::{DgField, DgSpace, DgVectorField};
pub use hdiv::{HDivFamily, HDivField, HDivSpace};

use crate::mesh::Mesh;
use crate::quadrature::{EdgeRule, TriangleRule};

/// Quadrature points and weights of a triangle rule mapped onto element `k`.
pub fn element_quadrature(mesh: &Mesh, k: usize, rule: &TriangleRule) -> (Vec<[f64; 2]>, Vec<f64>) {
    let scale = 2.0 * mesh.area(k);
    let pts = rule.points.iter().map(|&r| mesh.map_point(k, r)).collect();
    let wts = rule.weights.iter().map(|w| w * scale).collect();
    (pts, wts)
}

/// Quadrature points, parameters and weights of an interval rule mapped onto
/// edge `e`, parameterized from its lower to its higher vertex.
pub fn edge_quadrature(mesh: &Mesh, e: usize, rule: &EdgeRule) -> (Vec<[f64; 2]>, Vec<f64>) {
    let edge = mesh.edge(e);
    let a = mesh.vertices()[edge.vertices[0]];
    let b = mesh.vertices()[edge.vertices[1]];
    let pts = rule.points.iter().map(|&t| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).collect();
    let wts = rule.weights.iter().map(|w| w * edge.length).collect();
    (pts, wts)
}

/// Scaled local coordinates of a physical point in element `k`.
pub fn scaled(mesh: &Mesh, k: usize, x: [f64; 2]) -> [f64; 2] {
    let g = mesh.geometry(k);
    [(x[0] - g.barycenter[0]) / g.diameter, (x[1] - g.barycenter[1]) / g.diameter]
}

/// Shifted Legendre polynomials on [0, 1] up to degree `n`, evaluated at `t`.
pub fn shifted_legendre(n: usize, t: f64) -> Vec<f64> {
    let z = 2.0 * t - 1.0;
    let mut out = vec![1.0; n + 1];
    if n >= 1 {
        out[1] = z;
    }
    for k in 2..=n {
        out[k] = ((2 * k - 1) as f64 * z * out[k - 1] - (k - 1) as f64 * out[k - 2]) / k as f64;
    }
    out
}

/// A vector field that can be evaluated inside a given element.
///
/// Discrete fields may be discontinuous across edges, so evaluation always
/// names the element whose restriction is meant.
pub trait VelocityField {
    fn value(&self, k: usize, x: [f64; 2]) -> [f64; 2];
    /// `j[c][d] = d u_c / d x_d`.
    fn jacobian(&self, k: usize, x: [f64; 2]) -> [[f64; 2]; 2];
    /// Polynomial degree used to size quadrature rules.
    fn degree(&self) -> usize;

    /// Mesh the field is defined on, when it is a discrete field.
    fn mesh(&self) -> Option<&std::sync::Arc<Mesh>> {
        None
    }

    fn divergence(&self, k: usize, x: [f64; 2]) -> f64 {
        let j = self.jacobian(k, x);
        j[0][0] + j[1][1]
    }
}

/// Closure-backed field with an explicit Jacobian.
pub struct AnalyticVelocity<F, G> {
    pub f: F,
    pub jac: G,
    pub degree: usize,
}

impl<F, G> AnalyticVelocity<F, G>
where
    F: Fn([f64; 2]) -> [f64; 2],
    G: Fn([f64; 2]) -> [[f64; 2]; 2],
{
    pub fn new(f: F, jac: G, degree: usize) -> Self {
        Self { f, jac, degree }
    }
}

impl<F, G> VelocityField for AnalyticVelocity<F, G>
where
    F: Fn([f64; 2]) -> [f64; 2],
    G: Fn([f64; 2]) -> [[f64; 2]; 2],
{
    fn value(&self, _k: usize, x: [f64; 2]) -> [f64; 2] {
        (self.f)(x)
    }

    fn jacobian(&self, _k: usize, x: [f64; 2]) -> [[f64; 2]; 2] {
        (self.jac)(x)
    }

    fn degree(&self) -> usize {
        self.degree
    }
}

/// Pointwise difference `a - b` of two fields.
pub struct Difference<'a, A: ?Sized, B: ?Sized>(pub &'a A, pub &'a B);

impl<A: VelocityField + ?Sized, B: VelocityField + ?Sized> VelocityField for Difference<'_, A, B> {
    fn value(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        let a = self.0.value(k, x);
        let b = self.1.value(k, x);
        [a[0] - b[0], a[1] - b[1]]
    }

    fn jacobian(&self, k: usize, x: [f64; 2]) -> [[f64; 2]; 2] {
        let a = self.0.jacobian(k, x);
        let b = self.1.jacobian(k, x);
        [[a[0][0] - b[0][0], a[0][1] - b[0][1]], [a[1][0] - b[1][0], a[1][1] - b[1][1]]]
    }

    fn degree(&self) -> usize {
        self.0.degree().max(self.1.degree())
    }
}

/// Scaled copy `s * a` of a field.
pub struct Scaled<'a, A: ?Sized>(pub f64, pub &'a A);

impl<A: VelocityField + ?Sized> VelocityField for Scaled<'_, A> {
    fn value(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        let a = self.1.value(k, x);
        [self.0 * a[0], self.0 * a[1]]
    }

    fn jacobian(&self, k: usize, x: [f64; 2]) -> [[f64; 2]; 2] {
        let a = self.1.jacobian(k, x);
        let s = self.0;
        [[s * a[0][0], s * a[0][1]], [s * a[1][0], s * a[1][1]]]
    }

    fn degree(&self) -> usize {
        self.1.degree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_legendre_is_orthogonal() {
        let rule = crate::quadrature::edge_rule(10).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                let s: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(&t, w)| {
                        let l = shifted_legendre(4, t);
                        w * l[i] * l[j]
                    })
                    .sum();
                let exact = if i == j { 1.0 / (2 * i + 1) as f64 } else { 0.0 };
                assert!((s - exact).abs() < 1e-14);
            }
        }
    }
}

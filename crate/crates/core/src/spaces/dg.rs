//! Discontinuous piecewise polynomials with an L2-orthonormal basis per element.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{element_quadrature, scaled};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::poly;
use crate::quadrature::triangle_rule;

#[derive(Debug)]
pub struct DgSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    /// Per element, row `a` holds the monomial coefficients of basis function `a`.
    coeffs: Vec<DMatrix<f64>>,
}

impl DgSpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize) -> Result<Self> {
        if degree > 4 {
            return Err(Error::InvalidDegree(format!("DG degree {degree} is above the supported maximum 4")));
        }
        let nm = poly::count(degree);
        let rule = triangle_rule(2 * degree)?;
        let mut coeffs = Vec::with_capacity(mesh.num_elements());
        for k in 0..mesh.num_elements() {
            let (pts, wts) = element_quadrature(&mesh, k, &rule);
            let mut m = DMatrix::<f64>::zeros(nm, nm);
            for (p, w) in pts.iter().zip(&wts) {
                let s = scaled(&mesh, k, *p);
                let v = poly::monomials(degree, s[0], s[1]);
                for i in 0..nm {
                    for j in 0..nm {
                        m[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::InvalidMesh(format!("monomial mass matrix of element {k} is not positive")))?;
            let linv = chol
                .l()
                .try_inverse()
                .ok_or_else(|| Error::InvalidMesh(format!("element {k} is too badly shaped")))?;
            coeffs.push(linv);
        }
        Ok(Self { mesh, degree, coeffs })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Basis functions per element.
    pub fn local_dim(&self) -> usize {
        poly::count(self.degree)
    }

    pub fn dim(&self) -> usize {
        self.local_dim() * self.mesh.num_elements()
    }

    pub fn dof(&self, k: usize, a: usize) -> usize {
        k * self.local_dim() + a
    }

    /// Values of the local basis of element `k` at the physical point `x`.
    pub fn basis(&self, k: usize, x: [f64; 2]) -> Vec<f64> {
        let s = scaled(&self.mesh, k, x);
        let m = poly::monomials(self.degree, s[0], s[1]);
        let c = &self.coeffs[k];
        (0..self.local_dim()).map(|a| (0..m.len()).map(|j| c[(a, j)] * m[j]).sum()).collect()
    }

    /// Values and physical gradients of the local basis of element `k`.
    pub fn basis_with_grad(&self, k: usize, x: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let s = scaled(&self.mesh, k, x);
        let h = self.mesh.geometry(k).diameter;
        let (m, g) = poly::monomials_with_grad(self.degree, s[0], s[1]);
        let c = &self.coeffs[k];
        let n = self.local_dim();
        let mut val = vec![0.0; n];
        let mut grad = vec![[0.0; 2]; n];
        for a in 0..n {
            for j in 0..m.len() {
                let cj = c[(a, j)];
                val[a] += cj * m[j];
                grad[a][0] += cj * g[j][0] / h;
                grad[a][1] += cj * g[j][1] / h;
            }
        }
        (val, grad)
    }

    /// L2 projection of a scalar function, integrated with a rule of the given degree.
    pub fn project<F: Fn([f64; 2]) -> f64>(self: &Arc<Self>, f: F, quad_degree: usize) -> Result<DgField> {
        let rule = triangle_rule(quad_degree.max(self.degree))?;
        let n = self.local_dim();
        let mut c = vec![0.0; self.dim()];
        for k in 0..self.mesh.num_elements() {
            let (pts, wts) = element_quadrature(&self.mesh, k, &rule);
            for (p, w) in pts.iter().zip(&wts) {
                let fv = f(*p);
                let b = self.basis(k, *p);
                for a in 0..n {
                    c[k * n + a] += w * fv * b[a];
                }
            }
        }
        Ok(DgField { space: self.clone(), coeffs: c })
    }

    /// Componentwise L2 projection of a vector function.
    pub fn project_vector<F: Fn([f64; 2]) -> [f64; 2]>(self: &Arc<Self>, f: F, quad_degree: usize) -> Result<DgVectorField> {
        let x = self.project(|p| f(p)[0], quad_degree)?;
        let y = self.project(|p| f(p)[1], quad_degree)?;
        Ok(DgVectorField { space: self.clone(), x: x.coeffs, y: y.coeffs })
    }

    pub fn zero(self: &Arc<Self>) -> DgField {
        DgField { space: self.clone(), coeffs: vec![0.0; self.dim()] }
    }

    pub fn field(self: &Arc<Self>, coeffs: Vec<f64>) -> Result<DgField> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: coeffs.len() });
        }
        Ok(DgField { space: self.clone(), coeffs })
    }

    /// Coefficients of the constant function 1.
    pub fn constant(self: &Arc<Self>, c: f64) -> DgField {
        let n = self.local_dim();
        let mut v = vec![0.0; self.dim()];
        for k in 0..self.mesh.num_elements() {
            v[k * n] = c * self.mesh.area(k).sqrt();
        }
        DgField { space: self.clone(), coeffs: v }
    }

    /// Projections of the coordinate functions x and y.
    pub fn coordinates(self: &Arc<Self>) -> DgVectorField {
        self.project_vector(|p| p, self.degree + 1).expect("rule of degree r + 1 exists")
    }
}

#[derive(Clone, Debug)]
pub struct DgField {
    pub space: Arc<DgSpace>,
    pub coeffs: Vec<f64>,
}

impl DgField {
    pub fn eval(&self, k: usize, x: [f64; 2]) -> f64 {
        let n = self.space.local_dim();
        let b = self.space.basis(k, x);
        (0..n).map(|a| self.coeffs[k * n + a] * b[a]).sum()
    }

    pub fn eval_with_grad(&self, k: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
        let n = self.space.local_dim();
        let (b, g) = self.space.basis_with_grad(k, x);
        let mut v = 0.0;
        let mut d = [0.0; 2];
        for a in 0..n {
            let c = self.coeffs[k * n + a];
            v += c * b[a];
            d[0] += c * g[a][0];
            d[1] += c * g[a][1];
        }
        (v, d)
    }

    /// Inner product; the basis is orthonormal so this is the coefficient dot product.
    pub fn dot(&self, other: &DgField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Integral over the domain.
    pub fn integral(&self) -> f64 {
        let n = self.space.local_dim();
        (0..self.space.mesh.num_elements()).map(|k| self.coeffs[k * n] * self.space.mesh.area(k).sqrt()).sum()
    }
}

#[derive(Clone, Debug)]
pub struct DgVectorField {
    pub space: Arc<DgSpace>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl DgVectorField {
    pub fn zero(space: &Arc<DgSpace>) -> Self {
        Self { space: space.clone(), x: vec![0.0; space.dim()], y: vec![0.0; space.dim()] }
    }

    pub fn component(&self, c: usize) -> &[f64] {
        if c == 0 {
            &self.x
        } else {
            &self.y
        }
    }

    pub fn eval(&self, k: usize, p: [f64; 2]) -> [f64; 2] {
        let n = self.space.local_dim();
        let b = self.space.basis(k, p);
        let mut v = [0.0; 2];
        for a in 0..n {
            v[0] += self.x[k * n + a] * b[a];
            v[1] += self.y[k * n + a] * b[a];
        }
        v
    }

    pub fn dot(&self, other: &DgVectorField) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        d(&self.x, &other.x) + d(&self.y, &other.y)
    }
}

impl super::VelocityField for DgVectorField {
    fn value(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        self.eval(k, x)
    }

    fn jacobian(&self, k: usize, x: [f64; 2]) -> [[f64; 2]; 2] {
        let n = self.space.local_dim();
        let (_, g) = self.space.basis_with_grad(k, x);
        let mut j = [[0.0; 2]; 2];
        for a in 0..n {
            for d in 0..2 {
                j[0][d] += self.x[k * n + a] * g[a][d];
                j[1][d] += self.y[k * n + a] * g[a][d];
            }
        }
        j
    }

    fn degree(&self) -> usize {
        self.space.degree
    }

    fn mesh(&self) -> Option<&Arc<Mesh>> {
        Some(&self.space.mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    fn space(r: usize) -> Arc<DgSpace> {
        let m = Arc::new(Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), 0.5).unwrap());
        Arc::new(DgSpace::new(m, r).unwrap())
    }

    #[test]
    fn basis_is_orthonormal() {
        for r in 0..=3 {
            let s = space(r);
            let rule = triangle_rule(2 * r).unwrap();
            for k in [0, 5, 17] {
                let (pts, wts) = element_quadrature(s.mesh(), k, &rule);
                let n = s.local_dim();
                let mut m = vec![0.0; n * n];
                for (p, w) in pts.iter().zip(&wts) {
                    let b = s.basis(k, *p);
                    for i in 0..n {
                        for j in 0..n {
                            m[i * n + j] += w * b[i] * b[j];
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let e = if i == j { 1.0 } else { 0.0 };
                        assert!((m[i * n + j] - e).abs() < 1e-12, "r={r} k={k} ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn projection_reproduces_polynomials() {
        let s = space(2);
        let f = |p: [f64; 2]| 1.0 + p[0] - 2.0 * p[0] * p[1] + 0.5 * p[1] * p[1];
        let u = s.project(f, 4).unwrap();
        for k in 0..s.mesh().num_elements() {
            let b = s.mesh().geometry(k).barycenter;
            let x = [b[0] + 0.01, b[1] - 0.02];
            assert!((u.eval(k, x) - f(x)).abs() < 1e-12);
            let (_, g) = u.eval_with_grad(k, x);
            assert!((g[0] - (1.0 - 2.0 * x[1])).abs() < 1e-11);
            assert!((g[1] - (-2.0 * x[0] + x[1])).abs() < 1e-11);
        }
        assert!((s.constant(1.0).integral() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_high_degree() {
        let m = Arc::new(Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap());
        assert!(DgSpace::new(m, 5).is_err());
    }
}

//! Raviart-Thomas and Brezzi-Douglas-Marini spaces with vanishing boundary flux.
//!
//! Local bases are dual to the classical moment functionals:
//! edge moments of `u.n` against shifted Legendre polynomials (edge normal and
//! parameter taken from the global edge, so neighbors agree), and interior
//! moments against `P_{k-1}^2` (RT) or the first-kind Nedelec space of order
//! `k-1` (BDM). Boundary-edge functionals are discarded, which imposes
//! `u.n = 0` on the boundary.
//!
//! Global layout: interior-edge moments first (edge-major), then interior
//! moments (element-major).

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{edge_quadrature, element_quadrature, scaled, shifted_legendre, VelocityField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::poly::{self, Poly2};
use crate::quadrature::{edge_rule, triangle_rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HDivFamily {
    Rt,
    Bdm,
}

#[derive(Debug)]
struct LocalBasis {
    /// Monomial coefficients (in scaled coordinates) of both components, one row per local function.
    cx: DMatrix<f64>,
    cy: DMatrix<f64>,
    dofs: Vec<Option<usize>>,
}

#[derive(Debug)]
pub struct HDivSpace {
    mesh: Arc<Mesh>,
    family: HDivFamily,
    order: usize,
    local: Vec<LocalBasis>,
    n_edge_dofs: usize,
    dim: usize,
}

fn vector_primitives(family: HDivFamily, k: usize) -> Vec<(Poly2, Poly2)> {
    let d = poly_degree(family, k);
    let mut out = Vec::new();
    for (a, b) in poly::exponents(k) {
        out.push((Poly2::monomial(a, b).padded(d), Poly2::zero(d)));
        out.push((Poly2::zero(d), Poly2::monomial(a, b).padded(d)));
    }
    if family == HDivFamily::Rt {
        for b in 0..=k {
            let a = k - b;
            out.push((Poly2::monomial(a + 1, b), Poly2::monomial(a, b + 1)));
        }
    }
    out
}

fn interior_tests(family: HDivFamily, k: usize) -> Vec<(Poly2, Poly2)> {
    let mut out = Vec::new();
    let full = match family {
        HDivFamily::Rt => k.checked_sub(1),
        HDivFamily::Bdm => k.checked_sub(2),
    };
    if let Some(m) = full {
        for (a, b) in poly::exponents(m) {
            out.push((Poly2::monomial(a, b).padded(m), Poly2::zero(m)));
            out.push((Poly2::zero(m), Poly2::monomial(a, b).padded(m)));
        }
        if family == HDivFamily::Bdm {
            for b in 0..=m {
                let a = m - b;
                out.push((Poly2::monomial(a, b + 1).scale(-1.0), Poly2::monomial(a + 1, b)));
            }
        }
    }
    out
}

fn poly_degree(family: HDivFamily, k: usize) -> usize {
    match family {
        HDivFamily::Rt => k + 1,
        HDivFamily::Bdm => k,
    }
}

impl HDivSpace {
    pub fn new(mesh: Arc<Mesh>, family: HDivFamily, order: usize) -> Result<Self> {
        if family == HDivFamily::Bdm && order == 0 {
            return Err(Error::InvalidDegree("BDM order must be at least 1".into()));
        }
        if order > 3 {
            return Err(Error::InvalidDegree(format!("H(div) order {order} is above the supported maximum 3")));
        }
        let p = poly_degree(family, order);
        let prims = vector_primitives(family, order);
        let tests = interior_tests(family, order);
        let nloc = prims.len();
        let ne = order + 1;
        assert_eq!(3 * ne + tests.len(), nloc);
        let erule = edge_rule(p + order)?;
        let trule = triangle_rule(p + order.saturating_sub(1))?;
        let n_edge_dofs = ne * mesh.interior_edges().len();
        let n_int = tests.len();

        let mut local = Vec::with_capacity(mesh.num_elements());
        for k in 0..mesh.num_elements() {
            let mut v = DMatrix::<f64>::zeros(nloc, nloc);
            let edges = mesh.element_edges(k);
            for (i, &e) in edges.iter().enumerate() {
                let (pts, wts) = edge_quadrature(&mesh, e, &erule);
                let n = mesh.edge(e).normal;
                for ((x, w), &t) in pts.iter().zip(&wts).zip(&erule.points) {
                    let s = scaled(&mesh, k, *x);
                    let m = poly::monomials(p, s[0], s[1]);
                    let leg = shifted_legendre(order, t);
                    for (j, (px, py)) in prims.iter().enumerate() {
                        let un = px.eval_monomials(&m) * n[0] + py.eval_monomials(&m) * n[1];
                        for l in 0..ne {
                            v[(i * ne + l, j)] += w * un * leg[l];
                        }
                    }
                }
            }
            if n_int > 0 {
                let (pts, wts) = element_quadrature(&mesh, k, &trule);
                for (x, w) in pts.iter().zip(&wts) {
                    let s = scaled(&mesh, k, *x);
                    let m = poly::monomials(p, s[0], s[1]);
                    for (l, (tx, ty)) in tests.iter().enumerate() {
                        let a = tx.eval(s[0], s[1]);
                        let b = ty.eval(s[0], s[1]);
                        for (j, (px, py)) in prims.iter().enumerate() {
                            v[(3 * ne + l, j)] += w * (px.eval_monomials(&m) * a + py.eval_monomials(&m) * b);
                        }
                    }
                }
            }
            let c = v
                .try_inverse()
                .ok_or_else(|| Error::InvalidMesh(format!("H(div) moments are not unisolvent on element {k}")))?;
            let nm = poly::count(p);
            let mut cx = DMatrix::<f64>::zeros(nloc, nm);
            let mut cy = DMatrix::<f64>::zeros(nloc, nm);
            for j in 0..nloc {
                for (m, (px, py)) in prims.iter().enumerate() {
                    let w = c[(m, j)];
                    for q in 0..nm {
                        cx[(j, q)] += w * px.coeffs()[q];
                        cy[(j, q)] += w * py.coeffs()[q];
                    }
                }
            }
            let mut dofs = Vec::with_capacity(nloc);
            for &e in &edges {
                for l in 0..ne {
                    dofs.push(mesh.interior_index(e).map(|ie| ie * ne + l));
                }
            }
            for l in 0..n_int {
                dofs.push(Some(n_edge_dofs + k * n_int + l));
            }
            local.push(LocalBasis { cx, cy, dofs });
        }
        let dim = n_edge_dofs + n_int * mesh.num_elements();
        Ok(Self { mesh, family, order, local, n_edge_dofs, dim })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> HDivFamily {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Polynomial degree of the local functions.
    pub fn poly_degree(&self) -> usize {
        poly_degree(self.family, self.order)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_edge_dofs(&self) -> usize {
        self.n_edge_dofs
    }

    pub fn local_dim(&self) -> usize {
        self.local[0].dofs.len()
    }

    /// Global index of each local function of element `k`; `None` for boundary-edge functions.
    pub fn local_dofs(&self, k: usize) -> &[Option<usize>] {
        &self.local[k].dofs
    }

    /// Whether every function of the space is componentwise in `P_r` on each element.
    pub fn within_dg(&self, r: usize) -> bool {
        self.poly_degree() <= r
    }

    /// Values of all local functions of element `k` at `x`.
    pub fn basis(&self, k: usize, x: [f64; 2]) -> Vec<[f64; 2]> {
        let s = scaled(&self.mesh, k, x);
        let m = poly::monomials(self.poly_degree(), s[0], s[1]);
        let lb = &self.local[k];
        (0..lb.dofs.len())
            .map(|j| {
                let mut v = [0.0; 2];
                for (q, mq) in m.iter().enumerate() {
                    v[0] += lb.cx[(j, q)] * mq;
                    v[1] += lb.cy[(j, q)] * mq;
                }
                v
            })
            .collect()
    }

    /// Values and Jacobians `d psi_c / d x_d` of all local functions of element `k`.
    pub fn basis_with_jacobian(&self, k: usize, x: [f64; 2]) -> (Vec<[f64; 2]>, Vec<[[f64; 2]; 2]>) {
        let s = scaled(&self.mesh, k, x);
        let h = self.mesh.geometry(k).diameter;
        let (m, g) = poly::monomials_with_grad(self.poly_degree(), s[0], s[1]);
        let lb = &self.local[k];
        let n = lb.dofs.len();
        let mut val = vec![[0.0; 2]; n];
        let mut jac = vec![[[0.0; 2]; 2]; n];
        for j in 0..n {
            for q in 0..m.len() {
                let a = lb.cx[(j, q)];
                let b = lb.cy[(j, q)];
                val[j][0] += a * m[q];
                val[j][1] += b * m[q];
                for d in 0..2 {
                    jac[j][0][d] += a * g[q][d] / h;
                    jac[j][1][d] += b * g[q][d] / h;
                }
            }
        }
        (val, jac)
    }

    pub fn zero(self: &Arc<Self>) -> HDivField {
        HDivField { space: self.clone(), coeffs: vec![0.0; self.dim] }
    }

    pub fn field(self: &Arc<Self>, coeffs: Vec<f64>) -> Result<HDivField> {
        if coeffs.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: coeffs.len() });
        }
        Ok(HDivField { space: self.clone(), coeffs })
    }

    /// Global basis function `j`.
    pub fn unit(self: &Arc<Self>, j: usize) -> HDivField {
        let mut c = vec![0.0; self.dim];
        c[j] = 1.0;
        HDivField { space: self.clone(), coeffs: c }
    }

    /// Canonical interpolant: evaluates the retained moment functionals of `u`,
    /// integrated exactly for polynomial `u` of degree at most `u_degree`.
    pub fn interpolate<F: Fn([f64; 2]) -> [f64; 2]>(self: &Arc<Self>, u: F, u_degree: usize) -> Result<HDivField> {
        self.interpolate_element(|_, x| u(x), u_degree)
    }

    /// Like [`interpolate`](Self::interpolate) for fields defined elementwise.
    /// Edge moments use the minus-side restriction.
    pub fn interpolate_element<F: Fn(usize, [f64; 2]) -> [f64; 2]>(
        self: &Arc<Self>,
        u: F,
        u_degree: usize,
    ) -> Result<HDivField> {
        let k_ord = self.order;
        let ne = k_ord + 1;
        let erule = edge_rule(u_degree + k_ord)?;
        let tests = interior_tests(self.family, k_ord);
        let mut c = vec![0.0; self.dim];
        for (ie, &e) in self.mesh.interior_edges().iter().enumerate() {
            let (pts, wts) = edge_quadrature(&self.mesh, e, &erule);
            let edge = self.mesh.edge(e);
            let n = edge.normal;
            for ((x, w), &t) in pts.iter().zip(&wts).zip(&erule.points) {
                let v = u(edge.minus, *x);
                let un = v[0] * n[0] + v[1] * n[1];
                let leg = shifted_legendre(k_ord, t);
                for l in 0..ne {
                    c[ie * ne + l] += w * un * leg[l];
                }
            }
        }
        if !tests.is_empty() {
            let trule = triangle_rule(u_degree + k_ord)?;
            let n_int = tests.len();
            for k in 0..self.mesh.num_elements() {
                let (pts, wts) = element_quadrature(&self.mesh, k, &trule);
                for (x, w) in pts.iter().zip(&wts) {
                    let s = scaled(&self.mesh, k, *x);
                    let v = u(k, *x);
                    for (l, (tx, ty)) in tests.iter().enumerate() {
                        c[self.n_edge_dofs + k * n_int + l] += w * (v[0] * tx.eval(s[0], s[1]) + v[1] * ty.eval(s[0], s[1]));
                    }
                }
            }
        }
        Ok(HDivField { space: self.clone(), coeffs: c })
    }
}

#[derive(Clone, Debug)]
pub struct HDivField {
    pub space: Arc<HDivSpace>,
    pub coeffs: Vec<f64>,
}

impl HDivField {
    pub fn eval(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        let b = self.space.basis(k, x);
        let mut v = [0.0; 2];
        for (j, d) in self.space.local_dofs(k).iter().enumerate() {
            if let Some(g) = d {
                v[0] += self.coeffs[*g] * b[j][0];
                v[1] += self.coeffs[*g] * b[j][1];
            }
        }
        v
    }

    pub fn eval_with_jacobian(&self, k: usize, x: [f64; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
        let (b, jb) = self.space.basis_with_jacobian(k, x);
        let mut v = [0.0; 2];
        let mut jac = [[0.0; 2]; 2];
        for (j, d) in self.space.local_dofs(k).iter().enumerate() {
            if let Some(g) = d {
                let c = self.coeffs[*g];
                for a in 0..2 {
                    v[a] += c * b[j][a];
                    for e in 0..2 {
                        jac[a][e] += c * jb[j][a][e];
                    }
                }
            }
        }
        (v, jac)
    }

    pub fn scaled(&self, s: f64) -> HDivField {
        HDivField { space: self.space.clone(), coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }
}

impl VelocityField for HDivField {
    fn value(&self, k: usize, x: [f64; 2]) -> [f64; 2] {
        self.eval(k, x)
    }

    fn jacobian(&self, k: usize, x: [f64; 2]) -> [[f64; 2]; 2] {
        self.eval_with_jacobian(k, x).1
    }

    fn degree(&self) -> usize {
        self.space.poly_degree()
    }

    fn mesh(&self) -> Option<&Arc<Mesh>> {
        Some(&self.space.mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;

    fn mesh() -> Arc<Mesh> {
        Arc::new(Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), 0.5).unwrap())
    }

    #[test]
    fn dimensions() {
        let m = mesh();
        let ni = m.interior_edges().len();
        let nt = m.num_elements();
        for k in 0..=2 {
            let s = HDivSpace::new(m.clone(), HDivFamily::Rt, k).unwrap();
            assert_eq!(s.dim(), ni * (k + 1) + nt * k * (k + 1));
        }
        for k in 1..=3 {
            let s = HDivSpace::new(m.clone(), HDivFamily::Bdm, k).unwrap();
            assert_eq!(s.dim(), ni * (k + 1) + nt * (k * k - 1));
        }
        assert!(HDivSpace::new(m, HDivFamily::Bdm, 0).is_err());
    }

    #[test]
    fn normal_traces_match_and_vanish_on_boundary() {
        let m = mesh();
        let rule = edge_rule(6).unwrap();
        for (fam, k) in [(HDivFamily::Rt, 0), (HDivFamily::Rt, 1), (HDivFamily::Bdm, 2)] {
            let s = Arc::new(HDivSpace::new(m.clone(), fam, k).unwrap());
            for j in (0..s.dim()).step_by(3) {
                let f = s.unit(j);
                for e in 0..m.num_edges() {
                    let edge = m.edge(e);
                    let (pts, _) = edge_quadrature(&m, e, &rule);
                    for x in pts {
                        let a = f.eval(edge.minus, x);
                        let an = a[0] * edge.normal[0] + a[1] * edge.normal[1];
                        let bn = match edge.plus {
                            Some(p) => {
                                let b = f.eval(p, x);
                                b[0] * edge.normal[0] + b[1] * edge.normal[1]
                            }
                            None => 0.0,
                        };
                        assert!((an - bn).abs() < 1e-11, "{fam:?}{k} fn {j} edge {e}: {an} vs {bn}");
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_discrete_fields() {
        let m = mesh();
        let s = Arc::new(HDivSpace::new(m, HDivFamily::Rt, 1).unwrap());
        let c: Vec<f64> = (0..s.dim()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let f = s.field(c.clone()).unwrap();
        let g = s.interpolate_element(|k, x| f.eval(k, x), 2).unwrap();
        for (a, b) in c.iter().zip(&g.coeffs) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn rt_lowest_order_moments_are_fluxes() {
        let m = mesh();
        let s = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 0).unwrap());
        let u = s.interpolate(|x| [-x[1], x[0]], 1).unwrap();
        for (ie, &e) in m.interior_edges().iter().enumerate() {
            let edge = m.edge(e);
            let a = m.vertices()[edge.vertices[0]];
            let b = m.vertices()[edge.vertices[1]];
            let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let flux = (-mid[1] * edge.normal[0] + mid[0] * edge.normal[1]) * edge.length;
            assert!((u.coeffs[ie] - flux).abs() < 1e-13);
        }
    }
}

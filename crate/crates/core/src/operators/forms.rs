use std::sync::Arc;

use super::sparse::{SparseOperator, Triplets};
use crate::dynamics::physics::{Eos, Physics};
use crate::error::{Error, Result};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::spaces::{edge_quadrature, element_quadrature, DgField, DgSpace, DgVectorField, HDivField, HDivSpace, VelocityField};

pub(crate) fn check_mesh(dg: &DgSpace, u: &dyn VelocityField) -> Result<()> {
    if let Some(m) = u.mesh() {
        if !Arc::ptr_eq(m, dg.mesh()) {
            return Err(Error::SpaceMismatch("velocity and DG space live on different meshes".into()));
        }
    }
    Ok(())
}

fn check_same(a: &Arc<DgSpace>, b: &Arc<DgSpace>) -> Result<()> {
    if !Arc::ptr_eq(a, b) {
        return Err(Error::SpaceMismatch("DG fields belong to different spaces".into()));
    }
    Ok(())
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Quadrature degree covering every polynomial integrand of the energy-preserving
/// step for DG degree `r` and velocity polynomial degree `p`; raised for the
/// non-polynomial perfect-gas energy.
pub fn default_quad_degree(r: usize, p: usize, physics: &Physics) -> usize {
    let q = (r + 2 * p).max(2 * r + p).max(1);
    match physics.eos {
        Eos::ShallowWater => q,
        Eos::PerfectGas { .. } => q.max(2 * r + 6),
    }
}

/// `b_h(w, f, g) = sum_K int_K (w . grad f) g - sum_e int_e (w . n)(f_- - f_+) {g}`.
pub fn eval_b_h(w: &dyn VelocityField, f: &DgField, g: &DgField) -> Result<f64> {
    check_same(&f.space, &g.space)?;
    let dg = &f.space;
    check_mesh(dg, w)?;
    let mesh = dg.mesh();
    let q = w.degree() + 2 * dg.degree();
    let trule = triangle_rule(q)?;
    let erule = edge_rule(q)?;
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &trule);
        for (x, wq) in pts.iter().zip(&wts) {
            let (_, df) = f.eval_with_grad(k, *x);
            total += wq * dot(w.value(k, *x), df) * g.eval(k, *x);
        }
    }
    for &e in mesh.interior_edges() {
        let edge = mesh.edge(e);
        let (km, kp) = (edge.minus, edge.plus.unwrap());
        let (pts, wts) = edge_quadrature(mesh, e, &erule);
        for (x, wq) in pts.iter().zip(&wts) {
            let wn = 0.5 * (dot(w.value(km, *x), edge.normal) + dot(w.value(kp, *x), edge.normal));
            let jump = f.eval(km, *x) - f.eval(kp, *x);
            let avg = 0.5 * (g.eval(km, *x) + g.eval(kp, *x));
            total -= wq * wn * jump * avg;
        }
    }
    Ok(total)
}

/// `a_h(w, u, v) = sum_K int_K w . (v . grad u - u . grad v)
///               + sum_e int_e (u . n [v] - v . n [u]) . {w}` with `[u] = u_- - u_+`.
///
/// In operator variables this is `-<w, hat([A_u, A_v])>` for piecewise `P_r`
/// fields `u`, `v`; with `w = D hat(A)` and `u_h = -hat(A)` it is the advection
/// pairing of the momentum equation.
pub fn eval_a_h(w: &DgVectorField, u: &dyn VelocityField, v: &dyn VelocityField) -> Result<f64> {
    let dg = &w.space;
    check_mesh(dg, u)?;
    check_mesh(dg, v)?;
    let mesh = dg.mesh();
    let q = dg.degree() + 2 * u.degree().max(v.degree());
    let trule = triangle_rule(q)?;
    let erule = edge_rule(q)?;
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &trule);
        for (x, wq) in pts.iter().zip(&wts) {
            let wv = w.eval(k, *x);
            let uv = u.value(k, *x);
            let vv = v.value(k, *x);
            let ju = u.jacobian(k, *x);
            let jv = v.jacobian(k, *x);
            let mut s = 0.0;
            for c in 0..2 {
                let vgu = ju[c][0] * vv[0] + ju[c][1] * vv[1];
                let ugv = jv[c][0] * uv[0] + jv[c][1] * uv[1];
                s += wv[c] * (vgu - ugv);
            }
            total += wq * s;
        }
    }
    for &e in mesh.interior_edges() {
        let edge = mesh.edge(e);
        let n = edge.normal;
        let (km, kp) = (edge.minus, edge.plus.unwrap());
        let (pts, wts) = edge_quadrature(mesh, e, &erule);
        for (x, wq) in pts.iter().zip(&wts) {
            let (um, up) = (u.value(km, *x), u.value(kp, *x));
            let (vm, vp) = (v.value(km, *x), v.value(kp, *x));
            let un = 0.5 * (dot(um, n) + dot(up, n));
            let vn = 0.5 * (dot(vm, n) + dot(vp, n));
            let (wm, wp) = (w.eval(km, *x), w.eval(kp, *x));
            let mut s = 0.0;
            for c in 0..2 {
                let avg = 0.5 * (wm[c] + wp[c]);
                s += (un * (vm[c] - vp[c]) - vn * (um[c] - up[c])) * avg;
            }
            total += wq * s;
        }
    }
    Ok(total)
}

/// `T[i][j] = b_h(u, phi_i, phi_j)`, so that the density equation reads
/// `d rho / dt = T(u) rho` in the orthonormal basis.
pub fn assemble_transport(u: &dyn VelocityField, dg: &DgSpace) -> Result<SparseOperator> {
    check_mesh(dg, u)?;
    let mesh = dg.mesh();
    let n = dg.local_dim();
    let q = u.degree() + 2 * dg.degree();
    let trule = triangle_rule(q)?;
    let erule = edge_rule(q)?;
    let mut t = Triplets::new(dg.dim(), dg.dim());
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &trule);
        for (x, wq) in pts.iter().zip(&wts) {
            let uv = u.value(k, *x);
            let (b, g) = dg.basis_with_grad(k, *x);
            for i in 0..n {
                let d = dot(uv, g[i]);
                for j in 0..n {
                    t.add(dg.dof(k, i), dg.dof(k, j), wq * d * b[j]);
                }
            }
        }
    }
    for &e in mesh.interior_edges() {
        let edge = mesh.edge(e);
        let (km, kp) = (edge.minus, edge.plus.unwrap());
        let (pts, wts) = edge_quadrature(mesh, e, &erule);
        for (x, wq) in pts.iter().zip(&wts) {
            let un = 0.5 * (dot(u.value(km, *x), edge.normal) + dot(u.value(kp, *x), edge.normal));
            let bm = dg.basis(km, *x);
            let bp = dg.basis(kp, *x);
            for (ki, bi, sign) in [(km, &bm, 1.0), (kp, &bp, -1.0)] {
                for (kj, bj) in [(km, &bm), (kp, &bp)] {
                    for i in 0..n {
                        for j in 0..n {
                            t.add(dg.dof(ki, i), dg.dof(kj, j), -wq * un * sign * bi[i] * 0.5 * bj[j]);
                        }
                    }
                }
            }
        }
    }
    Ok(t.build())
}

/// `M[a][b] = int rho psi_a . psi_b` over the global velocity basis.
pub fn assemble_weighted_mass(vel: &Arc<HDivSpace>, rho: &DgField, quad_degree: usize) -> Result<SparseOperator> {
    if !Arc::ptr_eq(vel.mesh(), rho.space.mesh()) {
        return Err(Error::SpaceMismatch("velocity and density live on different meshes".into()));
    }
    let mesh = vel.mesh();
    let rule = triangle_rule(quad_degree)?;
    let mut t = Triplets::new(vel.dim(), vel.dim());
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &rule);
        let dofs = vel.local_dofs(k);
        for (x, wq) in pts.iter().zip(&wts) {
            let r = rho.eval(k, *x);
            let b = vel.basis(k, *x);
            for (a, da) in dofs.iter().enumerate() {
                let Some(ga) = da else { continue };
                for (c, dc) in dofs.iter().enumerate() {
                    let Some(gc) = dc else { continue };
                    t.add(*ga, *gc, wq * r * dot(b[a], b[c]));
                }
            }
        }
    }
    Ok(t.build())
}

/// Total energy `int 1/2 D |u|^2 + D e(D, S/D) + D Phi`. The rotation field
/// does not contribute.
pub fn energy(u: &HDivField, d: &DgField, s: Option<&DgField>, physics: &Physics, quad_degree: usize) -> Result<f64> {
    if !Arc::ptr_eq(u.space.mesh(), d.space.mesh()) {
        return Err(Error::SpaceMismatch("velocity and density live on different meshes".into()));
    }
    if let Some(s) = s {
        check_same(&d.space, &s.space)?;
    }
    let mesh = d.space.mesh();
    let rule = triangle_rule(quad_degree)?;
    let mut total = 0.0;
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &rule);
        for (x, wq) in pts.iter().zip(&wts) {
            let dv = d.eval(k, *x);
            if !(dv > 0.0) {
                return Err(Error::NonPositiveDensity { element: k, value: dv });
            }
            let sv = s.map_or(0.0, |s| s.eval(k, *x));
            let uv = u.eval(k, *x);
            total += wq * (0.5 * dv * dot(uv, uv) + physics.energy_density(dv, sv) + dv * physics.potential(*x));
        }
    }
    Ok(total)
}

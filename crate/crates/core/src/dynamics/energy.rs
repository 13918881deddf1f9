//! Energy-preserving midpoint step.
//!
//! With `m = D (u + R)`, midpoint values `u*`, `D*`, `S*` and the elementwise
//! projections `w = I(m_avg)`, `F = I(u_old . u_new / 2 + u* . R - f - Phi)`,
//! `G = I(-g)` (where `f`, `g` are discrete gradients of the internal energy),
//! the step solves for all test functions `psi`, `phi`:
//!
//! ```text
//! <m_new - m_old, psi> + dt a_h(w, u*, psi) - dt b_h(psi, F, D*) - dt b_h(psi, G, S*) = 0
//! <D_new - D_old, phi> - dt b_h(u*, phi, D*) = 0
//! <S_new - S_old, phi> - dt b_h(u*, phi, S*) = 0
//! ```
//!
//! Testing with `u*`, `F` and `G` telescopes the energy exactly, and `phi = 1`
//! shows mass and entropy are conserved. Edge terms use the average of both
//! traces of `u*` so each side's contribution can be evaluated separately.

use std::sync::Arc;

use log::debug;

use super::linsolve::LuCache;
use super::physics::Physics;
use super::{SimState, SolverMethod, SolverOpts, StepStats};
use crate::error::{Error, Result};
use crate::operators::{default_quad_degree, energy};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::spaces::{edge_quadrature, element_quadrature, DgField, DgSpace, HDivField, HDivSpace};

type V2 = [f64; 2];

fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct ElemCache {
    w: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<V2>,
    psi: Vec<V2>,
    dpsi: Vec<[V2; 2]>,
    rot: Vec<V2>,
    pot: Vec<f64>,
}

struct EdgeCache {
    k: [usize; 2],
    n: V2,
    w: Vec<f64>,
    phi: [Vec<f64>; 2],
    psi: [Vec<V2>; 2],
}

/// Elementwise projections entering the momentum equation.
#[derive(Clone)]
struct Proj {
    w: Vec<V2>,
    f: Vec<f64>,
    g: Vec<f64>,
}

/// Reusable stepper; caches basis values at quadrature points and the
/// factorizations used by the nonlinear solvers.
pub struct EnergyStepper {
    vel: Arc<HDivSpace>,
    dg: Arc<DgSpace>,
    physics: Physics,
    opts: SolverOpts,
    quad_degree: usize,
    nvl: usize,
    ndl: usize,
    nv: usize,
    nd: usize,
    entropy: bool,
    vdofs: Vec<Vec<Option<usize>>>,
    elems: Vec<ElemCache>,
    edges: Vec<EdgeCache>,
    newton_lu: LuCache,
    newton_dt: f64,
    picard_lu: LuCache,
}

impl EnergyStepper {
    pub fn new(vel: Arc<HDivSpace>, dg: Arc<DgSpace>, physics: Physics, opts: SolverOpts) -> Result<Self> {
        if !Arc::ptr_eq(vel.mesh(), dg.mesh()) {
            return Err(Error::SpaceMismatch("velocity and DG spaces live on different meshes".into()));
        }
        physics.validate()?;
        opts.validate()?;
        let r = dg.degree();
        if !vel.within_dg(r) {
            debug!(
                "velocity space of polynomial degree {} is not contained in DG degree {r}; hat(A_u) differs from u",
                vel.poly_degree()
            );
        }
        let quad_degree = opts.quad_degree.unwrap_or_else(|| default_quad_degree(r, vel.poly_degree(), &physics));
        let trule = triangle_rule(quad_degree)?;
        let erule = edge_rule(quad_degree)?;
        let mesh = vel.mesh().clone();
        let mut elems = Vec::with_capacity(mesh.num_elements());
        for k in 0..mesh.num_elements() {
            let (pts, w) = element_quadrature(&mesh, k, &trule);
            let mut c = ElemCache { w, phi: vec![], dphi: vec![], psi: vec![], dpsi: vec![], rot: vec![], pot: vec![] };
            for x in &pts {
                let (b, g) = dg.basis_with_grad(k, *x);
                c.phi.extend(b);
                c.dphi.extend(g);
                let (b, j) = vel.basis_with_jacobian(k, *x);
                c.psi.extend(b);
                c.dpsi.extend(j);
                c.rot.push(physics.rotation(*x));
                c.pot.push(physics.potential(*x));
            }
            elems.push(c);
        }
        let mut edges = Vec::with_capacity(mesh.interior_edges().len());
        for &e in mesh.interior_edges() {
            let edge = mesh.edge(e);
            let k = [edge.minus, edge.plus.unwrap()];
            let (pts, w) = edge_quadrature(&mesh, e, &erule);
            let mut ec = EdgeCache { k, n: edge.normal, w, phi: [vec![], vec![]], psi: [vec![], vec![]] };
            for x in &pts {
                for s in 0..2 {
                    ec.phi[s].extend(dg.basis(k[s], *x));
                    ec.psi[s].extend(vel.basis(k[s], *x));
                }
            }
            edges.push(ec);
        }
        let vdofs = (0..mesh.num_elements()).map(|k| vel.local_dofs(k).to_vec()).collect();
        Ok(Self {
            nvl: vel.local_dim(),
            ndl: dg.local_dim(),
            nv: vel.dim(),
            nd: dg.dim(),
            entropy: physics.has_entropy,
            vel,
            dg,
            physics,
            opts,
            quad_degree,
            vdofs,
            elems,
            edges,
            newton_lu: LuCache::default(),
            newton_dt: f64::NAN,
            picard_lu: LuCache::default(),
        })
    }

    pub fn quad_degree(&self) -> usize {
        self.quad_degree
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn opts(&self) -> &SolverOpts {
        &self.opts
    }

    pub fn num_unknowns(&self) -> usize {
        self.nv + self.nd * if self.entropy { 2 } else { 1 }
    }

    /// Energy evaluated with the quadrature used by the step.
    pub fn energy(&self, state: &SimState) -> Result<f64> {
        energy(&state.u, &state.d, state.s.as_ref(), &self.physics, self.quad_degree)
    }

    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<(SimState, StepStats)> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero (got {dt})")));
        }
        let x_old = self.pack(state)?;
        let mut x = x_old.clone();
        let stats = match self.opts.method {
            SolverMethod::NewtonFd => self.newton(&x_old, &mut x, dt)?,
            SolverMethod::Picard => match self.picard(&x_old, &mut x, dt) {
                Ok(s) => s,
                Err(e @ (Error::NonConvergence { .. } | Error::Singular(_) | Error::NonPositiveDensity { .. })) if self.opts.fallback => {
                    debug!("fixed-point iteration failed ({e}); retrying with Newton");
                    x.copy_from_slice(&x_old);
                    self.newton(&x_old, &mut x, dt)?
                }
                Err(e) => return Err(e),
            },
        };
        Ok((self.unpack(&x, state.t + dt), stats))
    }

    /// Scaled residual of the step from `old` to `new`; zero at a solution.
    pub fn residual(&self, old: &SimState, new: &SimState, dt: f64) -> Result<Vec<f64>> {
        let a = self.pack(old)?;
        let b = self.pack(new)?;
        self.residual_vec(&a, &b, dt)
    }

    fn pack(&self, s: &SimState) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(&s.u.space, &self.vel) || !Arc::ptr_eq(&s.d.space, &self.dg) {
            return Err(Error::SpaceMismatch("state does not belong to the stepper's spaces".into()));
        }
        let mut x = Vec::with_capacity(self.num_unknowns());
        x.extend_from_slice(&s.u.coeffs);
        x.extend_from_slice(&s.d.coeffs);
        match (&s.s, self.entropy) {
            (Some(e), true) => {
                if !Arc::ptr_eq(&e.space, &self.dg) {
                    return Err(Error::SpaceMismatch("entropy field does not belong to the density space".into()));
                }
                x.extend_from_slice(&e.coeffs);
            }
            (None, false) => {}
            (Some(_), false) => return Err(Error::InvalidArgument("entropy given for a barotropic law".into())),
            (None, true) => return Err(Error::InvalidArgument("entropy density required by the equation of state".into())),
        }
        Ok(x)
    }

    fn unpack(&self, x: &[f64], t: f64) -> SimState {
        let (nv, nd) = (self.nv, self.nd);
        SimState {
            t,
            u: HDivField { space: self.vel.clone(), coeffs: x[..nv].to_vec() },
            d: DgField { space: self.dg.clone(), coeffs: x[nv..nv + nd].to_vec() },
            s: self.entropy.then(|| DgField { space: self.dg.clone(), coeffs: x[nv + nd..nv + 2 * nd].to_vec() }),
        }
    }

    fn nloc(&self) -> usize {
        self.nvl + self.ndl * if self.entropy { 2 } else { 1 }
    }

    /// Global index of local unknown `p` of element `k`.
    fn col(&self, k: usize, p: usize) -> Option<usize> {
        let (nvl, ndl) = (self.nvl, self.ndl);
        if p < nvl {
            self.vdofs[k][p]
        } else if p < nvl + ndl {
            Some(self.nv + k * ndl + p - nvl)
        } else {
            Some(self.nv + self.nd + k * ndl + p - nvl - ndl)
        }
    }

    fn gather(&self, x: &[f64], k: usize) -> Vec<f64> {
        (0..self.nloc()).map(|p| self.col(k, p).map_or(0.0, |g| x[g])).collect()
    }

    fn scatter(&self, k: usize, res: &[f64], r: &mut [f64]) {
        for (p, v) in res.iter().enumerate() {
            if let Some(g) = self.col(k, p) {
                r[g] += v;
            }
        }
    }

    fn elem_eval(&self, k: usize, lo: &[f64], ln: &[f64], dt: f64, with_res: bool) -> Result<(Proj, Option<Vec<f64>>)> {
        let c = &self.elems[k];
        let (nvl, ndl) = (self.nvl, self.ndl);
        let ent = self.entropy;
        let eps = self.opts.eps_dg;
        let nq = c.w.len();
        let mut proj = Proj { w: vec![[0.0; 2]; ndl], f: vec![0.0; ndl], g: vec![0.0; ndl] };
        // Per point: m_new - m_old, u*, grad u*, D*, S*.
        let mut qp: Vec<(V2, V2, [V2; 2], f64, f64)> = Vec::with_capacity(if with_res { nq } else { 0 });
        for q in 0..nq {
            let psi = &c.psi[q * nvl..(q + 1) * nvl];
            let phi = &c.phi[q * ndl..(q + 1) * ndl];
            let (mut uo, mut un) = ([0.0; 2], [0.0; 2]);
            for b in 0..nvl {
                for i in 0..2 {
                    uo[i] += lo[b] * psi[b][i];
                    un[i] += ln[b] * psi[b][i];
                }
            }
            let (mut d_o, mut d_n, mut s_o, mut s_n) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..ndl {
                d_o += lo[nvl + a] * phi[a];
                d_n += ln[nvl + a] * phi[a];
                if ent {
                    s_o += lo[nvl + ndl + a] * phi[a];
                    s_n += ln[nvl + ndl + a] * phi[a];
                }
            }
            for v in [d_o, d_n] {
                if !(v > 0.0) {
                    return Err(Error::NonPositiveDensity { element: k, value: v });
                }
            }
            let rot = c.rot[q];
            let mo = [d_o * (uo[0] + rot[0]), d_o * (uo[1] + rot[1])];
            let mn = [d_n * (un[0] + rot[0]), d_n * (un[1] + rot[1])];
            let um = [0.5 * (uo[0] + un[0]), 0.5 * (uo[1] + un[1])];
            let (fv, gv) = if ent {
                let (f, g) = self.physics.discrete_grads_baroclinic(d_o, d_n, s_o, s_n, eps)?;
                (f, -g)
            } else {
                (self.physics.discrete_grad_f(d_o, d_n, eps)?, 0.0)
            };
            let fq = 0.5 * dot(uo, un) + dot(um, rot) - fv - c.pot[q];
            let w = c.w[q];
            for a in 0..ndl {
                let wp = w * phi[a];
                proj.w[a][0] += wp * 0.5 * (mo[0] + mn[0]);
                proj.w[a][1] += wp * 0.5 * (mo[1] + mn[1]);
                proj.f[a] += wp * fq;
                proj.g[a] += wp * gv;
            }
            if with_res {
                let dpsi = &c.dpsi[q * nvl..(q + 1) * nvl];
                let mut jm = [[0.0; 2]; 2];
                for b in 0..nvl {
                    let cb = 0.5 * (lo[b] + ln[b]);
                    for i in 0..2 {
                        for j in 0..2 {
                            jm[i][j] += cb * dpsi[b][i][j];
                        }
                    }
                }
                qp.push(([mn[0] - mo[0], mn[1] - mo[1]], um, jm, 0.5 * (d_o + d_n), 0.5 * (s_o + s_n)));
            }
        }
        if !with_res {
            return Ok((proj, None));
        }
        let mut res = vec![0.0; self.nloc()];
        for (q, &(dm_, um, jm, dmid, smid)) in qp.iter().enumerate() {
            let psi = &c.psi[q * nvl..(q + 1) * nvl];
            let dpsi = &c.dpsi[q * nvl..(q + 1) * nvl];
            let phi = &c.phi[q * ndl..(q + 1) * ndl];
            let dphi = &c.dphi[q * ndl..(q + 1) * ndl];
            let (mut wq, mut gf, mut gg) = ([0.0; 2], [0.0; 2], [0.0; 2]);
            for a in 0..ndl {
                for i in 0..2 {
                    wq[i] += proj.w[a][i] * phi[a];
                    gf[i] += proj.f[a] * dphi[a][i];
                    gg[i] += proj.g[a] * dphi[a][i];
                }
            }
            let w = c.w[q];
            for b in 0..nvl {
                let p = psi[b];
                let jp = dpsi[b];
                let mut adv = 0.0;
                for i in 0..2 {
                    adv += wq[i] * (dot(jm[i], p) - dot(jp[i], um));
                }
                let force = -dot(p, gf) * dmid - dot(p, gg) * smid;
                res[b] += w * (dot(dm_, p) + dt * (adv + force));
            }
            for a in 0..ndl {
                let ug = dt * w * dot(um, dphi[a]);
                res[nvl + a] -= ug * dmid;
                if ent {
                    res[nvl + ndl + a] -= ug * smid;
                }
            }
        }
        for p in nvl..self.nloc() {
            res[p] += ln[p] - lo[p];
        }
        Ok((proj, Some(res)))
    }

    /// Edge contributions to both adjacent elements from midpoint coefficients.
    fn edge_eval(&self, ec: &EdgeCache, mid: [&[f64]; 2], proj: [&Proj; 2], dt: f64) -> [Vec<f64>; 2] {
        let (nvl, ndl) = (self.nvl, self.ndl);
        let ent = self.entropy;
        let nl = self.nloc();
        let mut out = [vec![0.0; nl], vec![0.0; nl]];
        let n = ec.n;
        for (q, &w) in ec.w.iter().enumerate() {
            let mut u = [[0.0; 2]; 2];
            let mut wb = [[0.0; 2]; 2];
            let (mut d, mut s, mut f, mut g) = ([0.0; 2], [0.0; 2], [0.0; 2], [0.0; 2]);
            for side in 0..2 {
                let psi = &ec.psi[side][q * nvl..(q + 1) * nvl];
                let phi = &ec.phi[side][q * ndl..(q + 1) * ndl];
                let m = mid[side];
                for b in 0..nvl {
                    u[side][0] += m[b] * psi[b][0];
                    u[side][1] += m[b] * psi[b][1];
                }
                for a in 0..ndl {
                    d[side] += m[nvl + a] * phi[a];
                    if ent {
                        s[side] += m[nvl + ndl + a] * phi[a];
                    }
                    wb[side][0] += proj[side].w[a][0] * phi[a];
                    wb[side][1] += proj[side].w[a][1] * phi[a];
                    f[side] += proj[side].f[a] * phi[a];
                    g[side] += proj[side].g[a] * phi[a];
                }
            }
            let un = 0.5 * (dot(u[0], n) + dot(u[1], n));
            let wavg = [0.5 * (wb[0][0] + wb[1][0]), 0.5 * (wb[0][1] + wb[1][1])];
            let ju = [u[0][0] - u[1][0], u[0][1] - u[1][1]];
            let davg = 0.5 * (d[0] + d[1]);
            let savg = 0.5 * (s[0] + s[1]);
            let t1 = (f[0] - f[1]) * davg + (g[0] - g[1]) * savg - dot(ju, wavg);
            let tw = dt * w;
            for side in 0..2 {
                let sign = if side == 0 { 1.0 } else { -1.0 };
                let psi = &ec.psi[side][q * nvl..(q + 1) * nvl];
                let phi = &ec.phi[side][q * ndl..(q + 1) * ndl];
                let o = &mut out[side];
                for b in 0..nvl {
                    o[b] += tw * (0.5 * dot(psi[b], n) * t1 + sign * un * dot(psi[b], wavg));
                }
                for a in 0..ndl {
                    o[nvl + a] += tw * sign * un * phi[a] * davg;
                    if ent {
                        o[nvl + ndl + a] += tw * sign * un * phi[a] * savg;
                    }
                }
            }
        }
        out
    }

    fn mid(lo: &[f64], ln: &[f64]) -> Vec<f64> {
        lo.iter().zip(ln).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    fn residual_vec(&self, x_old: &[f64], x: &[f64], dt: f64) -> Result<Vec<f64>> {
        let ne = self.elems.len();
        let mut r = vec![0.0; self.num_unknowns()];
        let mut projs = Vec::with_capacity(ne);
        let mut mids = Vec::with_capacity(ne);
        for k in 0..ne {
            let lo = self.gather(x_old, k);
            let ln = self.gather(x, k);
            let (p, res) = self.elem_eval(k, &lo, &ln, dt, true)?;
            self.scatter(k, &res.unwrap(), &mut r);
            projs.push(p);
            mids.push(Self::mid(&lo, &ln));
        }
        for ec in &self.edges {
            let [a, b] = ec.k;
            let out = self.edge_eval(ec, [&mids[a], &mids[b]], [&projs[a], &projs[b]], dt);
            self.scatter(a, &out[0], &mut r);
            self.scatter(b, &out[1], &mut r);
        }
        Ok(r)
    }

    /// Forward-difference Jacobian assembled from local perturbations. Every
    /// structurally coupled entry is emitted, including zeros, so the sparsity
    /// pattern does not depend on the state.
    fn jacobian(&self, x_old: &[f64], x: &[f64], dt: f64) -> Result<Vec<(usize, usize, f64)>> {
        let ne = self.elems.len();
        let nl = self.nloc();
        let lo: Vec<Vec<f64>> = (0..ne).map(|k| self.gather(x_old, k)).collect();
        let ln: Vec<Vec<f64>> = (0..ne).map(|k| self.gather(x, k)).collect();
        let mut projs = Vec::with_capacity(ne);
        let mut trips = Vec::new();
        let step = |v: f64| 1e-7 * v.abs().max(1.0);
        for k in 0..ne {
            let (p, base) = self.elem_eval(k, &lo[k], &ln[k], dt, true)?;
            let base = base.unwrap();
            projs.push(p);
            for c in 0..nl {
                let Some(gc) = self.col(k, c) else { continue };
                let h = step(x[gc]);
                let mut pert = ln[k].clone();
                pert[c] += h;
                let (_, res) = self.elem_eval(k, &lo[k], &pert, dt, true)?;
                let res = res.unwrap();
                for row in 0..nl {
                    if let Some(gr) = self.col(k, row) {
                        trips.push((gr, gc, (res[row] - base[row]) / h));
                    }
                }
            }
        }
        let mids: Vec<Vec<f64>> = (0..ne).map(|k| Self::mid(&lo[k], &ln[k])).collect();
        for ec in &self.edges {
            let ks = ec.k;
            let base = self.edge_eval(ec, [&mids[ks[0]], &mids[ks[1]]], [&projs[ks[0]], &projs[ks[1]]], dt);
            for side in 0..2 {
                let k = ks[side];
                for c in 0..nl {
                    let Some(gc) = self.col(k, c) else { continue };
                    let h = step(x[gc]);
                    let mut pert = ln[k].clone();
                    pert[c] += h;
                    let (p2, _) = self.elem_eval(k, &lo[k], &pert, dt, false)?;
                    let m2 = Self::mid(&lo[k], &pert);
                    let mut m = [&mids[ks[0]][..], &mids[ks[1]][..]];
                    let mut pr = [&projs[ks[0]], &projs[ks[1]]];
                    m[side] = &m2;
                    pr[side] = &p2;
                    let out = self.edge_eval(ec, m, pr, dt);
                    for s2 in 0..2 {
                        for row in 0..nl {
                            if let Some(gr) = self.col(ks[s2], row) {
                                trips.push((gr, gc, (out[s2][row] - base[s2][row]) / h));
                            }
                        }
                    }
                }
            }
        }
        Ok(trips)
    }

    fn tolerance(&self, r0: f64) -> f64 {
        self.opts.abs_tol.max(self.opts.rel_tol * r0)
    }

    fn newton(&mut self, x_old: &[f64], x: &mut Vec<f64>, dt: f64) -> Result<StepStats> {
        let n = self.num_unknowns();
        let mut r = self.residual_vec(x_old, x, dt)?;
        let mut rn = inf_norm(&r);
        let tol = self.tolerance(rn);
        let mut stale = !self.newton_lu.is_factored() || self.newton_dt != dt;
        let (mut its, mut builds, mut bad) = (0, 0, 0);
        while rn > tol {
            if its >= self.opts.max_iter {
                return Err(Error::NonConvergence { iterations: its, residual: rn });
            }
            let mut fresh = false;
            if stale {
                let j = self.jacobian(x_old, x, dt)?;
                self.newton_lu.factor(n, &j)?;
                self.newton_dt = dt;
                builds += 1;
                stale = false;
                fresh = true;
            }
            let dx = self.newton_lu.solve(&r)?;
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - b).collect();
            its += 1;
            match self.residual_vec(x_old, &trial, dt) {
                Ok(r2) => {
                    let n2 = inf_norm(&r2);
                    let ratio = n2 / rn;
                    if ratio >= 1.0 && !fresh {
                        stale = true;
                        continue;
                    }
                    if ratio >= 1.0 {
                        bad += 1;
                        if bad >= 3 {
                            return Err(Error::NonConvergence { iterations: its, residual: n2 });
                        }
                    }
                    if ratio > 0.1 && !fresh {
                        stale = true;
                    }
                    *x = trial;
                    r = r2;
                    rn = n2;
                }
                Err(Error::NonPositiveDensity { .. }) if !fresh => stale = true,
                Err(e) => return Err(e),
            }
        }
        debug!("newton: {its} iterations, {builds} jacobian builds, residual {rn:.3e}");
        Ok(StepStats { iterations: its, residual: rn, method: SolverMethod::NewtonFd, jacobian_builds: builds })
    }

    /// Velocity mass matrix weighted by the density of `x`.
    fn weighted_mass(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let (nvl, ndl) = (self.nvl, self.ndl);
        let mut t = Vec::new();
        for (k, c) in self.elems.iter().enumerate() {
            let l = self.gather(x, k);
            let mut m = vec![0.0; nvl * nvl];
            for (q, &w) in c.w.iter().enumerate() {
                let psi = &c.psi[q * nvl..(q + 1) * nvl];
                let phi = &c.phi[q * ndl..(q + 1) * ndl];
                let d: f64 = (0..ndl).map(|a| l[nvl + a] * phi[a]).sum();
                for a in 0..nvl {
                    for b in 0..nvl {
                        m[a * nvl + b] += w * d * dot(psi[a], psi[b]);
                    }
                }
            }
            for a in 0..nvl {
                let Some(ga) = self.vdofs[k][a] else { continue };
                for b in 0..nvl {
                    if let Some(gb) = self.vdofs[k][b] {
                        t.push((ga, gb, m[a * nvl + b]));
                    }
                }
            }
        }
        t
    }

    fn picard(&mut self, x_old: &[f64], x: &mut [f64], dt: f64) -> Result<StepStats> {
        let nv = self.nv;
        let mut r = self.residual_vec(x_old, x, dt)?;
        let mut rn = inf_norm(&r);
        let tol = self.tolerance(rn);
        let (mut its, mut slow) = (0, 0);
        while rn > tol {
            if its >= self.opts.max_iter {
                return Err(Error::NonConvergence { iterations: its, residual: rn });
            }
            if nv > 0 {
                let m = self.weighted_mass(x);
                self.picard_lu.factor(nv, &m)?;
                let dv = self.picard_lu.solve(&r[..nv])?;
                for (a, b) in x[..nv].iter_mut().zip(&dv) {
                    *a -= b;
                }
            }
            for (a, b) in x[nv..].iter_mut().zip(&r[nv..]) {
                *a -= b;
            }
            its += 1;
            r = self.residual_vec(x_old, x, dt)?;
            let n2 = inf_norm(&r);
            if n2 > 0.9 * rn {
                slow += 1;
                if slow >= 3 {
                    return Err(Error::NonConvergence { iterations: its, residual: n2 });
                }
            } else {
                slow = 0;
            }
            rn = n2;
        }
        debug!("picard: {its} iterations, residual {rn:.3e}");
        Ok(StepStats { iterations: its, residual: rn, method: SolverMethod::Picard, jacobian_builds: its })
    }
}

/// One barotropic step from `(u, rho)`.
pub fn step_energy_preserving(
    u: &HDivField,
    rho: &DgField,
    dt: f64,
    physics: &Physics,
    opts: &SolverOpts,
) -> Result<(HDivField, DgField, StepStats)> {
    if physics.has_entropy {
        return Err(Error::InvalidArgument("equation of state carries entropy; use the baroclinic step".into()));
    }
    let mut st = EnergyStepper::new(u.space.clone(), rho.space.clone(), *physics, opts.clone())?;
    let state = SimState { t: 0.0, u: u.clone(), d: rho.clone(), s: None };
    let (next, stats) = st.step(&state, dt)?;
    Ok((next.u, next.d, stats))
}

/// One step of the variant carrying an entropy density.
pub fn step_energy_preserving_baroclinic(
    u: &HDivField,
    rho: &DgField,
    s: &DgField,
    dt: f64,
    physics: &Physics,
    opts: &SolverOpts,
) -> Result<(HDivField, DgField, DgField, StepStats)> {
    let mut physics = *physics;
    physics.has_entropy = true;
    let mut st = EnergyStepper::new(u.space.clone(), rho.space.clone(), physics, opts.clone())?;
    let state = SimState { t: 0.0, u: u.clone(), d: rho.clone(), s: Some(s.clone()) };
    let (next, stats) = st.step(&state, dt)?;
    Ok((next.u, next.d, next.s.unwrap(), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Mesh, Rect};
    use crate::spaces::HDivFamily;

    fn setup(h: f64, r: usize) -> (Arc<HDivSpace>, Arc<DgSpace>) {
        let m = Arc::new(Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), h).unwrap());
        let vel = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, r).unwrap());
        let dg = Arc::new(DgSpace::new(m, r).unwrap());
        (vel, dg)
    }

    fn sw_state(vel: &Arc<HDivSpace>, dg: &Arc<DgSpace>) -> SimState {
        let pi = std::f64::consts::PI;
        SimState::from_functions(
            vel,
            dg,
            |p| [0.1 * (pi * p[1] / 2.0).cos(), 0.05 * p[0]],
            |p| 2.0 + (pi * p[0] / 2.0).sin() * (pi * p[1] / 2.0).sin(),
            None,
            8,
        )
        .unwrap()
    }

    #[test]
    fn shallow_water_step_conserves_energy_and_mass() {
        for method in [SolverMethod::NewtonFd, SolverMethod::Picard] {
            let (vel, dg) = setup(0.5, 1);
            let opts = SolverOpts { method, ..SolverOpts::default() };
            let mut st = EnergyStepper::new(vel.clone(), dg.clone(), Physics::shallow_water(1.0), opts).unwrap();
            let mut s = sw_state(&vel, &dg);
            let e0 = st.energy(&s).unwrap();
            let m0 = s.mass();
            for _ in 0..3 {
                let (n, stats) = st.step(&s, 0.05).unwrap();
                assert!(stats.residual <= 1e-12);
                s = n;
            }
            let e1 = st.energy(&s).unwrap();
            assert!(((e1 - e0) / e0).abs() < 1e-11, "{method:?}: {e0} -> {e1}");
            assert!((s.mass() - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_jacobian_matches_residual_change() {
        let (vel, dg) = setup(1.0, 1);
        let st = EnergyStepper::new(vel.clone(), dg.clone(), Physics::shallow_water(1.0), SolverOpts::newton()).unwrap();
        let s = sw_state(&vel, &dg);
        let x0 = st.pack(&s).unwrap();
        let mut x = x0.clone();
        for (i, v) in x.iter_mut().enumerate() {
            *v += 1e-3 * ((i as f64) * 0.7).sin();
        }
        let j = st.jacobian(&x0, &x, 0.1).unwrap();
        let n = st.num_unknowns();
        let dir: Vec<f64> = (0..n).map(|i| ((i as f64) * 1.3).cos()).collect();
        let mut jd = vec![0.0; n];
        for &(r, c, v) in &j {
            jd[r] += v * dir[c];
        }
        let t = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a - t * b).collect();
        let rp = st.residual_vec(&x0, &xp, 0.1).unwrap();
        let rm = st.residual_vec(&x0, &xm, 0.1).unwrap();
        for i in 0..n {
            let fd = (rp[i] - rm[i]) / (2.0 * t);
            assert!((fd - jd[i]).abs() < 1e-5 * (1.0 + fd.abs()), "row {i}: {fd} vs {}", jd[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (vel, dg) = setup(1.0, 0);
        let mut st = EnergyStepper::new(vel.clone(), dg.clone(), Physics::shallow_water(0.0), SolverOpts::default()).unwrap();
        let s = sw_state(&vel, &dg);
        assert!(matches!(st.step(&s, 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(st.step(&s, f64::NAN), Err(Error::InvalidArgument(_))));
        let mut bad = s.clone();
        bad.d = dg.constant(-1.0);
        assert!(matches!(st.step(&bad, 0.1), Err(Error::NonPositiveDensity { .. })));
        let (vel2, dg2) = setup(1.0, 0);
        let other = sw_state(&vel2, &dg2);
        assert!(matches!(st.step(&other, 0.1), Err(Error::SpaceMismatch(_))));
    }
}

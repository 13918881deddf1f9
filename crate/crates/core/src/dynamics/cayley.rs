//! Variational time stepping on the operator representation, using the
//! Cayley map as the local group chart. Dense linear algebra throughout, so
//! it is limited to small meshes and meant for verification.
//!
//! The state at step `k` is `(A_k, D_k)` with `A_k = sum_i a_i A_{psi_i}` over
//! the velocity basis. One step first advances the density,
//! `(I + dt/2 A_k^T) D_{k+1} = (I - dt/2 A_k^T) D_k`, and then solves the
//! discrete Euler-Poincare equation for `A_{k+1}`, tested against every
//! `B_j = A_{psi_j}`.

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::physics::Physics;
use super::SolverOpts;
use crate::error::{Error, Result};
use crate::operators::{assemble_au, SparseOperator};
use crate::quadrature::triangle_rule;
use crate::spaces::{element_quadrature, DgField, DgSpace, HDivField, HDivSpace};

/// Largest DG dimension accepted by the stepper.
pub const MAX_DG_DOFS: usize = 512;

/// `tau(A) = (I - A/2)^{-1} (I + A/2)`.
pub fn cayley_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lu = (&id - a * 0.5).lu();
    let out = lu.solve(&(&id + a * 0.5)).ok_or_else(|| Error::Singular("I - A/2 is singular".into()))?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("I - A/2 is numerically singular".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CayleyState {
    pub t: f64,
    /// Coordinates of `A` in the basis `A_{psi_i}`.
    pub a: Vec<f64>,
    pub d: DgField,
}

struct Elem {
    w: Vec<f64>,
    phi: Vec<f64>,
    rot: Vec<[f64; 2]>,
    pot: Vec<f64>,
}

/// Quantities of `(A, D)` entering the pairings.
struct Eval {
    /// `hat(A)` components.
    ax: [Vec<f64>; 2],
    /// `I(D (hat(A) + R))`.
    m: [Vec<f64>; 2],
    /// `A^T m`.
    atm: [Vec<f64>; 2],
}

pub struct CayleyStepper {
    vel: Arc<HDivSpace>,
    dg: Arc<DgSpace>,
    physics: Physics,
    opts: SolverOpts,
    /// Entries of `B_j`.
    basis_ops: Vec<Vec<(usize, usize, f64)>>,
    x: [Vec<f64>; 2],
    elems: Vec<Elem>,
    quad_degree: usize,
}

impl CayleyStepper {
    pub fn new(vel: Arc<HDivSpace>, dg: Arc<DgSpace>, physics: Physics, opts: SolverOpts) -> Result<Self> {
        if !Arc::ptr_eq(vel.mesh(), dg.mesh()) {
            return Err(Error::SpaceMismatch("velocity and DG spaces live on different meshes".into()));
        }
        if dg.dim() > MAX_DG_DOFS {
            return Err(Error::TooLarge { dofs: dg.dim(), limit: MAX_DG_DOFS });
        }
        if physics.has_entropy {
            return Err(Error::InvalidArgument("the operator-level stepper supports barotropic laws only".into()));
        }
        physics.validate()?;
        opts.validate()?;
        let r = dg.degree();
        let quad_degree = opts.quad_degree.unwrap_or(match physics.eos {
            super::Eos::ShallowWater => 3 * r + 2,
            super::Eos::PerfectGas { .. } => 3 * r + 6,
        });
        let mut basis_ops = Vec::with_capacity(vel.dim());
        for j in 0..vel.dim() {
            basis_ops.push(assemble_au(&dg, &vel.unit(j))?.entries());
        }
        let xy = dg.coordinates();
        let rule = triangle_rule(quad_degree)?;
        let mesh = dg.mesh();
        let elems = (0..mesh.num_elements())
            .map(|k| {
                let (pts, w) = element_quadrature(mesh, k, &rule);
                let mut e = Elem { w, phi: vec![], rot: vec![], pot: vec![] };
                for p in &pts {
                    e.phi.extend(dg.basis(k, *p));
                    e.rot.push(physics.rotation(*p));
                    e.pot.push(physics.potential(*p));
                }
                e
            })
            .collect();
        Ok(Self { vel, dg, physics, opts, basis_ops, x: [xy.x, xy.y], elems, quad_degree })
    }

    pub fn dg(&self) -> &Arc<DgSpace> {
        &self.dg
    }

    /// Operator coordinates of a physical velocity, from `u_h = -hat(A)`.
    pub fn state_from_velocity(&self, u: &HDivField, d: &DgField) -> Result<CayleyState> {
        if !Arc::ptr_eq(&u.space, &self.vel) || !Arc::ptr_eq(&d.space, &self.dg) {
            return Err(Error::SpaceMismatch("fields do not belong to the stepper's spaces".into()));
        }
        Ok(CayleyState { t: 0.0, a: u.coeffs.iter().map(|c| -c).collect(), d: d.clone() })
    }

    /// Velocity `u_h` whose operator is `-A`.
    pub fn velocity(&self, s: &CayleyState) -> HDivField {
        HDivField { space: self.vel.clone(), coeffs: s.a.iter().map(|c| -c).collect() }
    }

    pub fn operator(&self, a: &[f64]) -> Result<SparseOperator> {
        assemble_au(&self.dg, &HDivField { space: self.vel.clone(), coeffs: a.to_vec() })
    }

    /// `int 1/2 D |hat(A)|^2 + D e(D) + D Phi`.
    pub fn energy(&self, s: &CayleyState) -> Result<f64> {
        let a = self.operator(&s.a)?;
        let ax = [a.apply(&self.x[0]), a.apply(&self.x[1])];
        let n = self.dg.local_dim();
        let mut total = 0.0;
        for (k, e) in self.elems.iter().enumerate() {
            for (q, &w) in e.w.iter().enumerate() {
                let phi = &e.phi[q * n..(q + 1) * n];
                let ev = |c: &[f64]| (0..n).map(|i| c[k * n + i] * phi[i]).sum::<f64>();
                let d = ev(&s.d.coeffs);
                if !(d > 0.0) {
                    return Err(Error::NonPositiveDensity { element: k, value: d });
                }
                let (hx, hy) = (ev(&ax[0]), ev(&ax[1]));
                total += w * (0.5 * d * (hx * hx + hy * hy) + self.physics.energy_density(d, 0.0) + d * e.pot[q]);
            }
        }
        Ok(total)
    }

    /// Density at the next step for operator coordinates `a`.
    pub fn advance_density(&self, a: &[f64], d: &DgField, dt: f64) -> Result<DgField> {
        let at = self.operator(a)?.to_dense().transpose();
        let n = at.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let lhs = &id + &at * (0.5 * dt);
        let rhs = (&id - &at * (0.5 * dt)) * DVector::from_column_slice(&d.coeffs);
        let sol = lhs.lu().solve(&rhs).ok_or(Error::SingularDensityUpdate)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularDensityUpdate);
        }
        Ok(DgField { space: self.dg.clone(), coeffs: sol.as_slice().to_vec() })
    }

    fn evaluate(&self, a: &SparseOperator, d: &[f64]) -> Result<(Eval, Vec<f64>)> {
        let n = self.dg.local_dim();
        let ax = [a.apply(&self.x[0]), a.apply(&self.x[1])];
        let nd = self.dg.dim();
        let mut m = [vec![0.0; nd], vec![0.0; nd]];
        let mut f = vec![0.0; nd];
        for (k, e) in self.elems.iter().enumerate() {
            for (q, &w) in e.w.iter().enumerate() {
                let phi = &e.phi[q * n..(q + 1) * n];
                let ev = |c: &[f64]| (0..n).map(|i| c[k * n + i] * phi[i]).sum::<f64>();
                let dq = ev(d);
                if !(dq > 0.0) {
                    return Err(Error::NonPositiveDensity { element: k, value: dq });
                }
                let h = [ev(&ax[0]), ev(&ax[1])];
                let r = e.rot[q];
                let fq = 0.5 * (h[0] * h[0] + h[1] * h[1]) + h[0] * r[0] + h[1] * r[1]
                    - self.physics.energy_density_d(dq, 0.0)
                    - e.pot[q];
                for i in 0..n {
                    let wp = w * phi[i];
                    m[0][k * n + i] += wp * dq * (h[0] + r[0]);
                    m[1][k * n + i] += wp * dq * (h[1] + r[1]);
                    f[k * n + i] += wp * fq;
                }
            }
        }
        let atm = [a.apply_transpose(&m[0]), a.apply_transpose(&m[1])];
        Ok((Eval { ax, m, atm }, f))
    }

    /// Contribution of the previous level, scaled by `dt`.
    fn old_part(&self, ev: &Eval, dt: f64) -> Vec<f64> {
        self.basis_ops
            .iter()
            .map(|ent| {
                let mut s = 0.0;
                for &(i, j, v) in ent {
                    for c in 0..2 {
                        s += v
                            * (-ev.m[c][i] * self.x[c][j]
                                + 0.5 * dt * (ev.atm[c][i] * self.x[c][j] - ev.m[c][i] * ev.ax[c][j])
                                + 0.25 * dt * dt * ev.atm[c][i] * ev.ax[c][j]);
                    }
                }
                s
            })
            .collect()
    }

    fn new_part(&self, ev: &Eval, f: &[f64], d: &[f64], dt: f64) -> Vec<f64> {
        self.basis_ops
            .iter()
            .map(|ent| {
                let mut s = 0.0;
                for &(i, j, v) in ent {
                    for c in 0..2 {
                        s += v
                            * (ev.m[c][i] * self.x[c][j]
                                + 0.5 * dt * (ev.atm[c][i] * self.x[c][j] - ev.m[c][i] * ev.ax[c][j])
                                - 0.25 * dt * dt * ev.atm[c][i] * ev.ax[c][j]);
                    }
                    s += dt * v * d[i] * f[j];
                }
                s
            })
            .collect()
    }

    fn residual(&self, old: &[f64], a_new: &SparseOperator, d_new: &[f64], dt: f64) -> Result<Vec<f64>> {
        let (ev, f) = self.evaluate(a_new, d_new)?;
        Ok(self.new_part(&ev, &f, d_new, dt).iter().zip(old).map(|(a, b)| a + b).collect())
    }

    /// Residual of the momentum equation for a candidate step, scaled by `dt`.
    pub fn step_residual(&self, s: &CayleyState, next: &CayleyState, dt: f64) -> Result<Vec<f64>> {
        let (ev, _) = self.evaluate(&self.operator(&s.a)?, &s.d.coeffs)?;
        let old = self.old_part(&ev, dt);
        self.residual(&old, &self.operator(&next.a)?, &next.d.coeffs, dt)
    }

    pub fn step(&self, s: &CayleyState, dt: f64) -> Result<(CayleyState, usize)> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::InvalidArgument(format!("time step must be finite and nonzero (got {dt})")));
        }
        if s.a.len() != self.vel.dim() {
            return Err(Error::DimensionMismatch { expected: self.vel.dim(), got: s.a.len() });
        }
        let d_new = self.advance_density(&s.a, &s.d, dt)?;
        let a_old = self.operator(&s.a)?;
        let (ev, _) = self.evaluate(&a_old, &s.d.coeffs)?;
        let old = self.old_part(&ev, dt);
        let nv = s.a.len();
        let mut a = s.a.clone();
        let mut op = a_old;
        let mut r = self.residual(&old, &op, &d_new.coeffs, dt)?;
        let mut rn = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = self.opts.abs_tol.max(self.opts.rel_tol * rn);
        let mut lu = None;
        let mut its = 0;
        while rn > tol {
            if its >= self.opts.max_iter {
                return Err(Error::NonConvergence { iterations: its, residual: rn });
            }
            if lu.is_none() {
                lu = Some(self.jacobian(&old, &op, &r, &d_new.coeffs, dt)?.lu());
            }
            let dx = lu
                .as_ref()
                .unwrap()
                .solve(&DVector::from_column_slice(&r))
                .ok_or_else(|| Error::Singular("momentum linearization is singular".into()))?;
            for i in 0..nv {
                a[i] -= dx[i];
            }
            op = self.operator(&a)?;
            its += 1;
            let r2 = self.residual(&old, &op, &d_new.coeffs, dt)?;
            let n2 = r2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if n2 > 0.3 * rn {
                lu = None;
            }
            r = r2;
            rn = n2;
        }
        debug!("cayley step: {its} iterations, residual {rn:.3e}");
        Ok((CayleyState { t: s.t + dt, a, d: d_new }, its))
    }

    fn jacobian(&self, old: &[f64], op: &SparseOperator, r0: &[f64], d: &[f64], dt: f64) -> Result<DMatrix<f64>> {
        let nv = r0.len();
        let mut j = DMatrix::<f64>::zeros(nv, nv);
        let h = 1e-7;
        for c in 0..nv {
            let bc = self.operator(&unit(nv, c, h))?;
            let r = self.residual(old, &op.add(&bc)?, d, dt)?;
            for row in 0..nv {
                j[(row, c)] = (r[row] - r0[row]) / h;
            }
        }
        Ok(j)
    }

    pub fn quad_degree(&self) -> usize {
        self.quad_degree
    }
}

fn unit(n: usize, i: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = v;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Mesh, Rect};
    use crate::spaces::HDivFamily;
    use rand::{Rng, SeedableRng};

    #[test]
    fn cayley_inverse_pair() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::<f64>::from_fn(6, 6, |_, _| 0.2 * (rng.gen::<f64>() - 0.5));
        let p = cayley_dense(&a).unwrap() * cayley_dense(&(-&a)).unwrap();
        assert!((p - DMatrix::<f64>::identity(6, 6)).amax() < 1e-14);
        assert!(cayley_dense(&(DMatrix::<f64>::identity(3, 3) * 2.0)).is_err());
    }

    #[test]
    fn stationary_state_is_fixed() {
        let m = Arc::new(Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 0.5).unwrap());
        let vel = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 0).unwrap());
        let dg = Arc::new(DgSpace::new(m, 0).unwrap());
        let st = CayleyStepper::new(vel.clone(), dg.clone(), Physics::shallow_water(0.0), SolverOpts::default()).unwrap();
        let s = CayleyState { t: 0.0, a: vec![0.0; vel.dim()], d: dg.constant(1.5) };
        let (n, its) = st.step(&s, 0.1).unwrap();
        assert_eq!(its, 0);
        assert!(n.a.iter().all(|v| v.abs() < 1e-14));
        assert!(n.d.coeffs.iter().zip(&s.d.coeffs).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn rejects_large_meshes() {
        let m = Arc::new(Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 1.0 / 32.0).unwrap());
        let vel = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 0).unwrap());
        let dg = Arc::new(DgSpace::new(m, 0).unwrap());
        assert!(matches!(
            CayleyStepper::new(vel, dg, Physics::shallow_water(0.0), SolverOpts::default()),
            Err(Error::TooLarge { .. })
        ));
    }
}

//! Property checks over every module on small fixed meshes.
//!
//! Each check compares a quantity against an oracle computed along a
//! different route (direct quadrature, a closed-form formula, or an algebraic
//! identity) and reports the worst discrepancy.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenarios::{rt_density, rt_entropy, rt_velocity, sw_density};
use crate::dynamics::{CayleyStepper, EnergyStepper, Physics, Potential, SimState, SolverOpts};
use crate::error::Result;
use crate::mesh::{Mesh, Rect};
use crate::operators::{assemble_au, assemble_transport, commutator, eval_a_h, eval_b_h, hat_map, SparseOperator};
use crate::quadrature::{edge_rule, triangle_exactness_error, triangle_rule, MAX_TRIANGLE_DEGREE};
use crate::spaces::{
    edge_quadrature, element_quadrature, AnalyticVelocity, DgSpace, DgVectorField, Difference, HDivFamily, HDivField,
    HDivSpace, VelocityField,
};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Worst discrepancy, for checks that measure one.
    pub error: Option<f64>,
}

/// What a check function reports.
pub struct Outcome {
    passed: bool,
    detail: String,
    error: Option<f64>,
}

impl Outcome {
    fn flag(passed: bool, detail: String) -> Self {
        Self { passed, detail, error: None }
    }
}

pub struct Check {
    pub name: &'static str,
    pub about: &'static str,
    run: fn() -> Result<Outcome>,
}

impl Check {
    pub fn run(&self) -> CheckResult {
        match (self.run)() {
            Ok(o) => CheckResult { name: self.name, passed: o.passed, detail: o.detail, error: o.error },
            Err(e) => CheckResult { name: self.name, passed: false, detail: format!("error: {e}"), error: None },
        }
    }
}

/// All checks, in reporting order.
pub fn checks() -> Vec<Check> {
    macro_rules! c {
        ($name:literal, $about:literal, $f:ident) => {
            Check { name: $name, about: $about, run: $f }
        };
    }
    vec![
        c!("quadrature", "triangle and edge rules integrate monomials exactly", quadrature),
        c!("quadrature-fault", "a perturbed quadrature weight is detected", quadrature_fault),
        c!("mesh", "areas, Euler characteristic and edge orientation", mesh),
        c!("a-one-zero", "A_u 1 = 0", a_one_zero),
        c!("skew-div", "<A_u f, g> + <f, A_u g> + <f, (div u) g> = 0 on all basis pairs", skew_div),
        c!("r0-stencil", "lowest-order entries of A_u match the neighbor-flux formulas", r0_stencil),
        c!("hat-interpolant", "hat(A_u) is the L2 projection of u for r >= 1", hat_interpolant),
        c!("hat-rt0", "hat(A_u) for RT_0 on equilateral and right triangles", hat_rt0),
        c!("bracket-formula", "hat([A_u, A_v]) matches the cell plus edge formula", bracket_formula),
        c!("triple-pairing", "int hat([A_u, A_v]) . hat(A_w) matches the bracket pairing", triple_pairing),
        c!("a-h-bracket", "a_h(w, u, v) = -<w, hat([A_u, A_v])> and antisymmetry", a_h_bracket),
        c!("b-h-operator", "b_h and the transport matrix agree with A_u entrywise", b_h_operator),
        c!("kernel", "A_u = A_{Pi u} for the RT_2r interpolant Pi", kernel),
        c!("rank", "u -> A_u is injective on RT_2r with kernel from RT_2r+1", rank),
        c!("spans", "products and gradient products of P_r span P_2r and P_2r-1^2", spans),
        c!("discrete-gradient", "two-point quotients telescope the internal energy", discrete_gradient),
        c!("ell-d-identity", "Lagrangian increment identity on converged steps", ell_d_identity),
        c!("conservation", "energy, mass and entropy over several steps", conservation),
        c!("time-reversal", "a step with -dt undoes a step with dt", time_reversal),
        c!("entropy-reduction", "zero entropy reduces the perfect gas to shallow water", entropy_reduction),
        c!("cayley-inverse", "tau(A) tau(-A) = I", cayley_inverse),
        c!("cayley-richardson", "step-halving differences of the operator stepper shrink at order 2", cayley_richardson),
    ]
}

/// Run every check whose name contains `filter`.
pub fn verify(filter: Option<&str>) -> Vec<CheckResult> {
    checks().iter().filter(|c| filter.is_none_or(|f| c.name.contains(f))).map(Check::run).collect()
}

/// Largest error over labelled cases, against one tolerance.
struct Worst {
    tol: f64,
    err: f64,
    at: String,
    cases: usize,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Self { tol, err: 0.0, at: String::new(), cases: 0 }
    }

    fn add(&mut self, at: impl Into<String>, err: f64) {
        let at = at.into();
        log::debug!("{at}: {err:.3e}");
        self.cases += 1;
        if !(err <= self.err) {
            self.err = err;
            self.at = at;
        }
    }

    fn finish(self) -> Result<Outcome> {
        Ok(Outcome {
            passed: self.err <= self.tol,
            detail: format!("max error {:.2e} ({}) over {} cases, tol {:.0e}", self.err, self.at, self.cases, self.tol),
            error: Some(self.err),
        })
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn square(h: f64) -> Arc<Mesh> {
    Arc::new(Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), h).expect("valid mesh"))
}

fn unit_square(h: f64) -> Arc<Mesh> {
    Arc::new(Mesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), h).expect("valid mesh"))
}

fn random_field(space: &Arc<HDivSpace>, rng: &mut ChaCha8Rng) -> HDivField {
    HDivField { space: space.clone(), coeffs: (0..space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect() }
}

fn spaces(mesh: &Arc<Mesh>, family: HDivFamily, order: usize, r: usize) -> Result<(Arc<HDivSpace>, Arc<DgSpace>)> {
    Ok((Arc::new(HDivSpace::new(mesh.clone(), family, order)?), Arc::new(DgSpace::new(mesh.clone(), r)?)))
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Elementwise L2 projection of a field given per element.
fn project(dg: &Arc<DgSpace>, f: impl Fn(usize, [f64; 2]) -> [f64; 2], degree: usize) -> Result<DgVectorField> {
    let mesh = dg.mesh();
    let rule = triangle_rule(degree.min(MAX_TRIANGLE_DEGREE))?;
    let mut out = DgVectorField::zero(dg);
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &rule);
        for (x, w) in pts.iter().zip(&wts) {
            let v = f(k, *x);
            for (a, b) in dg.basis(k, *x).iter().enumerate() {
                out.x[dg.dof(k, a)] += w * v[0] * b;
                out.y[dg.dof(k, a)] += w * v[1] * b;
            }
        }
    }
    Ok(out)
}

fn quadrature() -> Result<Outcome> {
    let mut w = Worst::new(1e-13);
    for d in 0..=MAX_TRIANGLE_DEGREE {
        w.add(format!("triangle degree {d}"), triangle_exactness_error(&triangle_rule(d)?));
    }
    for d in [1, 3, 8, 17, 41] {
        let r = edge_rule(d)?;
        for n in 0..=d {
            let q: f64 = r.points.iter().zip(&r.weights).map(|(t, w)| w * t.powi(n as i32)).sum();
            w.add(format!("edge degree {d}, t^{n}"), (q * (n as f64 + 1.0) - 1.0).abs());
        }
    }
    w.finish()
}

fn quadrature_fault() -> Result<Outcome> {
    let mut r = triangle_rule(6)?;
    r.weights[0] *= 1.0 + 1e-6;
    let e = triangle_exactness_error(&r);
    Ok(Outcome::flag(e > 1e-8, format!("exactness error after perturbing one weight by 1e-6: {e:.2e}")))
}

fn mesh() -> Result<Outcome> {
    let mut w = Worst::new(1e-12);
    for h in [0.5, 0.25, 0.125] {
        let m = square(h);
        w.add(format!("area, h = {h}"), (m.total_area() - 4.0).abs());
        let euler = m.num_vertices() as f64 - m.num_edges() as f64 + m.num_elements() as f64;
        w.add(format!("Euler characteristic, h = {h}"), (euler - 1.0).abs());
        for e in m.edges() {
            w.add("unit normal", (dot(e.normal, e.normal) - 1.0).abs());
            if let Some(p) = e.plus {
                let d = m.geometry(p).barycenter;
                let c = m.geometry(e.minus).barycenter;
                // Normal points from minus to plus.
                w.add("normal orientation", if dot(e.normal, [d[0] - c[0], d[1] - c[1]]) > 0.0 { 0.0 } else { 1.0 });
            }
        }
        w.add(format!("boundary edges, h = {h}"), (m.boundary_edges().len() as f64 - 8.0 / h).abs());
    }
    let eq = Mesh::equilateral(4)?;
    let ratios: Vec<f64> = (0..eq.num_elements()).map(|k| eq.geometry(k).inradius / eq.geometry(k).diameter).collect();
    w.add("equilateral shape", max_abs(&ratios.iter().map(|r| r - 1.0 / (2.0 * 3f64.sqrt())).collect::<Vec<_>>()));
    w.finish()
}

const CASES: [(HDivFamily, usize, usize); 6] = [
    (HDivFamily::Rt, 0, 0),
    (HDivFamily::Rt, 1, 1),
    (HDivFamily::Bdm, 1, 1),
    (HDivFamily::Rt, 2, 2),
    (HDivFamily::Bdm, 2, 2),
    (HDivFamily::Rt, 0, 1),
];

fn a_one_zero() -> Result<Outcome> {
    let mut w = Worst::new(1e-12);
    let mut g = rng(1);
    let m = square(0.5);
    for (fam, k, r) in CASES {
        let (vel, dg) = spaces(&m, fam, k, r)?;
        let u = random_field(&vel, &mut g);
        let a = assemble_au(&dg, &u)?;
        let one = dg.constant(1.0);
        w.add(format!("{fam:?}_{k}, r = {r}"), max_abs(&a.apply(&one.coeffs)) / a.max_abs());
    }
    w.finish()
}

/// `M[i][j] = int (div u) phi_i phi_j`.
fn divergence_mass(dg: &DgSpace, u: &dyn VelocityField) -> Result<DMatrix<f64>> {
    let mesh = dg.mesh();
    let n = dg.local_dim();
    let rule = triangle_rule((u.degree() + 2 * dg.degree()).min(MAX_TRIANGLE_DEGREE))?;
    let mut out = DMatrix::zeros(dg.dim(), dg.dim());
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &rule);
        for (x, wq) in pts.iter().zip(&wts) {
            let dv = u.divergence(k, *x);
            let b = dg.basis(k, *x);
            for i in 0..n {
                for j in 0..n {
                    out[(dg.dof(k, i), dg.dof(k, j))] += wq * dv * b[i] * b[j];
                }
            }
        }
    }
    Ok(out)
}

fn skew_div() -> Result<Outcome> {
    let mut w = Worst::new(1e-11);
    let mut g = rng(2);
    let m = square(0.5);
    for (fam, k, r) in CASES {
        let (vel, dg) = spaces(&m, fam, k, r)?;
        let u = random_field(&vel, &mut g);
        let a = assemble_au(&dg, &u)?.to_dense();
        let s = &a + a.transpose() + divergence_mass(&dg, &u)?;
        w.add(format!("{fam:?}_{k}, r = {r}"), s.amax() / a.amax());
    }
    // Divergence-free RT_2 field on two cells: the operator is skew.
    let two = Arc::new(Mesh::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0), 1, 1)?);
    let (vel, dg) = spaces(&two, HDivFamily::Rt, 2, 2)?;
    let rule = triangle_rule(8)?;
    let mut rows = Vec::new();
    for k in 0..two.num_elements() {
        let (pts, _) = element_quadrature(&two, k, &rule);
        for x in pts {
            rows.push((0..vel.dim()).map(|j| vel.unit(j).divergence(k, x)).collect::<Vec<_>>());
        }
    }
    let div = DMatrix::from_fn(rows.len(), vel.dim(), |i, j| rows[i][j]);
    let eig = SymmetricEigen::new(div.transpose() * &div);
    let top = eig.eigenvalues.amax();
    let null: Vec<usize> = (0..vel.dim()).filter(|&i| eig.eigenvalues[i] < 1e-20 * top.max(1.0) + 1e-24).collect();
    let mut coeffs = vec![0.0; vel.dim()];
    for &i in &null {
        let c = g.gen_range(-1.0..1.0);
        for j in 0..vel.dim() {
            coeffs[j] += c * eig.eigenvectors[(j, i)];
        }
    }
    let u = HDivField { space: vel.clone(), coeffs };
    let a = assemble_au(&dg, &u)?.to_dense();
    w.add(format!("solenoidal RT_2 ({} free directions)", null.len()), (&a + a.transpose()).amax() / a.amax());
    if null.is_empty() {
        w.add("no divergence-free field found", f64::INFINITY);
    }
    w.finish()
}

fn r0_stencil() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(3);
    for m in [square(0.5), Arc::new(Mesh::equilateral(3)?)] {
        let (vel, dg) = spaces(&m, HDivFamily::Rt, 0, 0)?;
        let u = random_field(&vel, &mut g);
        let a = assemble_au(&dg, &u)?.to_dense();
        let nt = m.num_elements();
        // Entries in the indicator basis: A_ij = <psi_i, A psi_j> / |K_i|.
        let mut expect = DMatrix::<f64>::zeros(nt, nt);
        let erule = edge_rule(2)?;
        let trule = triangle_rule(1)?;
        for &e in m.interior_edges() {
            let ed = m.edge(e);
            let (km, kp) = (ed.minus, ed.plus.unwrap());
            let (pts, wts) = edge_quadrature(&m, e, &erule);
            // Flux out of the minus element.
            let flux: f64 = pts.iter().zip(&wts).map(|(x, wq)| wq * dot(u.eval(km, *x), ed.normal)).sum();
            expect[(km, kp)] = flux / (2.0 * m.area(km));
            expect[(kp, km)] = -flux / (2.0 * m.area(kp));
        }
        for k in 0..nt {
            let (pts, wts) = element_quadrature(&m, k, &trule);
            let div: f64 = pts.iter().zip(&wts).map(|(x, wq)| wq * u.divergence(k, *x)).sum();
            expect[(k, k)] = -div / (2.0 * m.area(k));
        }
        let conv = DMatrix::from_fn(nt, nt, |i, j| a[(i, j)] * (m.area(j) / m.area(i)).sqrt());
        w.add(format!("{nt} elements"), (&conv - &expect).amax() / expect.amax());
    }
    w.finish()
}

fn hat_interpolant() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(4);
    let m = square(0.5);
    for r in [1, 2] {
        for fam in [HDivFamily::Rt, HDivFamily::Bdm] {
            let (vel, dg) = spaces(&m, fam, r, r)?;
            let u = random_field(&vel, &mut g);
            let hat = hat_map(&dg, &assemble_au(&dg, &u)?)?;
            let proj = project(&dg, |k, x| u.eval(k, x), vel.poly_degree() + r)?;
            let scale = max_abs(&proj.x).max(max_abs(&proj.y));
            let err = max_diff(&hat.x, &proj.x).max(max_diff(&hat.y, &proj.y)) / scale;
            w.add(format!("{fam:?}_{r}, r = {r}: projection"), err);
            if fam == HDivFamily::Bdm {
                // Piecewise P_r fields are reproduced pointwise.
                let rule = triangle_rule(4)?;
                let mut e: f64 = 0.0;
                for k in 0..m.num_elements() {
                    for x in element_quadrature(&m, k, &rule).0 {
                        let (a, b) = (hat.eval(k, x), u.eval(k, x));
                        e = e.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
                    }
                }
                w.add(format!("BDM_{r} pointwise"), e);
            }
        }
    }
    w.finish()
}

fn hat_rt0() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(5);
    let eq = Arc::new(Mesh::equilateral(4)?);
    let (vel, dg) = spaces(&eq, HDivFamily::Rt, 0, 0)?;
    let u = random_field(&vel, &mut g);
    let hat = hat_map(&dg, &assemble_au(&dg, &u)?)?;
    let mut e: f64 = 0.0;
    for k in 0..eq.num_elements() {
        let c = eq.geometry(k).barycenter;
        let (a, b) = (hat.eval(k, c), u.eval(k, c));
        e = e.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
    }
    w.add("equilateral: hat = element mean of u", e);

    let m = square(0.5);
    let (vel, dg) = spaces(&m, HDivFamily::Rt, 0, 0)?;
    let u = random_field(&vel, &mut g);
    let hat = hat_map(&dg, &assemble_au(&dg, &u)?)?;
    let erule = edge_rule(2)?;
    let mut expect = vec![[0.0; 2]; m.num_elements()];
    for &e in m.interior_edges() {
        let ed = m.edge(e);
        let (km, kp) = (ed.minus, ed.plus.unwrap());
        let (pts, wts) = edge_quadrature(&m, e, &erule);
        let flux: f64 = pts.iter().zip(&wts).map(|(x, wq)| wq * dot(u.eval(km, *x), ed.normal)).sum();
        let (bm, bp) = (m.geometry(km).barycenter, m.geometry(kp).barycenter);
        for k in [km, kp] {
            let s = flux / (2.0 * m.area(k));
            expect[k][0] += s * (bp[0] - bm[0]);
            expect[k][1] += s * (bp[1] - bm[1]);
        }
    }
    let mut e: f64 = 0.0;
    for k in 0..m.num_elements() {
        let a = hat.eval(k, m.geometry(k).barycenter);
        e = e.max((a[0] - expect[k][0]).abs()).max((a[1] - expect[k][1]).abs());
    }
    w.add("right triangles: centroid-difference formula", e);
    w.finish()
}

/// Coefficients of `hat([A_u, A_v])` from the cell plus edge formula with
/// `ub = I(u)`, `vb = I(v)`.
fn bracket_rhs(dg: &Arc<DgSpace>, u: &HDivField, v: &HDivField, ub: &DgVectorField, vb: &DgVectorField) -> Result<[Vec<f64>; 2]> {
    let mesh = dg.mesh();
    let q = (u.degree() + v.degree() + dg.degree()).min(MAX_TRIANGLE_DEGREE);
    let trule = triangle_rule(q)?;
    let erule = edge_rule(q)?;
    let mut out = [vec![0.0; dg.dim()], vec![0.0; dg.dim()]];
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &trule);
        for (x, wq) in pts.iter().zip(&wts) {
            let (uv, vv) = (u.eval(k, *x), v.eval(k, *x));
            let (ju, jv) = (ub.jacobian(k, *x), vb.jacobian(k, *x));
            let b = dg.basis(k, *x);
            for c in 0..2 {
                let s = dot(jv[c], uv) - dot(ju[c], vv);
                for (a, ba) in b.iter().enumerate() {
                    out[c][dg.dof(k, a)] += wq * s * ba;
                }
            }
        }
    }
    for &e in mesh.interior_edges() {
        let ed = mesh.edge(e);
        let (km, kp) = (ed.minus, ed.plus.unwrap());
        let (pts, wts) = edge_quadrature(mesh, e, &erule);
        for (x, wq) in pts.iter().zip(&wts) {
            let un = 0.5 * (dot(u.eval(km, *x), ed.normal) + dot(u.eval(kp, *x), ed.normal));
            let vn = 0.5 * (dot(v.eval(km, *x), ed.normal) + dot(v.eval(kp, *x), ed.normal));
            let (ubm, ubp) = (ub.eval(km, *x), ub.eval(kp, *x));
            let (vbm, vbp) = (vb.eval(km, *x), vb.eval(kp, *x));
            for c in 0..2 {
                let s = un * (vbm[c] - vbp[c]) - vn * (ubm[c] - ubp[c]);
                for k in [km, kp] {
                    for (a, ba) in dg.basis(k, *x).iter().enumerate() {
                        out[c][dg.dof(k, a)] -= wq * s * 0.5 * ba;
                    }
                }
            }
        }
    }
    Ok(out)
}

fn bracket_formula() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(6);
    let m = square(0.5);
    for r in [1, 2] {
        for fam in [HDivFamily::Rt, HDivFamily::Bdm] {
            let (vel, dg) = spaces(&m, fam, r, r)?;
            let (u, v) = (random_field(&vel, &mut g), random_field(&vel, &mut g));
            let c = commutator(&assemble_au(&dg, &u)?, &assemble_au(&dg, &v)?)?;
            let hat = hat_map(&dg, &c)?;
            let q = vel.poly_degree() + r;
            let ub = project(&dg, |k, x| u.eval(k, x), q)?;
            let vb = project(&dg, |k, x| v.eval(k, x), q)?;
            let rhs = bracket_rhs(&dg, &u, &v, &ub, &vb)?;
            let scale = max_abs(&rhs[0]).max(max_abs(&rhs[1]));
            let err = max_diff(&hat.x, &rhs[0]).max(max_diff(&hat.y, &rhs[1])) / scale;
            w.add(format!("{fam:?}_{r}, r = {r}"), err);
        }
    }
    w.finish()
}

fn triple_pairing() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(7);
    let m = square(0.5);
    for r in [1, 2] {
        let (vel, dg) = spaces(&m, HDivFamily::Bdm, r, r)?;
        let (u, v, z) = (random_field(&vel, &mut g), random_field(&vel, &mut g), random_field(&vel, &mut g));
        let c = commutator(&assemble_au(&dg, &u)?, &assemble_au(&dg, &v)?)?;
        let lhs = hat_map(&dg, &c)?.dot(&hat_map(&dg, &assemble_au(&dg, &z)?)?);
        let q = (3 * r).min(MAX_TRIANGLE_DEGREE);
        let trule = triangle_rule(q)?;
        let erule = edge_rule(q)?;
        let (mut rhs, mut scale) = (0.0, 0.0);
        for k in 0..m.num_elements() {
            let (pts, wts) = element_quadrature(&m, k, &trule);
            for (x, wq) in pts.iter().zip(&wts) {
                let (uv, ju) = u.eval_with_jacobian(k, *x);
                let (vv, jv) = v.eval_with_jacobian(k, *x);
                let zv = z.eval(k, *x);
                // [u, v] = (u . grad) v - (v . grad) u
                let br = [dot(jv[0], uv) - dot(ju[0], vv), dot(jv[1], uv) - dot(ju[1], vv)];
                rhs += wq * dot(br, zv);
                scale += (wq * dot(br, zv)).abs();
            }
        }
        for &e in m.interior_edges() {
            let ed = m.edge(e);
            let n = ed.normal;
            let (km, kp) = (ed.minus, ed.plus.unwrap());
            let (pts, wts) = edge_quadrature(&m, e, &erule);
            for (x, wq) in pts.iter().zip(&wts) {
                let cross = |k: usize| {
                    let (a, b) = (u.eval(k, *x), v.eval(k, *x));
                    a[0] * b[1] - a[1] * b[0]
                };
                let (zm, zp) = (z.eval(km, *x), z.eval(kp, *x));
                let za = [0.5 * (zm[0] + zp[0]), 0.5 * (zm[1] + zp[1])];
                let t = wq * (n[0] * za[1] - n[1] * za[0]) * (cross(km) - cross(kp));
                rhs -= t;
                scale += t.abs();
            }
        }
        w.add(format!("BDM_{r}"), (lhs - rhs).abs() / scale);
    }
    w.finish()
}

fn a_h_bracket() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let mut g = rng(8);
    let m = square(0.5);
    for r in [1, 2] {
        let (vel, dg) = spaces(&m, HDivFamily::Bdm, r, r)?;
        let (u, v) = (random_field(&vel, &mut g), random_field(&vel, &mut g));
        let z = DgVectorField {
            space: dg.clone(),
            x: (0..dg.dim()).map(|_| g.gen_range(-1.0..1.0)).collect(),
            y: (0..dg.dim()).map(|_| g.gen_range(-1.0..1.0)).collect(),
        };
        let a = eval_a_h(&z, &u, &v)?;
        let c = commutator(&assemble_au(&dg, &u)?, &assemble_au(&dg, &v)?)?;
        let b = -z.dot(&hat_map(&dg, &c)?);
        w.add(format!("BDM_{r}: operator route"), (a - b).abs() / b.abs());
        w.add(format!("BDM_{r}: a_h(w, u, u)"), eval_a_h(&z, &u, &u)?.abs() / a.abs());
        w.add(format!("BDM_{r}: antisymmetry"), (a + eval_a_h(&z, &v, &u)?).abs() / a.abs());
    }
    w.finish()
}

fn b_h_operator() -> Result<Outcome> {
    let mut w = Worst::new(1e-12);
    let mut g = rng(9);
    let m = square(0.5);
    for (fam, k, r) in [(HDivFamily::Rt, 0, 0), (HDivFamily::Rt, 1, 1), (HDivFamily::Rt, 0, 1)] {
        let (vel, dg) = spaces(&m, fam, k, r)?;
        let u = random_field(&vel, &mut g);
        let a = assemble_au(&dg, &u)?.to_dense();
        let t = assemble_transport(&u, &dg)?.to_dense();
        w.add(format!("{fam:?}_{k}, r = {r}: T = A^T"), (&t - a.transpose()).amax() / a.amax());
        let unit = |i: usize| {
            let mut c = vec![0.0; dg.dim()];
            c[i] = 1.0;
            dg.field(c)
        };
        for _ in 0..12 {
            let (i, j) = (g.gen_range(0..dg.dim()), g.gen_range(0..dg.dim()));
            let b = eval_b_h(&u, &unit(j)?, &unit(i)?)?;
            w.add(format!("{fam:?}_{k}, r = {r}: b_h entry"), (b - a[(i, j)]).abs() / a.amax());
        }
        w.add("b_h with constant f", eval_b_h(&u, &dg.constant(1.0), &unit(0)?)?.abs());
    }
    w.finish()
}

fn kernel() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let m = square(0.5);
    // Quartic field with vanishing normal component on the boundary of the square.
    let f = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        [(1.0 - x * x) * (1.0 + x * y + y * y), (1.0 - y * y) * (x - 0.5 * x * x + y)]
    };
    let jac = |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        [
            [-2.0 * x * (1.0 + x * y + y * y) + (1.0 - x * x) * y, (1.0 - x * x) * (x + 2.0 * y)],
            [(1.0 - y * y) * (1.0 - x), -2.0 * y * (x - 0.5 * x * x + y) + (1.0 - y * y)],
        ]
    };
    let u = AnalyticVelocity::new(f, jac, 4);
    for r in [0, 1] {
        let dg = DgSpace::new(m.clone(), r)?;
        let pi = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 2 * r)?).interpolate(f, 4)?;
        let au = assemble_au(&dg, &u)?;
        let diff = assemble_au(&dg, &Difference(&u, &pi))?;
        w.add(format!("r = {r}"), diff.max_abs() / au.max_abs());
        // The constructed kernel element is far from zero.
        let rule = triangle_rule(4)?;
        let mut size: f64 = 0.0;
        for k in 0..m.num_elements() {
            for x in element_quadrature(&m, k, &rule).0 {
                let (a, b) = (f(x), pi.eval(k, x));
                size = size.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
            }
        }
        if size < 1e-3 {
            w.add(format!("r = {r}: u - Pi u vanishes"), f64::INFINITY);
        }
    }
    w.finish()
}

/// Numerical rank of `{A_psi : psi in basis of vel}` and the relative size of the
/// smallest retained singular value.
fn operator_rank(vel: &Arc<HDivSpace>, dg: &DgSpace) -> Result<(usize, f64)> {
    let ops: Vec<SparseOperator> = (0..vel.dim()).map(|j| assemble_au(dg, &vel.unit(j))).collect::<Result<_>>()?;
    let n = ops.len();
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = ops[i].frobenius_dot(&ops[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.amax();
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|l| (l.max(0.0) / top).sqrt()).collect();
    let kept: Vec<f64> = sv.iter().copied().filter(|&s| s > 1e-6).collect();
    Ok((kept.len(), kept.iter().copied().fold(1.0, f64::min)))
}

fn rank() -> Result<Outcome> {
    let mut ok = true;
    let mut notes = Vec::new();
    for r in [0, 1] {
        for h in [0.5, 0.25] {
            let m = unit_square(h);
            let dg = DgSpace::new(m.clone(), r)?;
            let rt = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 2 * r)?);
            let (rk, smin) = operator_rank(&rt, &dg)?;
            let next = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 2 * r + 1)?);
            let (rk2, _) = operator_rank(&next, &dg)?;
            ok &= rk == rt.dim() && rk2 == rt.dim();
            notes.push(format!("r={r} h={h}: rank {rk}/{} (min sv {smin:.1e}), RT_{} rank {rk2}", rt.dim(), 2 * r + 1));
        }
    }
    Ok(Outcome::flag(ok, notes.join("; ")))
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.amax();
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

fn spans() -> Result<Outcome> {
    let mut ok = true;
    let mut notes = Vec::new();
    let tri = Arc::new(Mesh::from_raw(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]])?);
    let pts = triangle_rule(12)?.points;
    for r in [1, 2] {
        let dg = DgSpace::new(tri.clone(), r)?;
        let n = dg.local_dim();
        let vals: Vec<(Vec<f64>, Vec<[f64; 2]>)> = pts.iter().map(|p| dg.basis_with_grad(0, *p)).collect();
        let mut prod = Vec::new();
        let mut grad = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if j >= i {
                    prod.push(vals.iter().map(|(b, _)| b[i] * b[j]).collect::<Vec<_>>());
                }
                let mut row: Vec<f64> = vals.iter().map(|(b, g)| b[i] * g[j][0]).collect();
                row.extend(vals.iter().map(|(b, g)| b[i] * g[j][1]));
                grad.push(row);
            }
        }
        let to_mat = |rows: &Vec<Vec<f64>>| DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
        let (rp, rg) = (numerical_rank(&to_mat(&prod)), numerical_rank(&to_mat(&grad)));
        let (ep, eg) = (crate::poly::count(2 * r), 2 * crate::poly::count(2 * r - 1));
        ok &= rp == ep && rg == eg;
        notes.push(format!("r={r}: span(pq) {rp}/{ep}, span(p grad q) {rg}/{eg}"));
    }
    Ok(Outcome::flag(ok, notes.join("; ")))
}

fn gas() -> Physics {
    Physics::perfect_gas(5.0 / 3.0, 1.0, 1.0, Potential { c: 0.0, x: 0.0, y: -1.0 })
}

fn discrete_gradient() -> Result<Outcome> {
    let mut w = Worst::new(1e-12);
    let mut g = rng(10);
    let sw = Physics::shallow_water(1.0);
    let gp = gas();
    let eps = SolverOpts::default().eps_dg;
    for i in 0..200 {
        let d = g.gen_range(0.5..3.0);
        let s = g.gen_range(-1.0..1.0);
        // Alternate well separated and nearly coincident pairs.
        let rel = if i % 2 == 0 { g.gen_range(-0.5..0.5) } else { g.gen_range(-1e-9..1e-9) };
        let (d2, s2) = (d * (1.0 + rel), s + rel * g.gen_range(-1.0..1.0));
        let e = |p: &Physics, a: f64, b: f64| p.energy_density(a, b);
        let f = sw.discrete_grad_f(d, d2, eps)?;
        w.add("shallow water", (f * (d2 - d) - (e(&sw, d2, 0.0) - e(&sw, d, 0.0))).abs() / e(&sw, d, 0.0).abs());
        let (fd, gs) = gp.discrete_grads_baroclinic(d, d2, s, s2, eps)?;
        let de = e(&gp, d2, s2) - e(&gp, d, s);
        w.add("perfect gas", (fd * (d2 - d) + gs * (s2 - s) - de).abs() / e(&gp, d, s).abs());
    }
    w.finish()
}

fn sw_setup(h: f64, r: usize) -> Result<(Arc<HDivSpace>, Arc<DgSpace>, SimState)> {
    let m = square(h);
    let (vel, dg) = spaces(&m, HDivFamily::Rt, r, r)?;
    let u0 = |p: [f64; 2]| [0.3 * (1.0 - p[0] * p[0]) * p[1], -0.2 * (1.0 - p[1] * p[1]) * p[0]];
    let st = SimState::from_functions(&vel, &dg, u0, sw_density, None, 10)?;
    Ok((vel, dg, st))
}

fn rt_setup(h: f64) -> Result<(Arc<HDivSpace>, Arc<DgSpace>, SimState)> {
    let m = Arc::new(Mesh::uniform(Rect::new(0.0, 0.25, 0.0, 1.0), h)?);
    let (vel, dg) = spaces(&m, HDivFamily::Rt, 0, 1)?;
    let g = 5.0 / 3.0;
    let s0 = |p: [f64; 2]| rt_entropy(p, g, 1.0, 1.0);
    // Amplified perturbation so a few steps move the state visibly.
    let u0 = |p: [f64; 2]| {
        let v = rt_velocity(p, g);
        [v[0], 20.0 * v[1]]
    };
    let st = SimState::from_functions(&vel, &dg, u0, rt_density, Some(&s0), 10)?;
    Ok((vel, dg, st))
}

/// Lagrangian increment minus the right side of its discrete-gradient
/// expansion, relative to the size of the Lagrangian.
fn ell_d_defect(physics: &Physics, s0: &SimState, s1: &SimState, q: usize, eps: f64) -> Result<f64> {
    let dg = &s0.d.space;
    let mesh = dg.mesh();
    // Operator velocities v = -hat(A) with A = A_{-u}.
    let hat = |s: &SimState| hat_map(dg, &assemble_au(dg, &s.u.scaled(-1.0))?);
    let (h0, h1) = (hat(s0)?, hat(s1)?);
    let v = |h: &DgVectorField, k, x| {
        let a: [f64; 2] = h.eval(k, x);
        [-a[0], -a[1]]
    };
    let rule = triangle_rule(q.min(MAX_TRIANGLE_DEGREE))?;
    let zero = dg.zero();
    let (e0, e1) = (s0.s.as_ref().unwrap_or(&zero), s1.s.as_ref().unwrap_or(&zero));
    let mut lhs = 0.0;
    let mut size = 0.0;
    let mut m_sum = DgVectorField::zero(dg);
    let mut fproj = vec![0.0; dg.dim()];
    let mut gproj = vec![0.0; dg.dim()];
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &rule);
        for (x, wq) in pts.iter().zip(&wts) {
            let (v0, v1) = (v(&h0, k, *x), v(&h1, k, *x));
            let (d0, d1) = (s0.d.eval(k, *x), s1.d.eval(k, *x));
            let (a0, a1) = (e0.eval(k, *x), e1.eval(k, *x));
            let rot = physics.rotation(*x);
            let phi = physics.potential(*x);
            let ell = |d: f64, s: f64, v: [f64; 2]| {
                0.5 * d * dot(v, v) + d * dot(v, rot) - physics.energy_density(d, s) - d * phi
            };
            let (l0, l1) = (ell(d0, a0, v0), ell(d1, a1, v1));
            lhs += wq * (l1 - l0);
            size += wq * l0.abs();
            let (fd, gs) = physics.discrete_grads_baroclinic(d0, d1, a0, a1, eps)?;
            let vm = [0.5 * (v0[0] + v1[0]), 0.5 * (v0[1] + v1[1])];
            let f = 0.5 * dot(v0, v1) + dot(vm, rot) - fd - phi;
            let m = [d0 * (v0[0] + rot[0]) + d1 * (v1[0] + rot[0]), d0 * (v0[1] + rot[1]) + d1 * (v1[1] + rot[1])];
            for (a, b) in dg.basis(k, *x).iter().enumerate() {
                let i = dg.dof(k, a);
                m_sum.x[i] += wq * m[0] * b;
                m_sum.y[i] += wq * m[1] * b;
                fproj[i] += wq * f * b;
                gproj[i] -= wq * gs * b;
            }
        }
    }
    // Pairings on projected quantities, with hat(A_1 - A_0) from the operator layer.
    let db = hat_map(dg, &assemble_au(dg, &s1.u.scaled(-1.0))?.sub(&assemble_au(dg, &s0.u.scaled(-1.0))?)?)?;
    let pair_a = -0.5 * m_sum.dot(&db);
    let dd: Vec<f64> = s1.d.coeffs.iter().zip(&s0.d.coeffs).map(|(a, b)| a - b).collect();
    let ds: Vec<f64> = e1.coeffs.iter().zip(&e0.coeffs).map(|(a, b)| a - b).collect();
    let pair_d: f64 = fproj.iter().zip(&dd).map(|(a, b)| a * b).sum();
    let pair_s: f64 = gproj.iter().zip(&ds).map(|(a, b)| a * b).sum();
    Ok((lhs - (pair_a + pair_d + pair_s)).abs() / size)
}

fn ell_d_identity() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let opts = SolverOpts::default();
    let (vel, dg, st) = sw_setup(0.5, 1)?;
    let physics = Physics::shallow_water(1.0);
    let mut stepper = EnergyStepper::new(vel, dg, physics, opts.clone())?;
    let (next, _) = stepper.step(&st, 0.05)?;
    w.add("rotating shallow water", ell_d_defect(&physics, &st, &next, stepper.quad_degree(), opts.eps_dg)?);
    let (vel, dg, st) = rt_setup(1.0 / 8.0)?;
    let mut stepper = EnergyStepper::new(vel, dg, gas(), opts.clone())?;
    let (next, _) = stepper.step(&st, 0.01)?;
    w.add("perfect gas with entropy", ell_d_defect(&gas(), &st, &next, stepper.quad_degree(), opts.eps_dg)?);
    w.finish()
}

fn conservation() -> Result<Outcome> {
    let mut w = Worst::new(1e-11);
    let runs: [(&str, Physics, f64); 2] = [("shallow water", Physics::shallow_water(1.0), 0.05), ("perfect gas", gas(), 0.01)];
    for (name, physics, dt) in runs {
        let (vel, dg, mut st) = if physics.has_entropy { rt_setup(1.0 / 8.0)? } else { sw_setup(0.5, 1)? };
        let mut stepper = EnergyStepper::new(vel, dg, physics, SolverOpts::default())?;
        let (e0, m0, s0) = (stepper.energy(&st)?, st.mass(), st.entropy());
        for _ in 0..10 {
            st = stepper.step(&st, dt)?.0;
            w.add(format!("{name}: energy"), (stepper.energy(&st)? / e0 - 1.0).abs());
            w.add(format!("{name}: mass"), (st.mass() / m0 - 1.0).abs());
            if let (Some(a), Some(b)) = (s0, st.entropy()) {
                w.add(format!("{name}: entropy"), ((b - a) / a).abs());
            }
        }
    }
    w.finish()
}

fn state_diff(a: &SimState, b: &SimState) -> f64 {
    let mut e = max_diff(&a.u.coeffs, &b.u.coeffs) / max_abs(&a.u.coeffs).max(1e-300);
    e = e.max(max_diff(&a.d.coeffs, &b.d.coeffs) / max_abs(&a.d.coeffs));
    if let (Some(x), Some(y)) = (&a.s, &b.s) {
        e = e.max(max_diff(&x.coeffs, &y.coeffs) / max_abs(&x.coeffs));
    }
    e
}

fn time_reversal() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let opts = SolverOpts { abs_tol: 1e-14, rel_tol: 1e-14, ..SolverOpts::default() };
    let runs: [(&str, Physics, f64); 2] = [("shallow water", Physics::shallow_water(1.0), 0.05), ("perfect gas", gas(), 0.01)];
    for (name, physics, dt) in runs {
        let (vel, dg, st) = if physics.has_entropy { rt_setup(1.0 / 8.0)? } else { sw_setup(0.5, 1)? };
        let mut stepper = EnergyStepper::new(vel, dg, physics, opts.clone())?;
        let (fwd, _) = stepper.step(&st, dt)?;
        let (back, _) = stepper.step(&fwd, -dt)?;
        w.add(name, state_diff(&st, &back));
        let moved = state_diff(&st, &fwd);
        if moved < 1e-6 {
            w.add(format!("{name}: step left the state unchanged"), f64::INFINITY);
        }
    }
    w.finish()
}

fn entropy_reduction() -> Result<Outcome> {
    let mut w = Worst::new(1e-10);
    let (vel, dg, st) = sw_setup(0.5, 1)?;
    let opts = SolverOpts { quad_degree: Some(8), ..SolverOpts::default() };
    let sw = Physics::shallow_water(1.0);
    // gamma = 2, K = 1/2 and S = 0 give E = D^2 / 2.
    let mut pg = Physics::perfect_gas(2.0, 0.5, 1.0, Potential::default());
    pg.omega = 1.0;
    let mut a = EnergyStepper::new(vel.clone(), dg.clone(), sw, opts.clone())?;
    let mut b = EnergyStepper::new(vel, dg.clone(), pg, opts)?;
    let mut sa = st.clone();
    let mut sb = SimState { s: Some(dg.zero()), ..st };
    for k in 0..3 {
        sa = a.step(&sa, 0.05)?.0;
        sb = b.step(&sb, 0.05)?.0;
        let mut e = max_diff(&sa.u.coeffs, &sb.u.coeffs).max(max_diff(&sa.d.coeffs, &sb.d.coeffs));
        e = e.max(max_abs(&sb.s.as_ref().unwrap().coeffs));
        w.add(format!("step {}", k + 1), e);
    }
    w.finish()
}

fn cayley_inverse() -> Result<Outcome> {
    let mut w = Worst::new(1e-12);
    let mut g = rng(11);
    let m = square(0.5);
    for r in [0, 1] {
        let (vel, dg) = spaces(&m, HDivFamily::Rt, r, r)?;
        for scale in [0.01, 0.1] {
            let u = random_field(&vel, &mut g).scaled(scale);
            let a = assemble_au(&dg, &u)?.to_dense();
            let p = crate::dynamics::cayley_dense(&a)? * crate::dynamics::cayley_dense(&(-&a))?;
            let n = p.nrows();
            w.add(format!("r = {r}, |u| ~ {scale}"), (p - DMatrix::<f64>::identity(n, n)).amax());
        }
    }
    w.finish()
}

pub const RICHARDSON_DTS: [f64; 3] = [0.01, 0.005, 0.0025];

/// Observed orders of `|Phi_dt(q) - Phi_{dt/2}(Phi_{dt/2}(q))|` for halving `dt`.
pub fn cayley_richardson_orders(dts: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (vel, dg, st) = sw_setup(0.5, 1)?;
    let opts = SolverOpts { abs_tol: 1e-14, rel_tol: 1e-14, ..SolverOpts::default() };
    let stepper = CayleyStepper::new(vel, dg, Physics::shallow_water(1.0), opts)?;
    let q = stepper.state_from_velocity(&st.u, &st.d)?;
    let mut errs = Vec::new();
    for &dt in dts {
        let (one, _) = stepper.step(&q, dt)?;
        let (half, _) = stepper.step(&q, dt / 2.0)?;
        let (two, _) = stepper.step(&half, dt / 2.0)?;
        let ea = max_diff(&one.a, &two.a) / max_abs(&q.a);
        let ed = max_diff(&one.d.coeffs, &two.d.coeffs) / max_abs(&q.d.coeffs);
        errs.push(ea.max(ed));
    }
    let orders: Vec<f64> = errs.windows(2).map(|p| (p[0] / p[1]).log2()).collect();
    Ok((errs, orders))
}

fn cayley_richardson() -> Result<Outcome> {
    let (errs, orders) = cayley_richardson_orders(&RICHARDSON_DTS)?;
    let ok = orders.iter().all(|o| (o - 2.0).abs() <= 0.25);
    let errs: Vec<String> = errs.iter().map(|e| format!("{e:.2e}")).collect();
    Ok(Outcome::flag(ok, format!("differences [{}], orders {orders:.3?} (expected 2 +- 0.25)", errs.join(", "))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let names: Vec<&str> = checks().iter().map(|c| c.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
    }

    #[test]
    fn fast_checks_pass() {
        for r in verify(Some("quadrature")).into_iter().chain(verify(Some("mesh"))) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}

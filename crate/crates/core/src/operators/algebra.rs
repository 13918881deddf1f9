use std::sync::Arc;

use super::sparse::{SparseOperator, Triplets};
use crate::error::{Error, Result};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::spaces::{edge_quadrature, element_quadrature, DgSpace, DgVectorField, VelocityField};

/// Matrix of `A_u` in the orthonormal basis of `dg`.
///
/// Edge terms use the average of both restrictions of `u`, which equals the
/// common normal trace for H(div)-conforming fields. Boundary edges carry no
/// term since `u . n` vanishes there.
pub fn assemble_au(dg: &DgSpace, u: &dyn VelocityField) -> Result<SparseOperator> {
    super::forms::check_mesh(dg, u)?;
    let mesh = dg.mesh();
    let n = dg.local_dim();
    let q = u.degree() + 2 * dg.degree();
    let trule = triangle_rule(q).expect("degree within range");
    let erule = edge_rule(q).expect("degree within range");
    let mut t = Triplets::new(dg.dim(), dg.dim());
    for k in 0..mesh.num_elements() {
        let (pts, wts) = element_quadrature(mesh, k, &trule);
        let mut local = vec![0.0; n * n];
        for (x, w) in pts.iter().zip(&wts) {
            let uv = u.value(k, *x);
            let (b, g) = dg.basis_with_grad(k, *x);
            for j in 0..n {
                let d = uv[0] * g[j][0] + uv[1] * g[j][1];
                for i in 0..n {
                    local[i * n + j] += w * d * b[i];
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                t.add(dg.dof(k, i), dg.dof(k, j), local[i * n + j]);
            }
        }
    }
    for &e in mesh.interior_edges() {
        let edge = mesh.edge(e);
        let (km, kp) = (edge.minus, edge.plus.unwrap());
        let (pts, wts) = edge_quadrature(mesh, e, &erule);
        let mut blocks = vec![0.0; 4 * n * n];
        for (x, w) in pts.iter().zip(&wts) {
            let a = u.value(km, *x);
            let b = u.value(kp, *x);
            let un = 0.5 * ((a[0] + b[0]) * edge.normal[0] + (a[1] + b[1]) * edge.normal[1]);
            let pm = dg.basis(km, *x);
            let pp = dg.basis(kp, *x);
            for (si, gi) in [(0usize, &pm), (1, &pp)] {
                for (sj, fj, sign) in [(0usize, &pm, 1.0), (1, &pp, -1.0)] {
                    let blk = &mut blocks[(2 * si + sj) * n * n..(2 * si + sj + 1) * n * n];
                    for i in 0..n {
                        for j in 0..n {
                            blk[i * n + j] -= w * un * sign * fj[j] * 0.5 * gi[i];
                        }
                    }
                }
            }
        }
        for (si, ki) in [(0usize, km), (1, kp)] {
            for (sj, kj) in [(0usize, km), (1, kp)] {
                let blk = &blocks[(2 * si + sj) * n * n..(2 * si + sj + 1) * n * n];
                for i in 0..n {
                    for j in 0..n {
                        t.add(dg.dof(ki, i), dg.dof(kj, j), blk[i * n + j]);
                    }
                }
            }
        }
    }
    Ok(t.build())
}

/// Projected coordinate functions `I_h^r(x)`, `I_h^r(y)`.
pub fn coordinate_fields(dg: &Arc<DgSpace>) -> DgVectorField {
    dg.coordinates()
}

/// `hat(A)^k = A I_h^r(x^k)`.
pub fn hat_map(dg: &Arc<DgSpace>, a: &SparseOperator) -> Result<DgVectorField> {
    if a.rows() != dg.dim() || a.cols() != dg.dim() {
        return Err(Error::DimensionMismatch { expected: dg.dim(), got: a.rows() });
    }
    let x = dg.coordinates();
    Ok(DgVectorField { space: dg.clone(), x: a.apply(&x.x), y: a.apply(&x.y) })
}

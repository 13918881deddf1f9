//! Discrete operator calculus on the DG space.
//!
//! `A_u` is the discrete directional derivative along a velocity field `u`:
//!
//! `<A_u f, g> = sum_K int_K (u . grad f) g  -  sum_e int_e (u . n)(f_- - f_+) {g}`
//!
//! with `n` pointing from the minus element to the plus element and `{g}` the
//! unweighted edge average. All pairings use the orthonormal DG basis, so a
//! matrix entry `(A_u)_ij` is `<A_u phi_j, phi_i>`.
//!
//! The solver works in velocity variables; an operator `A` corresponds to the
//! velocity `u_h = -hat(A)`.

mod algebra;
mod forms;
mod sparse;

pub use algebra::{assemble_au, coordinate_fields, hat_map};
pub use forms::{assemble_transport, assemble_weighted_mass, energy, eval_a_h, eval_b_h, default_quad_degree};
pub use sparse::{commutator, SparseOperator, Triplets};

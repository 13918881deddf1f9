//! Structure-preserving finite element discretizations of compressible flow
//! on triangular meshes.
//!
//! Densities and entropies live in discontinuous piecewise-polynomial spaces,
//! velocities in H(div)-conforming spaces. The time steppers conserve mass,
//! entropy and total energy to solver tolerance.

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod operators;
pub mod poly;
pub mod quadrature;
pub mod spaces;

pub use error::{Error, Result};

//! Time integration: the energy-preserving midpoint scheme, its solvers, and
//! the group-valued variant formulated directly on operators.

pub mod cayley;
pub mod energy;
mod linsolve;
pub mod physics;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{DgField, DgSpace, HDivField, HDivSpace};

pub use cayley::{cayley_dense, CayleyState, CayleyStepper};
pub use energy::{step_energy_preserving, step_energy_preserving_baroclinic, EnergyStepper};
pub use physics::{Eos, Physics, Potential};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Newton with a finite-difference Jacobian reused across iterations.
    NewtonFd,
    /// Fixed point with the density-weighted velocity mass matrix.
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOpts {
    pub method: SolverMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Relative separation below which two-point quotients use the midpoint derivative.
    pub eps_dg: f64,
    /// Retry with Newton when Picard stalls.
    pub fallback: bool,
    /// Overrides the quadrature degree of the residual and energy.
    pub quad_degree: Option<usize>,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            method: SolverMethod::Picard,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_iter: 50,
            eps_dg: 1e-10,
            fallback: true,
            quad_degree: None,
        }
    }
}

impl SolverOpts {
    pub fn newton() -> Self {
        Self { method: SolverMethod::NewtonFd, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) || self.abs_tol + self.rel_tol == 0.0 {
            return Err(Error::InvalidArgument("solver tolerances must be non-negative and not both zero".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        if !(self.eps_dg >= 0.0) {
            return Err(Error::InvalidArgument("eps_dg must be non-negative".into()));
        }
        Ok(())
    }
}

/// Discrete state: velocity, density and optionally entropy density.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub u: HDivField,
    pub d: DgField,
    pub s: Option<DgField>,
}

impl SimState {
    /// Interpolates `u0` and projects the scalar fields.
    pub fn from_functions(
        vel: &Arc<HDivSpace>,
        dg: &Arc<DgSpace>,
        u0: impl Fn([f64; 2]) -> [f64; 2],
        d0: impl Fn([f64; 2]) -> f64,
        s0: Option<&dyn Fn([f64; 2]) -> f64>,
        quad_degree: usize,
    ) -> Result<Self> {
        let u = vel.interpolate(u0, quad_degree)?;
        let d = dg.project(d0, quad_degree)?;
        let s = match s0 {
            Some(f) => Some(dg.project(f, quad_degree)?),
            None => None,
        };
        Ok(Self { t: 0.0, u, d, s })
    }

    pub fn mass(&self) -> f64 {
        self.d.integral()
    }

    pub fn entropy(&self) -> Option<f64> {
        self.s.as_ref().map(|s| s.integral())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
    pub method: SolverMethod,
    pub jacobian_builds: usize,
}

//! Equations of state, external forcing and their discrete gradients.
//!
//! Internal energy is handled through its density `E(D, S) = D e(D, S/D)`.
//! Two-point quotients of `E` are evaluated in a form that stays accurate when
//! the arguments nearly coincide, so no catastrophic cancellation occurs on
//! the way to the removable singularity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Eos {
    /// `e(rho) = rho / 2`.
    ShallowWater,
    /// `e(rho, eta) = k exp(eta / cv) rho^(gamma - 1)`.
    PerfectGas { gamma: f64, k: f64, cv: f64 },
}

/// Affine potential `c + x X + y Y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub eos: Eos,
    /// Angular velocity; the rotation field is `omega (-y, x)`.
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub potential: Potential,
    /// Whether an entropy density is carried as an unknown.
    #[serde(default)]
    pub has_entropy: bool,
}

impl Physics {
    pub fn shallow_water(omega: f64) -> Self {
        Self { eos: Eos::ShallowWater, omega, potential: Potential::default(), has_entropy: false }
    }

    pub fn perfect_gas(gamma: f64, k: f64, cv: f64, potential: Potential) -> Self {
        Self { eos: Eos::PerfectGas { gamma, k, cv }, omega: 0.0, potential, has_entropy: true }
    }

    pub fn rotation(&self, x: [f64; 2]) -> [f64; 2] {
        [-self.omega * x[1], self.omega * x[0]]
    }

    pub fn potential(&self, x: [f64; 2]) -> f64 {
        self.potential.c + self.potential.x * x[0] + self.potential.y * x[1]
    }

    pub fn validate(&self) -> Result<()> {
        if let Eos::PerfectGas { gamma, k, cv } = self.eos {
            if !(gamma > 1.0 && k > 0.0 && cv > 0.0) {
                return Err(Error::Config(format!("perfect gas needs gamma > 1, k > 0, cv > 0 (got {gamma}, {k}, {cv})")));
            }
        } else if self.has_entropy {
            return Err(Error::Config("the shallow-water law carries no entropy".into()));
        }
        Ok(())
    }

    /// Internal energy density `D e(D, S/D)`.
    pub fn energy_density(&self, d: f64, s: f64) -> f64 {
        match self.eos {
            Eos::ShallowWater => 0.5 * d * d,
            Eos::PerfectGas { gamma, k, cv } => k * d.powf(gamma) * (s / (cv * d)).exp(),
        }
    }

    /// Specific internal energy `e(D, S/D)`.
    pub fn specific_energy(&self, d: f64, s: f64) -> f64 {
        self.energy_density(d, s) / d
    }

    /// `p = rho^2 de/drho` at fixed specific entropy.
    pub fn pressure(&self, d: f64, s: f64) -> f64 {
        match self.eos {
            Eos::ShallowWater => 0.5 * d * d,
            Eos::PerfectGas { gamma, .. } => (gamma - 1.0) * self.energy_density(d, s),
        }
    }

    /// `dE/dD` at fixed `S`.
    pub fn energy_density_d(&self, d: f64, s: f64) -> f64 {
        match self.eos {
            Eos::ShallowWater => d,
            Eos::PerfectGas { gamma, cv, .. } => self.energy_density(d, s) * (gamma / d - s / (cv * d * d)),
        }
    }

    /// `dE/dS` at fixed `D`.
    pub fn energy_density_s(&self, d: f64, s: f64) -> f64 {
        match self.eos {
            Eos::ShallowWater => 0.0,
            Eos::PerfectGas { cv, .. } => self.energy_density(d, s) / (cv * d),
        }
    }

    /// Barotropic discrete gradient `(y e(y) - x e(x)) / (y - x)` with zero entropy.
    pub fn discrete_grad_f(&self, x: f64, y: f64, eps: f64) -> Result<f64> {
        self.quotient_d(x, y, 0.0, eps)
    }

    /// `(E(D', S) - E(D, S)) / (D' - D)`.
    pub fn quotient_d(&self, d: f64, d2: f64, s: f64, eps: f64) -> Result<f64> {
        if !(d > 0.0 && d2 > 0.0) {
            return Err(Error::InvalidArgument(format!("densities must be positive (got {d}, {d2})")));
        }
        Ok(match self.eos {
            Eos::ShallowWater => 0.5 * (d + d2),
            Eos::PerfectGas { gamma, cv, .. } => {
                let h = d2 - d;
                if h.abs() <= eps * d.max(d2) {
                    self.energy_density_d(0.5 * (d + d2), s)
                } else {
                    // log E(D') - log E(D) = lambda = h * mu
                    let mu = gamma * ln1p_ratio(h / d) / d - s / (cv * d * d2);
                    self.energy_density(d, s) * mu * expm1_ratio(h * mu)
                }
            }
        })
    }

    /// `(E(D, S') - E(D, S)) / (S' - S)`.
    pub fn quotient_s(&self, s: f64, s2: f64, d: f64, eps: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!("density must be positive (got {d})")));
        }
        Ok(match self.eos {
            Eos::ShallowWater => 0.0,
            Eos::PerfectGas { cv, .. } => {
                let h = s2 - s;
                if h.abs() <= eps * s.abs().max(s2.abs()).max(cv * d) {
                    self.energy_density_s(d, 0.5 * (s + s2))
                } else {
                    self.energy_density(d, s) / (cv * d) * expm1_ratio(h / (cv * d))
                }
            }
        })
    }

    /// Averaged partial quotients `(F, G)` with
    /// `F (D' - D) + G (S' - S) = E(D', S') - E(D, S)`.
    pub fn discrete_grads_baroclinic(&self, d: f64, d2: f64, s: f64, s2: f64, eps: f64) -> Result<(f64, f64)> {
        let f = 0.5 * (self.quotient_d(d, d2, s, eps)? + self.quotient_d(d, d2, s2, eps)?);
        let g = 0.5 * (self.quotient_s(s, s2, d, eps)? + self.quotient_s(s, s2, d2, eps)?);
        Ok((f, g))
    }
}

/// `ln(1 + z) / z`, continuous at 0.
fn ln1p_ratio(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 - z / 2.0 + z * z / 3.0 - z * z * z / 4.0
    } else {
        z.ln_1p() / z
    }
}

/// `(exp(z) - 1) / z`, continuous at 0.
fn expm1_ratio(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gas() -> Physics {
        Physics::perfect_gas(5.0 / 3.0, 1.0, 1.0, Potential::default())
    }

    #[test]
    fn shallow_water_examples() {
        let p = Physics::shallow_water(0.0);
        assert_eq!(p.discrete_grad_f(2.0, 2.0, 1e-10).unwrap(), 2.0);
        assert_eq!(p.discrete_grad_f(1.0, 3.0, 1e-10).unwrap(), 2.0);
        assert_eq!(p.pressure(3.0, 0.0), 4.5);
        assert!(p.discrete_grad_f(0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn perfect_gas_quotient() {
        let p = gas();
        let f = p.discrete_grad_f(1.0, 2.0, 1e-10).unwrap();
        assert!((f - (2.0 * 2f64.powf(2.0 / 3.0) - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn limits_match_derivatives() {
        let p = gas();
        for (d, s) in [(1.0, 0.0), (0.7, -0.4), (2.0, 1.3)] {
            let f = p.quotient_d(d, d, s, 1e-10).unwrap();
            let fd = (p.energy_density(d + 1e-6, s) - p.energy_density(d - 1e-6, s)) / 2e-6;
            assert!((f - fd).abs() < 1e-8 * fd.abs().max(1.0));
            let g = p.quotient_s(s, s, d, 1e-10).unwrap();
            let gd = (p.energy_density(d, s + 1e-6) - p.energy_density(d, s - 1e-6)) / 2e-6;
            assert!((g - gd).abs() < 1e-8 * gd.abs().max(1.0));
            // just above the threshold the quotient is still accurate
            let f2 = p.quotient_d(d, d * (1.0 + 1e-9), s, 1e-10).unwrap();
            assert!((f2 - f).abs() < 1e-8 * f.abs());
        }
    }

    #[test]
    fn telescoping() {
        let p = gas();
        let (d, d2, s, s2) = (1.3, 0.8, -0.2, 0.45);
        let (f, g) = p.discrete_grads_baroclinic(d, d2, s, s2, 1e-10).unwrap();
        let lhs = f * (d2 - d) + g * (s2 - s);
        let rhs = p.energy_density(d2, s2) - p.energy_density(d, s);
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn pressure_is_nonnegative() {
        let p = gas();
        for d in [0.1, 1.0, 5.0] {
            for s in [-2.0, 0.0, 2.0] {
                assert!(p.pressure(d, s) >= 0.0);
                let pd = d * d * (p.specific_energy(d * (1.0 + 1e-6), s * (1.0 + 1e-6)) - p.specific_energy(d * (1.0 - 1e-6), s * (1.0 - 1e-6))) / (2e-6 * d);
                assert!((pd - p.pressure(d, s)).abs() < 1e-6 * p.pressure(d, s).max(1.0));
            }
        }
    }
}

//! Initial data of the built-in scenarios.

use std::f64::consts::PI;
use std::sync::Arc;

use super::config::{RunConfig, Scenario};
use crate::dynamics::{Physics, SimState};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::{DgSpace, HDivSpace};

/// Discrete spaces, physics and initial state of one run.
#[derive(Clone)]
pub struct Setup {
    pub mesh: Arc<Mesh>,
    pub vel: Arc<HDivSpace>,
    pub dg: Arc<DgSpace>,
    pub physics: Physics,
    pub state: SimState,
}

/// Perturbed depth of the rotating shallow-water test.
pub fn sw_density(p: [f64; 2]) -> f64 {
    2.0 + (PI * p[0] / 2.0).sin() * (PI * p[1] / 2.0).sin()
}

fn interface(y: f64) -> f64 {
    ((y - 0.5) / 0.02).tanh()
}

pub fn rt_density(p: [f64; 2]) -> f64 {
    1.5 - 0.5 * interface(p[1])
}

pub fn rt_pressure(p: [f64; 2]) -> f64 {
    let y = p[1];
    1.5 * y + 1.25 + (0.25 - 0.5 * y) * interface(y)
}

/// Vertical velocity perturbation localized at the interface.
pub fn rt_velocity(p: [f64; 2], gamma: f64) -> [f64; 2] {
    let c = (gamma * rt_pressure(p) / rt_density(p)).sqrt();
    let bump = (-(p[1] - 0.5).powi(2) / 0.09).exp();
    [0.0, -0.025 * c * (8.0 * PI * p[0]).cos() * bump]
}

/// Entropy density consistent with `rt_pressure` under the perfect-gas law.
pub fn rt_entropy(p: [f64; 2], gamma: f64, k: f64, cv: f64) -> f64 {
    let rho = rt_density(p);
    cv * rho * (rt_pressure(p) / ((gamma - 1.0) * k * rho.powf(gamma))).ln()
}

/// Build the run described by a resolved config, optionally overriding the
/// cell side and the DG degree (the velocity order then follows `r` unless
/// the config pins it to a different value).
pub fn build(cfg: &RunConfig, h: Option<f64>, r: Option<usize>) -> Result<Setup> {
    let mesh = Arc::new(cfg.build_mesh(h)?);
    let r_cfg = cfg.r();
    let r = r.unwrap_or(r_cfg);
    let order = if cfg.order() == r_cfg { r } else { cfg.order() };
    let vel = Arc::new(HDivSpace::new(mesh.clone(), cfg.family(), order)?);
    let dg = Arc::new(DgSpace::new(mesh.clone(), r)?);
    let physics = cfg.physics()?;
    let q = cfg.projection_degree();
    let state = match cfg.scenario {
        Scenario::RotatingSw => SimState::from_functions(&vel, &dg, |_| [0.0, 0.0], sw_density, None, q)?,
        Scenario::RayleighTaylor => {
            let crate::dynamics::Eos::PerfectGas { gamma, k, cv } = physics.eos else {
                return Err(Error::Config("the Rayleigh-Taylor scenario needs the perfect-gas law".into()));
            };
            let s0 = move |p: [f64; 2]| rt_entropy(p, gamma, k, cv);
            SimState::from_functions(&vel, &dg, |p| rt_velocity(p, gamma), rt_density, Some(&s0), q)?
        }
        Scenario::Custom => {
            let ic = cfg.initial.clone().unwrap_or_default();
            let rho = |p: [f64; 2]| {
                ic.rho_mean
                    + ic.rho_amp * (ic.wavenumber[0] * p[0] + ic.phase[0]).sin() * (ic.wavenumber[1] * p[1] + ic.phase[1]).sin()
            };
            let s_mean = cfg.initial.as_ref().map_or(0.0, |i| i.s_mean);
            let s0 = move |p: [f64; 2]| s_mean * rho(p);
            let s0 = physics.has_entropy.then_some(&s0 as &dyn Fn([f64; 2]) -> f64);
            SimState::from_functions(&vel, &dg, |_| [0.0, 0.0], rho, s0, q)?
        }
    };
    Ok(Setup { mesh, vel, dg, physics, state })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rayleigh_taylor_fields_match_formulas() {
        let (g, k, cv) = (5.0 / 3.0, 1.0, 1.0);
        for &(x, y) in &[(0.1, 0.2), (0.05, 0.5), (0.2, 0.51), (0.125, 0.9)] {
            let p = [x, y];
            let t = ((y - 0.5) / 0.02f64).tanh();
            let rho = 1.5 - 0.5 * t;
            let pr = 1.5 * y + 1.25 + (0.25 - 0.5 * y) * t;
            assert!((rt_density(p) - rho).abs() < 1e-15);
            assert!((rt_pressure(p) - pr).abs() < 1e-15);
            let v = -0.025 * (g * pr / rho).sqrt() * (8.0 * PI * x).cos() * (-(y - 0.5) * (y - 0.5) / 0.09).exp();
            assert_eq!(rt_velocity(p, g)[0], 0.0);
            assert!((rt_velocity(p, g)[1] - v).abs() < 1e-15);
            let s = rt_entropy(p, g, k, cv);
            // The perfect-gas law recovers the prescribed pressure from (rho, s).
            let ph = Physics::perfect_gas(g, k, cv, Default::default());
            assert!((ph.pressure(rho, s) - pr).abs() < 1e-12 * pr);
        }
    }

    #[test]
    fn built_states_have_the_expected_mass() {
        let sw = build(&RunConfig::rotating_sw(), Some(0.5), None).unwrap();
        // The sine product integrates to zero over the symmetric square.
        assert!((sw.state.mass() - 8.0).abs() < 1e-12);
        assert!(sw.state.u.coeffs.iter().all(|&c| c == 0.0));
        let rt = build(&RunConfig::rayleigh_taylor(), Some(1.0 / 16.0), None).unwrap();
        assert!(rt.state.s.is_some());
        assert_eq!(rt.dg.degree(), 1);
        assert_eq!(rt.vel.order(), 0);
        // Mean density 1.5 over an area of 1/4; the steep interface is only
        // integrated approximately.
        assert!((rt.state.mass() - 0.375).abs() < 1e-4);
    }

    #[test]
    fn degree_override_moves_the_velocity_order() {
        let s = build(&RunConfig::rotating_sw(), Some(0.5), Some(1)).unwrap();
        assert_eq!((s.dg.degree(), s.vel.order()), (1, 1));
        let rt = build(&RunConfig::rayleigh_taylor(), Some(0.25), Some(2)).unwrap();
        assert_eq!((rt.dg.degree(), rt.vel.order()), (2, 0));
    }
}

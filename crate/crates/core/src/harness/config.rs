//! Run configuration in TOML form.
//!
//! Apart from `scenario`, every key is optional in the file; missing values are
//! filled from the scenario by [`RunConfig::resolve`], and the resolved form is
//! what gets echoed into run metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Physics, Potential, SolverOpts};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Rect};
use crate::spaces::HDivFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RotatingSw,
    RayleighTaylor,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    ShallowWater,
    PerfectGas,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// `[x0, x1, y0, y1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<[f64; 4]>,
    /// Cell side of the uniform triangulation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    /// Plain-text mesh file; overrides the structured parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesConfig {
    /// Degree of the density space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<HDivFamily>,
    /// Velocity space order; defaults to `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Quadrature degree for projecting initial data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_degree: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<Law>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a VTK snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), snapshot_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub h: f64,
    pub r: usize,
    pub dts: Vec<f64>,
    pub reference_dt: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    #[serde(default)]
    pub h: Vec<f64>,
    #[serde(default)]
    pub r: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temporal: Option<TemporalConfig>,
}

/// Initial data of the custom scenario:
/// `rho = rho_mean + rho_amp sin(k0 x + p0) sin(k1 y + p1)`, `u = 0`, and
/// `s = s_mean rho` when an entropy is carried.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub rho_mean: f64,
    pub rho_amp: f64,
    pub wavenumber: [f64; 2],
    pub phase: [f64; 2],
    pub s_mean: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { rho_mean: 1.0, rho_amp: 0.0, wavenumber: [0.0; 2], phase: [0.0; 2], s_mean: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub spaces: SpacesConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverOpts,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
}

const RT_GAMMA: f64 = 5.0 / 3.0;

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative mesh files are taken relative to the config file.
        if let (Some(f), Some(dir)) = (&cfg.mesh.file, path.parent()) {
            if f.is_relative() {
                cfg.mesh.file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Scenario defaults for the rotating shallow-water study.
    pub fn rotating_sw() -> Self {
        Self::bare(Scenario::RotatingSw).resolve().expect("built-in defaults are valid")
    }

    /// Scenario defaults for the Rayleigh-Taylor run.
    pub fn rayleigh_taylor() -> Self {
        Self::bare(Scenario::RayleighTaylor).resolve().expect("built-in defaults are valid")
    }

    fn bare(scenario: Scenario) -> Self {
        Self {
            scenario,
            mesh: MeshConfig::default(),
            spaces: SpacesConfig::default(),
            physics: PhysicsConfig::default(),
            time: TimeConfig::default(),
            solver: SolverOpts::default(),
            output: OutputConfig::default(),
            convergence: None,
            initial: None,
        }
    }

    /// Fill every unset value from the scenario defaults and validate.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        let (domain, h, r, order, phys, dt, t_end) = match c.scenario {
            Scenario::RotatingSw => (
                [-1.0, 1.0, -1.0, 1.0],
                0.25,
                0,
                None,
                PhysicsConfig {
                    law: Some(Law::ShallowWater),
                    omega: Some(1.0),
                    gamma: None,
                    k: None,
                    cv: None,
                    potential: Some(Potential::default()),
                },
                0.00625,
                0.5,
            ),
            Scenario::RayleighTaylor => (
                [0.0, 0.25, 0.0, 1.0],
                1.0 / 64.0,
                1,
                Some(0),
                PhysicsConfig {
                    law: Some(Law::PerfectGas),
                    omega: Some(0.0),
                    gamma: Some(RT_GAMMA),
                    k: Some(1.0),
                    cv: Some(1.0),
                    potential: Some(Potential { c: 0.0, x: 0.0, y: -1.0 }),
                },
                0.01,
                1.0,
            ),
            Scenario::Custom => {
                if c.physics.law.is_none() {
                    return Err(Error::Config("custom scenario needs physics.law".into()));
                }
                if c.mesh.domain.is_none() && c.mesh.file.is_none() {
                    return Err(Error::Config("custom scenario needs mesh.domain or mesh.file".into()));
                }
                if c.time.dt.is_none() || c.time.t_end.is_none() {
                    return Err(Error::Config("custom scenario needs time.dt and time.t_end".into()));
                }
                c.initial.get_or_insert_with(InitialConfig::default);
                let law = c.physics.law.unwrap();
                (
                    [0.0, 1.0, 0.0, 1.0],
                    0.25,
                    0,
                    None,
                    PhysicsConfig {
                        law: Some(law),
                        omega: Some(0.0),
                        gamma: (law == Law::PerfectGas).then_some(RT_GAMMA),
                        k: (law == Law::PerfectGas).then_some(1.0),
                        cv: (law == Law::PerfectGas).then_some(1.0),
                        potential: Some(Potential::default()),
                    },
                    0.0,
                    0.0,
                )
            }
        };
        if c.mesh.file.is_none() {
            c.mesh.domain.get_or_insert(domain);
            if c.mesh.nx.is_none() && c.mesh.ny.is_none() {
                c.mesh.h.get_or_insert(h);
            }
        }
        let r = *c.spaces.r.get_or_insert(r);
        c.spaces.family.get_or_insert(HDivFamily::Rt);
        c.spaces.order.get_or_insert(order.unwrap_or(r));
        c.spaces.projection_degree.get_or_insert(10);
        let p = &mut c.physics;
        if p.law.is_none() {
            p.law = phys.law;
        }
        p.omega.get_or_insert(phys.omega.unwrap_or(0.0));
        p.potential.get_or_insert(phys.potential.unwrap_or_default());
        if p.law == Some(Law::PerfectGas) {
            p.gamma.get_or_insert(phys.gamma.unwrap_or(RT_GAMMA));
            p.k.get_or_insert(phys.k.unwrap_or(1.0));
            p.cv.get_or_insert(phys.cv.unwrap_or(1.0));
        }
        c.time.dt.get_or_insert(dt);
        c.time.t_end.get_or_insert(t_end);
        if c.scenario != Scenario::Custom {
            c.initial = None;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.mesh.file.is_none() {
            let d = self.mesh.domain.ok_or_else(|| Error::Config("mesh.domain missing".into()))?;
            if !(d[1] > d[0] && d[3] > d[2]) {
                return Err(Error::Config(format!("empty domain {d:?}")));
            }
            match (self.mesh.h, self.mesh.nx, self.mesh.ny) {
                (Some(h), None, None) if h > 0.0 => {}
                (None, Some(nx), Some(ny)) if nx > 0 && ny > 0 => {}
                _ => return Err(Error::Config("give either mesh.h > 0 or both mesh.nx and mesh.ny".into())),
            }
        }
        if self.spaces.family == Some(HDivFamily::Bdm) && self.spaces.order == Some(0) {
            return Err(Error::Config("BDM needs order >= 1".into()));
        }
        self.physics()?.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.time.dt.unwrap_or(f64::NAN)
    }

    pub fn t_end(&self) -> f64 {
        self.time.t_end.unwrap_or(f64::NAN)
    }

    /// Number of steps; `t_end` must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        steps_for(self.dt(), self.t_end())
    }

    pub fn r(&self) -> usize {
        self.spaces.r.unwrap_or(0)
    }

    pub fn order(&self) -> usize {
        self.spaces.order.unwrap_or(self.r())
    }

    pub fn family(&self) -> HDivFamily {
        self.spaces.family.unwrap_or(HDivFamily::Rt)
    }

    pub fn projection_degree(&self) -> usize {
        self.spaces.projection_degree.unwrap_or(10)
    }

    pub fn physics(&self) -> Result<Physics> {
        let p = &self.physics;
        let potential = p.potential.unwrap_or_default();
        let omega = p.omega.unwrap_or(0.0);
        match p.law {
            Some(Law::ShallowWater) => {
                let mut ph = Physics::shallow_water(omega);
                ph.potential = potential;
                Ok(ph)
            }
            Some(Law::PerfectGas) => {
                let mut ph = Physics::perfect_gas(
                    p.gamma.unwrap_or(RT_GAMMA),
                    p.k.unwrap_or(1.0),
                    p.cv.unwrap_or(1.0),
                    potential,
                );
                ph.omega = omega;
                Ok(ph)
            }
            None => Err(Error::Config("physics.law missing".into())),
        }
    }

    /// Mesh at the configured resolution, or at cell side `h` when given.
    pub fn build_mesh(&self, h: Option<f64>) -> Result<Mesh> {
        if let Some(f) = &self.mesh.file {
            if h.is_some() {
                return Err(Error::Config("cannot refine a mesh read from file".into()));
            }
            return Mesh::load_text(f);
        }
        let d = self.mesh.domain.ok_or_else(|| Error::Config("mesh.domain missing".into()))?;
        let rect = Rect::new(d[0], d[1], d[2], d[3]);
        match (h.or(self.mesh.h), self.mesh.nx, self.mesh.ny) {
            (Some(h), _, _) if h > 0.0 => Mesh::uniform(rect, h),
            (None, Some(nx), Some(ny)) => Mesh::rectangle(rect, nx, ny),
            _ => Err(Error::Config("mesh resolution missing".into())),
        }
    }
}

/// Steps needed to reach `t_end` with step `dt`.
pub fn steps_for(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time.dt must be positive (got {dt})")));
    }
    if !(t_end >= dt) {
        return Err(Error::Config(format!("time.t_end must be at least dt (got {t_end} < {dt})")));
    }
    let n = (t_end / dt).round();
    if ((n * dt - t_end) / t_end).abs() > 1e-9 {
        return Err(Error::Config(format!("t_end = {t_end} is not a whole number of steps of {dt}")));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_configs_round_trip() {
        let mut a = RunConfig::rotating_sw();
        a.convergence = Some(ConvergenceConfig {
            h: vec![0.5, 0.25],
            r: vec![0, 1],
            reference_h: Some(0.0625),
            reference_r: Some(1),
            temporal: Some(TemporalConfig { h: 0.125, r: 1, dts: vec![0.05, 0.025], reference_dt: 0.00625 }),
        });
        for c in [a, RunConfig::rayleigh_taylor()] {
            let text = c.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(back, c, "{text}");
            assert_eq!(back.resolve().unwrap(), c);
        }
    }

    #[test]
    fn scenario_defaults() {
        let c = RunConfig::rotating_sw();
        assert_eq!(c.steps().unwrap(), 80);
        assert_eq!((c.r(), c.order()), (0, 0));
        assert_eq!(c.physics().unwrap(), Physics::shallow_water(1.0));
        let rt = RunConfig::rayleigh_taylor();
        assert_eq!((rt.r(), rt.order()), (1, 0));
        assert_eq!(rt.steps().unwrap(), 100);
        let p = rt.physics().unwrap();
        assert!(p.has_entropy);
        assert_eq!(p.potential.y, -1.0);
    }

    #[test]
    fn minimal_file() {
        let c = RunConfig::from_toml("scenario = \"rotating_sw\"\n[mesh]\nh = 0.5\n[time]\nt_end = 0.0125\n")
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(c.mesh.h, Some(0.5));
        assert_eq!(c.steps().unwrap(), 2);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            "scenario = \"rotating_sw\"\n[time]\ndt = 0.0\n",
            "scenario = \"rotating_sw\"\n[time]\ndt = 0.1\nt_end = 0.05\n",
            "scenario = \"rotating_sw\"\n[time]\ndt = 0.1\nt_end = 0.25\n",
            "scenario = \"rotating_sw\"\n[mesh]\nh = 0.5\nnx = 2\n",
            "scenario = \"rotating_sw\"\n[mesh]\nbogus = 1\n",
            "scenario = \"custom\"\n[time]\ndt = 0.1\nt_end = 0.2\n",
            "scenario = \"rayleigh_taylor\"\n[physics]\ngamma = 0.5\n",
        ];
        for b in bad {
            let r = RunConfig::from_toml(b).and_then(|c| c.resolve());
            assert!(r.is_err(), "accepted: {b}");
        }
    }
}

//! Time loop and file outputs of a single run.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use log::info;
use serde::Serialize;

use super::config::RunConfig;
use super::scenarios::{build, Setup};
use crate::dynamics::{EnergyStepper, SimState, SolverOpts};
use crate::error::{Error, Result};

/// Diagnostics after one step (or of the initial state, with zero iterations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub t: f64,
    pub energy: f64,
    pub mass: f64,
    pub entropy: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

pub struct RunOutput {
    pub records: Vec<Record>,
    pub state: SimState,
    pub quad_degree: usize,
}

impl RunOutput {
    /// Largest `|E_k / E_0 - 1|` over the series.
    pub fn max_energy_drift(&self) -> f64 {
        max_rel_drift(self.records.iter().map(|r| r.energy))
    }

    pub fn max_mass_drift(&self) -> f64 {
        max_rel_drift(self.records.iter().map(|r| r.mass))
    }

    pub fn max_entropy_drift(&self) -> Option<f64> {
        self.records[0].entropy?;
        Some(max_rel_drift(self.records.iter().map(|r| r.entropy.unwrap_or(f64::NAN))))
    }
}

fn max_rel_drift(mut xs: impl Iterator<Item = f64>) -> f64 {
    let Some(x0) = xs.next() else { return 0.0 };
    xs.fold(0.0, |m, x| m.max(((x - x0) / x0).abs()))
}

/// Advance `setup.state` by `steps` steps of size `dt`. `observe` sees the
/// step index, the new state and its record after every step, and once with
/// index 0 for the initial state.
pub fn simulate(
    setup: &Setup,
    opts: &SolverOpts,
    dt: f64,
    steps: usize,
    mut observe: impl FnMut(usize, &SimState, &Record) -> Result<()>,
) -> Result<RunOutput> {
    let mut stepper = EnergyStepper::new(setup.vel.clone(), setup.dg.clone(), setup.physics, opts.clone())?;
    let mut state = setup.state.clone();
    let record = |s: &SimState, st: &EnergyStepper, iterations, residual| -> Result<Record> {
        Ok(Record { t: s.t, energy: st.energy(s)?, mass: s.mass(), entropy: s.entropy(), iterations, residual })
    };
    let r0 = record(&state, &stepper, 0, 0.0)?;
    observe(0, &state, &r0)?;
    let mut records = vec![r0];
    for k in 1..=steps {
        let wrap = |e: Error| Error::Step { step: k, source: Box::new(e) };
        let (next, stats) = stepper.step(&state, dt).map_err(wrap)?;
        // Keep the time exact multiples of dt rather than accumulating sums.
        let next = SimState { t: setup.state.t + k as f64 * dt, ..next };
        let rec = record(&next, &stepper, stats.iterations, stats.residual).map_err(wrap)?;
        observe(k, &next, &rec)?;
        records.push(rec);
        state = next;
    }
    Ok(RunOutput { records, state, quad_degree: stepper.quad_degree() })
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a RunConfig,
    quadrature: QuadratureMeta,
    dofs: DofMeta,
}

#[derive(Serialize)]
struct QuadratureMeta {
    step: usize,
    projection: usize,
}

#[derive(Serialize)]
struct DofMeta {
    velocity: usize,
    density: usize,
    elements: usize,
}

/// Run a config and write `energy.csv`, `metadata.toml` and VTK snapshots
/// into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let cfg = cfg.resolve()?;
    let setup = build(&cfg, None, None)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let steps = cfg.steps()?;
    info!(
        "{:?}: {} elements, {} velocity + {} density unknowns, {} steps",
        cfg.scenario,
        setup.mesh.num_elements(),
        setup.vel.dim(),
        setup.dg.dim(),
        steps
    );
    let mut csv = std::io::BufWriter::new(fs::File::create(dir.join("energy.csv"))?);
    writeln!(csv, "t,E,mass,entropy,iters,residual")?;
    let every = cfg.output.snapshot_every;
    let out = simulate(&setup, &cfg.solver, cfg.dt(), steps, |k, s, r| {
        writeln!(csv, "{}", csv_row(r))?;
        if every > 0 && (k % every == 0 || k == steps) {
            write_vtk(&dir.join(format!("state_{k}.vtk")), s)?;
        }
        if k > 0 && k % 10 == 0 {
            info!("step {k}/{steps}: t = {:.4}, E = {:.12e}, {} iterations", r.t, r.energy, r.iterations);
        }
        Ok(())
    })?;
    csv.flush()?;
    let meta = Metadata {
        config: &cfg,
        quadrature: QuadratureMeta { step: out.quad_degree, projection: cfg.projection_degree() },
        dofs: DofMeta { velocity: setup.vel.dim(), density: setup.dg.dim(), elements: setup.mesh.num_elements() },
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(dir.join("metadata.toml"), text)?;
    Ok(out)
}

fn csv_row(r: &Record) -> String {
    format!(
        "{:.17e},{:.17e},{:.17e},{:.17e},{},{:.17e}",
        r.t,
        r.energy,
        r.mass,
        r.entropy.unwrap_or(f64::NAN),
        r.iterations,
        r.residual
    )
}

/// Legacy ASCII VTK file with one value per triangle, sampled at the barycenter.
pub fn write_vtk(path: &Path, s: &SimState) -> Result<()> {
    let mesh = s.d.space.mesh();
    let mut o = String::new();
    let _ = writeln!(o, "# vtk DataFile Version 3.0\nstate at t = {:.17e}\nASCII\nDATASET UNSTRUCTURED_GRID", s.t);
    let _ = writeln!(o, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(o, "{:.17e} {:.17e} 0", v[0], v[1]);
    }
    let nt = mesh.num_elements();
    let _ = writeln!(o, "CELLS {} {}", nt, 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(o, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(o, "CELL_TYPES {nt}");
    for _ in 0..nt {
        o.push_str("5\n");
    }
    let _ = writeln!(o, "CELL_DATA {nt}");
    let mut scalar = |name: &str, f: &dyn Fn(usize) -> f64| {
        let _ = writeln!(o, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for k in 0..nt {
            let _ = writeln!(o, "{:.17e}", f(k));
        }
    };
    let bc = |k: usize| mesh.geometry(k).barycenter;
    scalar("density", &|k| s.d.eval(k, bc(k)));
    if let Some(e) = &s.s {
        scalar("entropy", &|k| e.eval(k, bc(k)));
    }
    let _ = writeln!(o, "VECTORS velocity double");
    for k in 0..nt {
        let u = s.u.eval(k, bc(k));
        let _ = writeln!(o, "{:.17e} {:.17e} 0", u[0], u[1]);
    }
    fs::write(path, o)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path) -> RunConfig {
        let mut c = RunConfig::rotating_sw();
        c.mesh.h = Some(0.5);
        c.time.t_end = Some(4.0 * c.dt());
        c.output.dir = dir.to_path_buf();
        c.output.snapshot_every = 2;
        c
    }

    #[test]
    fn writes_outputs_deterministically() {
        let base = std::env::temp_dir().join(format!("varflow-run-{}", std::process::id()));
        let (a, b) = (base.join("a"), base.join("b"));
        let out = run(&small(&a)).unwrap();
        run(&small(&b)).unwrap();
        let ea = fs::read_to_string(a.join("energy.csv")).unwrap();
        assert_eq!(ea, fs::read_to_string(b.join("energy.csv")).unwrap());
        assert_eq!(ea.lines().count(), 6);
        assert!(ea.starts_with("t,E,mass,entropy,iters,residual\n"));
        for k in [0, 2, 4] {
            let v = fs::read_to_string(a.join(format!("state_{k}.vtk"))).unwrap();
            assert!(v.contains("CELL_TYPES 32"));
        }
        assert!(!a.join("state_1.vtk").exists());
        let meta: toml::Value = toml::from_str(&fs::read_to_string(a.join("metadata.toml")).unwrap()).unwrap();
        assert_eq!(meta["quadrature"]["step"].as_integer(), Some(out.quad_degree as i64));
        let echoed: RunConfig = meta["config"].clone().try_into().unwrap();
        assert_eq!(echoed, small(&a));
        assert!(out.max_energy_drift() < 1e-12);
        fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn constant_depth_is_steady() {
        let mut c = RunConfig::rotating_sw();
        c.scenario = super::super::config::Scenario::Custom;
        c.initial = Some(super::super::config::InitialConfig { rho_mean: 2.0, ..Default::default() });
        c.mesh.h = Some(0.5);
        c.time.t_end = Some(3.0 * c.dt());
        let c = c.resolve().unwrap();
        let setup = build(&c, None, None).unwrap();
        let out = simulate(&setup, &c.solver, c.dt(), 3, |_, _, _| Ok(())).unwrap();
        assert!(out.state.u.coeffs.iter().all(|v| v.abs() < 1e-12));
        let d0 = &setup.state.d.coeffs;
        assert!(out.state.d.coeffs.iter().zip(d0).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

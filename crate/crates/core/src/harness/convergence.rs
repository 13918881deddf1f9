//! Spatial and temporal convergence studies against a reference run.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{error, info};

use super::config::{steps_for, RunConfig, TemporalConfig};
use super::run::simulate;
use super::scenarios::build;
use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::quadrature::{triangle_rule, MAX_TRIANGLE_DEGREE};
use crate::spaces::element_quadrature;

/// Environment variable selecting the number of worker threads.
pub const WORKERS_VAR: &str = "VARFLOW_WORKERS";

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub r: usize,
    pub err_u: f64,
    pub err_rho: f64,
    pub order_u: Option<f64>,
    pub order_rho: Option<f64>,
    pub runtime: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalRow {
    pub dt: f64,
    pub err_u: f64,
    pub err_rho: f64,
    pub order_u: Option<f64>,
    pub order_rho: Option<f64>,
    pub runtime: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub spatial: Vec<ErrorRow>,
    pub temporal: Vec<TemporalRow>,
}

fn observed_order(e_coarse: f64, e_fine: f64, s_coarse: f64, s_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (s_coarse / s_fine).ln()
}

/// L2 norms of the velocity and density differences, integrated on the
/// elements of `fine`. Every fine element must lie inside one element of the
/// coarse mesh.
pub fn l2_errors(coarse: &SimState, fine: &SimState) -> Result<(f64, f64)> {
    let cm = coarse.d.space.mesh();
    let fm = fine.d.space.mesh();
    let p = [coarse.u.space.poly_degree(), fine.u.space.poly_degree(), coarse.d.space.degree(), fine.d.space.degree()];
    let q = (2 * p.iter().max().unwrap() + 2).min(MAX_TRIANGLE_DEGREE);
    let rule = triangle_rule(q)?;
    let (mut eu, mut ed) = (0.0, 0.0);
    for k in 0..fm.num_elements() {
        let c = fm.geometry(k).barycenter;
        let kc = cm.locate(c).ok_or_else(|| Error::NotNested(format!("fine element {k} lies outside the coarse mesh")))?;
        if !fm.corners(k).iter().all(|v| cm.contains(kc, *v, 1e-9)) {
            return Err(Error::NotNested(format!("fine element {k} straddles coarse elements")));
        }
        let (pts, wts) = element_quadrature(fm, k, &rule);
        for (x, w) in pts.iter().zip(&wts) {
            let (a, b) = (coarse.u.eval(kc, *x), fine.u.eval(k, *x));
            eu += w * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2));
            ed += w * (coarse.d.eval(kc, *x) - fine.d.eval(k, *x)).powi(2);
        }
    }
    Ok((eu.sqrt(), ed.sqrt()))
}

fn worker_count() -> usize {
    std::env::var(WORKERS_VAR).ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Run independent jobs on a small pool; results keep the job order.
fn run_jobs<T: Send>(jobs: Vec<Box<dyn FnOnce() -> Result<T> + Send + '_>>) -> Vec<Result<T>> {
    let n = jobs.len();
    let workers = worker_count().min(n.max(1));
    let slots: Vec<Mutex<Option<Box<dyn FnOnce() -> Result<T> + Send + '_>>>> =
        jobs.into_iter().map(|j| Mutex::new(Some(j))).collect();
    let results: Vec<Mutex<Option<Result<T>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let job = slots[i].lock().unwrap().take().unwrap();
                let r = job();
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

/// Final state of the config's scenario at cell side `h`, degree `r`, step `dt`.
pub fn final_state(cfg: &RunConfig, h: f64, r: usize, dt: f64) -> Result<(SimState, f64)> {
    let start = Instant::now();
    let setup = build(cfg, Some(h), Some(r))?;
    let steps = steps_for(dt, cfg.t_end())?;
    let out = simulate(&setup, &cfg.solver, dt, steps, |_, _, _| Ok(()))?;
    let secs = start.elapsed().as_secs_f64();
    info!("h = {h}, r = {r}, dt = {dt}: {steps} steps in {secs:.1} s");
    Ok((out.state, secs))
}

/// Errors at every `(h, r)` against the `(ref_h, ref_r)` run, all with the
/// config's time step.
pub fn spatial_study(cfg: &RunConfig, hs: &[f64], rs: &[usize], ref_h: f64, ref_r: usize) -> Result<Vec<ErrorRow>> {
    let cfg = cfg.resolve()?;
    if let Some(h) = hs.iter().find(|&&h| !(ref_h < h)) {
        return Err(Error::Config(format!("reference h = {ref_h} is not finer than h = {h}")));
    }
    let dt = cfg.dt();
    let mut jobs: Vec<Box<dyn FnOnce() -> Result<(SimState, f64)> + Send>> = Vec::new();
    let c = &cfg;
    jobs.push(Box::new(move || final_state(c, ref_h, ref_r, dt)));
    let cases: Vec<(f64, usize)> = rs.iter().flat_map(|&r| hs.iter().map(move |&h| (h, r))).collect();
    for &(h, r) in &cases {
        jobs.push(Box::new(move || final_state(c, h, r, dt)));
    }
    let mut results = run_jobs(jobs).into_iter();
    let (reference, _) = results.next().unwrap().inspect_err(|e| error!("reference run failed: {e}"))?;
    let mut rows: Vec<ErrorRow> = Vec::new();
    for (&(h, r), res) in cases.iter().zip(results) {
        let (state, runtime) = res?;
        let (err_u, err_rho) = l2_errors(&state, &reference)?;
        let prev = rows.last().filter(|p| p.r == r);
        rows.push(ErrorRow {
            h,
            r,
            err_u,
            err_rho,
            order_u: prev.map(|p| observed_order(p.err_u, err_u, p.h, h)),
            order_rho: prev.map(|p| observed_order(p.err_rho, err_rho, p.h, h)),
            runtime,
        });
    }
    Ok(rows)
}

/// Errors at each step size against the `reference_dt` run on the same mesh.
pub fn temporal_study(cfg: &RunConfig, t: &TemporalConfig) -> Result<Vec<TemporalRow>> {
    let cfg = cfg.resolve()?;
    if let Some(dt) = t.dts.iter().find(|&&dt| !(t.reference_dt < dt)) {
        return Err(Error::Config(format!("reference dt = {} is not smaller than dt = {dt}", t.reference_dt)));
    }
    let c = &cfg;
    let mut jobs: Vec<Box<dyn FnOnce() -> Result<(SimState, f64)> + Send>> = Vec::new();
    jobs.push(Box::new(move || final_state(c, t.h, t.r, t.reference_dt)));
    for &dt in &t.dts {
        jobs.push(Box::new(move || final_state(c, t.h, t.r, dt)));
    }
    let mut results = run_jobs(jobs).into_iter();
    let (reference, _) = results.next().unwrap().inspect_err(|e| error!("reference run failed: {e}"))?;
    let mut rows: Vec<TemporalRow> = Vec::new();
    for (&dt, res) in t.dts.iter().zip(results) {
        let (state, runtime) = res?;
        let (err_u, err_rho) = l2_errors(&state, &reference)?;
        let prev = rows.last();
        rows.push(TemporalRow {
            dt,
            err_u,
            err_rho,
            order_u: prev.map(|p| observed_order(p.err_u, err_u, p.dt, dt)),
            order_rho: prev.map(|p| observed_order(p.err_rho, err_rho, p.dt, dt)),
            runtime,
        });
    }
    Ok(rows)
}

/// Runs the studies named in the config's `convergence` section.
pub fn convergence_study(cfg: &RunConfig) -> Result<ConvergenceReport> {
    let conv = cfg.convergence.clone().ok_or_else(|| Error::Config("missing [convergence] section".into()))?;
    let mut report = ConvergenceReport::default();
    if !conv.h.is_empty() {
        let rs = if conv.r.is_empty() { vec![cfg.resolve()?.r()] } else { conv.r.clone() };
        let ref_h = conv.reference_h.ok_or_else(|| Error::Config("convergence.reference_h missing".into()))?;
        let ref_r = conv.reference_r.unwrap_or_else(|| rs.iter().max().copied().unwrap_or(0).clamp(1, 2));
        report.spatial = spatial_study(cfg, &conv.h, &rs, ref_h, ref_r)?;
    }
    if let Some(t) = &conv.temporal {
        report.temporal = temporal_study(cfg, t)?;
    }
    Ok(report)
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"))
}

impl ConvergenceReport {
    /// Writes `errors.csv` and, when a temporal study ran, `temporal.csv`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("errors.csv"))?;
        writeln!(f, "h,r,err_u,err_rho,order_u,order_rho")?;
        for r in &self.spatial {
            writeln!(f, "{},{},{:.17e},{:.17e},{},{}", r.h, r.r, r.err_u, r.err_rho, fmt_order(r.order_u), fmt_order(r.order_rho))?;
        }
        if !self.temporal.is_empty() {
            let mut f = fs::File::create(dir.join("temporal.csv"))?;
            writeln!(f, "dt,err_u,err_rho,order_u,order_rho")?;
            for r in &self.temporal {
                writeln!(f, "{},{:.17e},{:.17e},{},{}", r.dt, r.err_u, r.err_rho, fmt_order(r.order_u), fmt_order(r.order_rho))?;
            }
        }
        Ok(())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        if !self.spatial.is_empty() {
            s.push_str("     h  r        err_u      err_rho  order_u  order_rho   time[s]\n");
            for r in &self.spatial {
                s.push_str(&format!(
                    "{:>6} {:>2} {:>12.4e} {:>12.4e} {:>8} {:>10} {:>9.1}\n",
                    r.h,
                    r.r,
                    r.err_u,
                    r.err_rho,
                    r.order_u.map_or("-".into(), |v| format!("{v:.3}")),
                    r.order_rho.map_or("-".into(), |v| format!("{v:.3}")),
                    r.runtime
                ));
            }
        }
        if !self.temporal.is_empty() {
            s.push_str("       dt        err_u      err_rho  order_u  order_rho   time[s]\n");
            for r in &self.temporal {
                s.push_str(&format!(
                    "{:>9} {:>12.4e} {:>12.4e} {:>8} {:>10} {:>9.1}\n",
                    r.dt,
                    r.err_u,
                    r.err_rho,
                    r.order_u.map_or("-".into(), |v| format!("{v:.3}")),
                    r.order_rho.map_or("-".into(), |v| format!("{v:.3}")),
                    r.runtime
                ));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{Mesh, Rect};
    use crate::spaces::{DgSpace, HDivFamily, HDivSpace};
    use std::sync::Arc;

    fn state(h: f64, r: usize) -> SimState {
        let m = Arc::new(Mesh::uniform(Rect::new(-1.0, 1.0, -1.0, 1.0), h).unwrap());
        let vel = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, r).unwrap());
        let dg = Arc::new(DgSpace::new(m, r).unwrap());
        let u = |p: [f64; 2]| [(1.0 - p[0] * p[0]) * p[1], (1.0 - p[1] * p[1]) * 0.5];
        SimState::from_functions(&vel, &dg, u, |p| 1.0 + p[0] * p[1] * p[1], None, 8).unwrap()
    }

    #[test]
    fn self_comparison_is_zero() {
        let s = state(0.5, 1);
        assert_eq!(l2_errors(&s, &s).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn projection_errors_decrease_at_the_expected_rate() {
        let fine = state(1.0 / 16.0, 2);
        let e: Vec<(f64, f64)> = [0.5, 0.25].iter().map(|&h| l2_errors(&state(h, 0), &fine).unwrap()).collect();
        let od = observed_order(e[0].1, e[1].1, 0.5, 0.25);
        let ou = observed_order(e[0].0, e[1].0, 0.5, 0.25);
        assert!((od - 1.0).abs() < 0.3, "density order {od}");
        assert!((ou - 1.0).abs() < 0.3, "velocity order {ou}");
    }

    #[test]
    fn rejects_non_nested_meshes() {
        let a = state(0.5, 0);
        let m = Arc::new(Mesh::rectangle(Rect::new(-1.0, 1.0, -1.0, 1.0), 3, 3).unwrap());
        let vel = Arc::new(HDivSpace::new(m.clone(), HDivFamily::Rt, 0).unwrap());
        let dg = Arc::new(DgSpace::new(m, 0).unwrap());
        let b = SimState::from_functions(&vel, &dg, |_| [0.0, 0.0], |_| 1.0, None, 2).unwrap();
        assert!(matches!(l2_errors(&a, &b), Err(Error::NotNested(_))));
    }

    #[test]
    fn job_results_keep_their_order() {
        let jobs: Vec<Box<dyn FnOnce() -> Result<usize> + Send>> = (0..7usize).map(|i| Box::new(move || Ok(i * i)) as _).collect();
        let r: Vec<usize> = run_jobs(jobs).into_iter().map(|x| x.unwrap()).collect();
        assert_eq!(r, vec![0, 1, 4, 9, 16, 25, 36]);
    }
}

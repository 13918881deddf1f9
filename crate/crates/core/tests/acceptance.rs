//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runs without the libtest harness so the lines are
//! always visible.

use std::process::ExitCode;
use std::thread;
use std::time::Instant;

use varflow::dynamics::SolverOpts;
use varflow::harness::config::{RunConfig, TemporalConfig};
use varflow::harness::convergence::{spatial_study, temporal_study};
use varflow::harness::verify::{verify, CheckResult};
use varflow::harness::{build, simulate, RunOutput};

const ORDER_BAND_SPATIAL: (f64, f64) = (0.75, 1.5);
const ORDER_TEMPORAL: f64 = 2.0;
const ORDER_TEMPORAL_TOL: f64 = 0.25;
const ENERGY_TOL: f64 = 1e-9;
const CONSERVATION_TOL: f64 = 1e-12;
const OPERATOR_TOL: f64 = 1e-10;
const IDENTITY_TOL: f64 = 1e-10;

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

type Outcome = Result<(bool, String), String>;

fn rotating_sw() -> RunConfig {
    let mut c = RunConfig::rotating_sw();
    c.time.dt = Some(0.00625);
    c.time.t_end = Some(0.5);
    c.solver = SolverOpts { abs_tol: 1e-12, rel_tol: 1e-12, ..SolverOpts::default() };
    c.resolve().expect("valid config")
}

fn fmt_orders(o: &[Option<f64>]) -> String {
    let v: Vec<String> = o.iter().flatten().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", v.join(", "))
}

fn spatial() -> Outcome {
    let cfg = rotating_sw();
    let rows = spatial_study(&cfg, &[0.5, 0.25, 0.125], &[0, 1], 0.0625, 1).map_err(|e| e.to_string())?;
    let (lo, hi) = ORDER_BAND_SPATIAL;
    let r0: Vec<_> = rows.iter().filter(|r| r.r == 0).collect();
    let r1: Vec<_> = rows.iter().filter(|r| r.r == 1).collect();
    let ou: Vec<_> = r0.iter().map(|r| r.order_u).collect();
    let orho: Vec<_> = r0.iter().map(|r| r.order_rho).collect();
    let in_band = |o: &[Option<f64>]| o.iter().flatten().count() == 2 && o.iter().flatten().all(|&x| x >= lo && x <= hi);
    let decreasing = r1.windows(2).all(|w| w[1].err_u < w[0].err_u && w[1].err_rho < w[0].err_rho);
    let errs: Vec<String> = r1.iter().map(|r| format!("({:.2e}, {:.2e})", r.err_u, r.err_rho)).collect();
    let runtime: f64 = rows.iter().map(|r| r.runtime).sum();
    Ok((
        in_band(&ou) && in_band(&orho) && decreasing && r1.len() == 3,
        format!(
            "r=0 orders u {} rho {} (band [{lo}, {hi}]); r=1 errors (u, rho) {} strictly decreasing: {decreasing}; study runs {runtime:.0} s",
            fmt_orders(&ou),
            fmt_orders(&orho),
            errs.join(" ")
        ),
    ))
}

fn temporal() -> Outcome {
    let cfg = rotating_sw();
    let t = TemporalConfig { h: 0.125, r: 1, dts: vec![0.05, 0.025, 0.0125], reference_dt: 0.00625 };
    let rows = temporal_study(&cfg, &t).map_err(|e| e.to_string())?;
    let ou: Vec<_> = rows.iter().map(|r| r.order_u).collect();
    let orho: Vec<_> = rows.iter().map(|r| r.order_rho).collect();
    let ok = |o: &[Option<f64>]| o.iter().flatten().count() == 2 && o.iter().flatten().all(|x| (x - ORDER_TEMPORAL).abs() <= ORDER_TEMPORAL_TOL);
    Ok((
        ok(&ou) && ok(&orho),
        format!("orders u {} rho {} (expected {ORDER_TEMPORAL} +- {ORDER_TEMPORAL_TOL})", fmt_orders(&ou), fmt_orders(&orho)),
    ))
}

fn run_steps(cfg: &RunConfig, h: f64, r: Option<usize>, dt: f64, steps: usize) -> Result<RunOutput, String> {
    let setup = build(cfg, Some(h), r).map_err(|e| e.to_string())?;
    simulate(&setup, &cfg.solver, dt, steps, |_, _, _| Ok(())).map_err(|e| e.to_string())
}

fn energy() -> Outcome {
    let sw = run_steps(&rotating_sw(), 0.125, Some(1), 0.00625, 200)?;
    let mut rt = RunConfig::rayleigh_taylor();
    rt.solver = SolverOpts { abs_tol: 1e-12, rel_tol: 1e-12, ..SolverOpts::default() };
    let rt = rt.resolve().map_err(|e| e.to_string())?;
    let gas = run_steps(&rt, 1.0 / 64.0, None, 0.01, 100)?;
    let (a, b) = (sw.max_energy_drift(), gas.max_energy_drift());
    Ok((
        a <= ENERGY_TOL && b <= ENERGY_TOL,
        format!("max |E_k/E_0 - 1|: shallow water {a:.2e} (200 steps), Rayleigh-Taylor h=1/64 {b:.2e} (100 steps); tol {ENERGY_TOL:.0e}"),
    ))
}

fn conservation() -> Outcome {
    let sw = run_steps(&rotating_sw(), 0.25, Some(1), 0.00625, 1000)?;
    let rt = RunConfig::rayleigh_taylor().resolve().map_err(|e| e.to_string())?;
    let gas = run_steps(&rt, 1.0 / 16.0, None, 0.001, 1000)?;
    let m = sw.max_mass_drift().max(gas.max_mass_drift());
    let s = gas.max_entropy_drift().unwrap_or(f64::INFINITY);
    Ok((
        m <= CONSERVATION_TOL && s <= CONSERVATION_TOL,
        format!("over 1000 steps: mass drift {m:.2e} (shallow water and perfect gas), entropy drift {s:.2e}; tol {CONSERVATION_TOL:.0e}"),
    ))
}

/// Every named check must pass its own test and, when it measures an error,
/// stay within `tol`.
fn checks(names: &[&str], tol: f64) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        let res: Vec<CheckResult> = verify(Some(name)).into_iter().filter(|r| r.name == *name).collect();
        let Some(r) = res.first() else {
            return Err(format!("no check named {name}"));
        };
        let pass = r.passed && r.error.is_none_or(|e| e <= tol);
        ok &= pass;
        match r.error {
            Some(e) => parts.push(format!("{name} {e:.1e}")),
            None => parts.push(format!("{name} {}", if r.passed { "ok" } else { "failed" })),
        }
        if !pass {
            parts.push(format!("({})", r.detail));
        }
    }
    Ok((ok, parts.join(", ")))
}

fn operators() -> Outcome {
    checks(
        &[
            "a-one-zero",
            "skew-div",
            "r0-stencil",
            "hat-interpolant",
            "hat-rt0",
            "bracket-formula",
            "triple-pairing",
            "a-h-bracket",
            "kernel",
            "rank",
            "spans",
        ],
        OPERATOR_TOL,
    )
}

fn identities() -> Outcome {
    checks(&["ell-d-identity", "discrete-gradient", "time-reversal", "cayley-inverse", "cayley-richardson"], IDENTITY_TOL)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let criteria: [(usize, &'static str, fn() -> Outcome); 6] = [
        (1, "spatial convergence", spatial),
        (2, "temporal convergence", temporal),
        (3, "energy conservation", energy),
        (4, "mass and entropy conservation", conservation),
        (5, "operator properties", operators),
        (6, "scheme identities", identities),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let verdicts: Vec<Verdict> = thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .filter(|(id, name, _)| filter.as_deref().is_none_or(|f| name.contains(f) || id.to_string() == f))
            .map(|&(id, name, f)| {
                s.spawn(move || {
                    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
                    Verdict { id, name, passed, detail }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread panicked")).collect()
    });
    for v in &verdicts {
        println!("{} [{}] {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} criteria, {failed} failed, {:.0} s", verdicts.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

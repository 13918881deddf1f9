use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use varflow::harness::config::RunConfig;
use varflow::harness::{convergence_study, run, verify};

#[derive(Parser)]
#[command(version, about = "Energy-conserving finite element solvers for compressible flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write energy.csv, metadata.toml and snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spatial and temporal convergence study against a reference run.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in consistency checks.
    Verify {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// List the checks without running them.
        #[arg(long)]
        list: bool,
    },
    /// Print mesh and space sizes for a config.
    MeshInfo {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(dir) = out {
        cfg.output.dir = dir;
    }
    Ok(cfg.resolve()?)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = load(&config, out)?;
            let res = run(&cfg)?;
            let last = res.records.last().expect("at least the initial record");
            println!(
                "t = {:.6}: energy drift {:.3e}, mass drift {:.3e}{}",
                last.t,
                res.max_energy_drift(),
                res.max_mass_drift(),
                res.max_entropy_drift().map_or(String::new(), |d| format!(", entropy drift {d:.3e}"))
            );
            println!("outputs in {}", cfg.output.dir.display());
        }
        Command::Convergence { config, out } => {
            let cfg = load(&config, out)?;
            let report = convergence_study(&cfg)?;
            print!("{}", report.table());
            report.write_csv(&cfg.output.dir)?;
            println!("tables in {}", cfg.output.dir.display());
        }
        Command::Verify { filter, list } => {
            if list {
                for c in varflow::harness::verify::checks() {
                    println!("{:<20} {}", c.name, c.about);
                }
                return Ok(ExitCode::SUCCESS);
            }
            let results = verify(filter.as_deref());
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {:<20} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            println!("{} checks, {failed} failed", results.len());
            if failed > 0 || results.is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::MeshInfo { config } => {
            let cfg = load(&config, None)?;
            let setup = varflow::harness::build(&cfg, None, None)?;
            let m = &setup.mesh;
            println!("vertices       {}", m.num_vertices());
            println!("triangles      {}", m.num_elements());
            println!("edges          {} ({} interior)", m.num_edges(), m.interior_edges().len());
            println!("h_max          {:.6e}", m.h_max());
            println!("shape ratio    {:.4}", m.shape_regularity());
            println!("area           {:.12}", m.total_area());
            println!("velocity       {:?}_{}, {} unknowns", setup.vel.family(), setup.vel.order(), setup.vel.dim());
            println!("density        P_{} DG, {} unknowns", setup.dg.degree(), setup.dg.dim());
            println!("time steps     {}", cfg.steps()?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

//! Configuration, scenarios, runs, convergence studies and self-checks.

pub mod config;
pub mod convergence;
pub mod run;
pub mod scenarios;
pub mod verify;

pub use config::{RunConfig, Scenario};
pub use convergence::{convergence_study, ConvergenceReport};
pub use run::{run, simulate, Record, RunOutput};
pub use scenarios::{build, Setup};
pub use verify::{verify, CheckResult};

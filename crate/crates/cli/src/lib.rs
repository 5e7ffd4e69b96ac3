//! Scenario runner for the relaxation model.
//!
//! A scenario file names one of four kinds (`case1`, `case2`, `pde`,
//! `sweep`) and the parameters to run it with; see `docs/config-grammar.md`.
//! Every run leaves a `<name>.meta.cfg` sidecar holding the fully resolved
//! configuration, which is itself a valid scenario file.

pub mod config;
pub mod error;
pub mod scenario;
pub mod svg;

use std::path::Path;

pub use config::{Kind, ScenarioConfig};
pub use error::CliError;
pub use scenario::{run_scenario, Outcome};

/// Loads and runs `path`; with `require_sweep` the file must declare a sweep.
pub fn execute(path: &Path, out_dir: &Path, require_sweep: bool) -> Result<Outcome, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    if require_sweep && cfg.kind != Kind::Sweep {
        return Err(CliError::Config {
            origin: path.display().to_string(),
            line: 0,
            message: format!("`sweep` needs a sweep scenario, this one is {}", cfg.kind),
        });
    }
    run_scenario(&cfg, out_dir)
}

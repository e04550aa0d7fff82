//! Config loading, command dispatch and on-disk artifacts.

pub mod config;
pub mod converge;
mod run;

pub use config::{load_config, parse_config, Command, LoadedConfig, RunConfig};
pub use converge::{converge, ConvergenceReport, Level};
pub use run::{
    resolve_model, run, run_loaded, Assertion, ErrorRecord, Manifest, OutputRecord, RunResult, EXIT_ASSERTION,
    EXIT_ERROR, EXIT_OK, PRESET_NAMES, SURFACE_BLOWUP,
};

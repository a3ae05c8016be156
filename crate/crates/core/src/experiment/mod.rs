//! Configured runs: TOML input, initial data, integration, analysis and a
//! directory of output files with a checksummed manifest.

pub mod config;
pub mod initial;
pub mod run;
pub mod store;

use std::path::PathBuf;

use thiserror::Error;

use crate::integrator::IntegrateError;
use crate::regularity::RegularityError;

pub use config::{parse_config, ConfigError, ExperimentConfig, InitialKind};
pub use initial::make_initial_field;
pub use run::{
    analyze_trajectory, dispersion_csv, run_alpha_sweep, run_dispersion, run_experiment,
    verify_manifest, RunArtifacts, RunStatus, SWEEP_ALPHAS,
};
pub use store::{emit_plot_data, read_trajectory, write_trajectory};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Regularity(#[from] RegularityError),
    #[error("bad-cube count exceeds its bound at level {level}: {count} > {bound}")]
    BoundViolation {
        level: u32,
        count: usize,
        bound: f64,
    },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

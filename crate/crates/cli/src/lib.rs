//! Experiment runner: JSON configs in, report bundles out.

pub mod bundle;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod run;

pub use bundle::{validate_dir, Format, ReportBundle};
pub use config::ExperimentConfig;
pub use error::CliError;
pub use fixtures::list_fixtures;
pub use run::run;

//! Command-line driver, file formats and run manifests for `mourre-core`.

pub mod config;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod run;

pub use config::{Overrides, RunConfig};
pub use error::{exit, CliError, CliResult};
pub use manifest::{RunManifest, MANIFEST_FILE};
pub use run::{execute, Command, RunOptions};

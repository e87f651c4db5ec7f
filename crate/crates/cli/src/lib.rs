//! Pipeline commands behind the `urbangraph` binary.

pub mod bench;
pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod io;
pub mod pipeline;

pub use cli::run;
pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::{run_dataset_build, BuildManifest, ManifestCounts};
